"""Time-tag files.

Binary: packed little-endian records ``(channel: u8, time_ps: i64)``, 9 bytes
each, sorted by time.  CSV: header ``channel,time_ps`` then one row per tag.
JSON: ``{"channel": [...], "time_ps": [...]}``.
"""
from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np

TAG_DTYPE = np.dtype([("channel", "<u1"), ("time_ps", "<i8")])
RECORD_SIZE = TAG_DTYPE.itemsize  # 9, packed
CSV_HEADER = "channel,time_ps"


class CorruptTagFile(ValueError):
    def __init__(self, message: str, byte_offset: int):
        self.byte_offset = byte_offset
        super().__init__(f"{message} at byte offset {byte_offset}")


def merge_tags(tags_by_channel: dict) -> np.ndarray:
    """Structured array of all tags, ordered by time then channel."""
    parts = []
    for ch in sorted(tags_by_channel):
        t = np.asarray(tags_by_channel[ch], dtype=np.int64)
        rec = np.empty(t.size, dtype=TAG_DTYPE)
        rec["channel"] = ch
        rec["time_ps"] = t
        parts.append(rec)
    if not parts:
        return np.empty(0, dtype=TAG_DTYPE)
    allrec = np.concatenate(parts)
    order = np.lexsort((allrec["channel"], allrec["time_ps"]))
    return allrec[order]


def split_tags(records: np.ndarray, channels=None) -> dict:
    chans = np.unique(records["channel"]) if channels is None else channels
    return {int(c): np.ascontiguousarray(records["time_ps"][records["channel"] == c]) for c in chans}


def write_tags(path, records: np.ndarray, fmt: str = "binary") -> None:
    path = Path(path)
    if fmt == "binary":
        path.write_bytes(np.ascontiguousarray(records, dtype=TAG_DTYPE).tobytes())
    elif fmt == "csv":
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        for c, t in zip(records["channel"].tolist(), records["time_ps"].tolist()):
            buf.write(f"{c},{t}\n")
        path.write_text(buf.getvalue())
    elif fmt == "json":
        path.write_text(json.dumps({"channel": records["channel"].tolist(), "time_ps": records["time_ps"].tolist()}))
    else:
        raise ValueError(f"unknown tag format {fmt!r}")


def _check_records(records: np.ndarray, offsets) -> None:
    t = records["time_ps"]
    neg = np.flatnonzero(t < 0)
    if neg.size:
        raise CorruptTagFile("negative timestamp", int(offsets(neg[0])))
    for c in np.unique(records["channel"]):
        idx = np.flatnonzero(records["channel"] == c)
        bad = np.flatnonzero(np.diff(t[idx]) <= 0)
        if bad.size:
            raise CorruptTagFile(f"channel {int(c)} not strictly increasing", int(offsets(idx[bad[0] + 1])))


def read_tags(path, fmt: str | None = None) -> np.ndarray:
    """Read and check a tag file; format inferred from the suffix if omitted."""
    path = Path(path)
    if fmt is None:
        fmt = {".csv": "csv", ".json": "json"}.get(path.suffix.lower(), "binary")
    if fmt == "binary":
        raw = path.read_bytes()
        whole = len(raw) - len(raw) % RECORD_SIZE
        if whole != len(raw):
            raise CorruptTagFile("truncated record", whole)
        rec = np.frombuffer(raw, dtype=TAG_DTYPE).copy()
        _check_records(rec, lambda i: i * RECORD_SIZE)
        return rec
    if fmt == "csv":
        raw = path.read_bytes()
        lines = raw.split(b"\n")
        offsets = []
        pos = 0
        rows = []
        for n, line in enumerate(lines):
            start = pos
            pos += len(line) + 1
            s = line.strip()
            if n == 0:
                if s.decode(errors="replace") != CSV_HEADER:
                    raise CorruptTagFile("missing 'channel,time_ps' header", 0)
                continue
            if not s:
                continue
            try:
                c, t = s.split(b",")
                ci, ti = int(c), int(t)
                if not 0 <= ci <= 255:
                    raise ValueError
            except ValueError:
                raise CorruptTagFile("malformed row", start) from None
            rows.append((ci, ti))
            offsets.append(start)
        rec = np.empty(len(rows), dtype=TAG_DTYPE)
        if rows:
            arr = np.asarray(rows, dtype=np.int64)
            rec["channel"] = arr[:, 0]
            rec["time_ps"] = arr[:, 1]
        _check_records(rec, lambda i: offsets[i])
        return rec
    if fmt == "json":
        try:
            obj = json.loads(path.read_text())
            ch = np.asarray(obj["channel"], dtype=np.int64)
            t = np.asarray(obj["time_ps"], dtype=np.int64)
        except (ValueError, KeyError, TypeError, UnicodeDecodeError):
            raise CorruptTagFile("malformed JSON tag file", 0) from None
        if ch.shape != t.shape or ch.ndim != 1 or ((ch < 0) | (ch > 255)).any():
            raise CorruptTagFile("malformed JSON tag file", 0)
        rec = np.empty(t.size, dtype=TAG_DTYPE)
        rec["channel"] = ch
        rec["time_ps"] = t
        # JSON has no byte layout per record; offsets are record indices
        _check_records(rec, lambda i: i)
        return rec
    raise ValueError(f"unknown tag format {fmt!r}")
