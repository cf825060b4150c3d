"""Detectors, coincidence counting and the HOM beamsplitter bench."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import PS_PER_S, as_generator, check_probability

DEFAULT_COINCIDENCE_WINDOW_PS = 2_000


@dataclass(frozen=True)
class DetectorParams:
    efficiency: float = 0.68
    dead_time_ps: int = 22_000
    jitter_sigma_ps: float = 350.0

    def validate(self, errors: list, name: str = "detector") -> None:
        check_probability(f"{name}.efficiency", self.efficiency, errors)
        if self.dead_time_ps < 0:
            errors.append(f"{name}.dead_time_ps must be >= 0")
        if self.jitter_sigma_ps < 0:
            errors.append(f"{name}.jitter_sigma_ps must be >= 0")


@dataclass(frozen=True)
class HomBenchSpec:
    input_a: int = 0
    input_b: int = 1
    reflectivity: float = 0.514
    mutual_indistinguishability: float = 1.0
    relative_delay_ps: int = 0
    pairing_window_ps: int = 6_561

    def validate(self, errors: list) -> None:
        if not 0.0 < self.reflectivity < 1.0:
            errors.append("hom.reflectivity must lie in (0, 1)")
        check_probability("hom.mutual_indistinguishability", self.mutual_indistinguishability, errors)
        if self.input_a == self.input_b:
            errors.append("hom inputs must be distinct channels")
        if self.pairing_window_ps <= 0:
            errors.append("hom.pairing_window_ps must be positive")


class CoincidenceResult(NamedTuple):
    channels: tuple
    window_ps: int
    count: int
    rate_hz: float
    rate_err_hz: float

    def as_dict(self) -> dict:
        return {"channels": list(self.channels), "window_ps": int(self.window_ps),
                "count": int(self.count), "rate_hz": self.rate_hz, "rate_err_hz": self.rate_err_hz}


def _check_sorted(t: np.ndarray, what: str) -> None:
    if t.size > 1 and np.any(np.diff(t) < 0):
        raise ValueError(f"{what} must be sorted in time")


def thin_and_jitter(arrivals, params: DetectorParams, rng) -> np.ndarray:
    """Efficiency thinning plus Gaussian timing jitter (result sorted)."""
    rng = as_generator(rng)
    t = np.asarray(arrivals, dtype=np.int64)
    keep = rng.random(t.size) < params.efficiency
    t = t[keep]
    if params.jitter_sigma_ps > 0 and t.size:
        t = t + np.rint(rng.normal(0.0, params.jitter_sigma_ps, t.size)).astype(np.int64)
        t.sort(kind="stable")
        np.maximum(t, 0, out=t)
    return t


def apply_dead_time(times, dead_time_ps: int) -> np.ndarray:
    """Non-paralysable dead time on a sorted stream.

    A tag is kept when it lies at least ``dead_time_ps`` after the previous
    *kept* tag.  One detector cannot click twice in the same picosecond, so
    the effective dead time is at least 1 ps.
    """
    t = np.asarray(times, dtype=np.int64)
    dead = max(int(dead_time_ps), 1)
    if t.size < 2 or np.all(np.diff(t) >= dead):
        return t
    keep = np.zeros(t.size, dtype=bool)
    last = None
    for i, x in enumerate(t.tolist()):
        if last is None or x - last >= dead:
            keep[i] = True
            last = x
    return t[keep]


def detect(arrivals, params: DetectorParams, rng) -> np.ndarray:
    """Photon arrival times at one detector -> sorted tag times (int64 ps)."""
    t = np.asarray(arrivals, dtype=np.int64)
    _check_sorted(t, "arrivals")
    return apply_dead_time(thin_and_jitter(t, params, rng), params.dead_time_ps)


def coincidence_anchors(streams, window_ps: int) -> np.ndarray:
    """Anchor times of counted n-fold coincidences.

    Every tag is a candidate anchor; it qualifies when each stream has a tag in
    ``[anchor, anchor + window)``.  Qualified anchors are accepted in time
    order, and the tags inside an accepted window are consumed.
    """
    if window_ps <= 0:
        raise ValueError("coincidence window must be positive")
    streams = [np.asarray(s, dtype=np.int64) for s in streams]
    if not streams or any(s.size == 0 for s in streams):
        return np.empty(0, dtype=np.int64)
    for s in streams:
        _check_sorted(s, "tag stream")
    # the earliest tag of any coincidence belongs to some stream; the rarest
    # stream must also appear in the window, so anchors come from the union
    anchors = np.unique(np.concatenate(streams))
    ok = np.ones(anchors.size, dtype=bool)
    for s in streams:
        j = np.searchsorted(s, anchors, side="left")
        hit = np.zeros(anchors.size, dtype=bool)
        inside = j < s.size
        hit[inside] = s[j[inside]] < anchors[inside] + window_ps
        ok &= hit
    cand = anchors[ok]
    accepted = []
    end = None
    for a in cand.tolist():
        if end is None or a >= end:
            accepted.append(a)
            end = a + window_ps
    return np.asarray(accepted, dtype=np.int64)


def coincidence_count(streams, window_ps: int = DEFAULT_COINCIDENCE_WINDOW_PS,
                      duration_ps: int | None = None, channels=None) -> CoincidenceResult:
    """Count n-fold coincidences among ``streams``; rate uses ``duration_ps``."""
    streams = list(streams)
    count = int(coincidence_anchors(streams, window_ps).size)
    if channels is None:
        channels = tuple(range(len(streams)))
    if duration_ps:
        dur = duration_ps / PS_PER_S
        rate, err = count / dur, math.sqrt(count) / dur
    else:
        rate = err = float("nan")
    return CoincidenceResult(tuple(channels), int(window_ps), count, rate, err)


def all_coincidences(tags_by_channel: dict, n: int, window_ps: int, duration_ps: int) -> list:
    """:func:`coincidence_count` for every ``n``-subset of channels."""
    chans = sorted(tags_by_channel)
    return [coincidence_count([tags_by_channel[c] for c in combo], window_ps, duration_ps, combo)
            for combo in itertools.combinations(chans, n)]


def hom_cross_probability(reflectivity: float, indistinguishability: float) -> float:
    """Probability that a pair of photons exits through different ports."""
    r = reflectivity
    t = 1.0 - r
    return r * r + t * t - 2.0 * r * t * indistinguishability


def _pair(ta: list, tb: list, delay: int, window: int):
    """Greedy time-ordered one-to-one pairing with ``|ta - tb - delay| < window``."""
    pairs = []
    j = 0
    nb = len(tb)
    for i, x in enumerate(ta):
        while j < nb and tb[j] + delay <= x - window:
            j += 1
        if j < nb and abs(x - tb[j] - delay) < window:
            pairs.append((i, j))
            j += 1
    return pairs


def hom_merge(tags_a, tags_b, spec: HomBenchSpec, rng, pairing_window_ps: int | None = None):
    """Two-photon interference at a beamsplitter with reflectivity R.

    Input ``a`` reflects into output 1, input ``b`` reflects into output 2.
    Time-paired photons leave through different ports with probability
    ``R^2 + T^2 - 2RT V`` and otherwise bunch into one port (either port with
    equal weight).  Unpaired photons split independently.  Photons from ``b``
    are shifted by ``relative_delay_ps``.  Returns sorted ``(out1, out2)``.
    """
    rng = as_generator(rng)
    a = np.asarray(tags_a, dtype=np.int64)
    b = np.asarray(tags_b, dtype=np.int64)
    _check_sorted(a, "tags_a")
    _check_sorted(b, "tags_b")
    window = spec.pairing_window_ps if pairing_window_ps is None else pairing_window_ps
    delay = int(spec.relative_delay_ps)
    b_arr = b + delay
    pairs = _pair(a.tolist(), b.tolist(), delay, window)
    ia = np.fromiter((p[0] for p in pairs), dtype=np.int64, count=len(pairs))
    ib = np.fromiter((p[1] for p in pairs), dtype=np.int64, count=len(pairs))
    r = spec.reflectivity
    t = 1.0 - r
    # a_to_1 / b_to_1 for every photon
    a_to_1 = rng.random(a.size) < r
    b_to_1 = rng.random(b.size) < t
    if pairs:
        u = rng.random(len(pairs))
        cross = u < hom_cross_probability(r, spec.mutual_indistinguishability)
        # a cross pair is (a->1, b->2) with weight R^2 or (a->2, b->1) with T^2
        side = rng.random(len(pairs))
        a1_cross = side < r * r / (r * r + t * t)
        a1_bunch = side < 0.5
        pa = np.where(cross, a1_cross, a1_bunch)
        pb = np.where(cross, ~a1_cross, a1_bunch)
        a_to_1[ia] = pa
        b_to_1[ib] = pb
    out1 = np.sort(np.concatenate((a[a_to_1], b_arr[b_to_1])), kind="stable")
    out2 = np.sort(np.concatenate((a[~a_to_1], b_arr[~b_to_1])), kind="stable")
    return out1, out2
