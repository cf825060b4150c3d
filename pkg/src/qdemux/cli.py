"""Command line: ``qdemux simulate | analyze | predict``.

Exit codes: 0 ok, 2 configuration error, 3 I/O or tag-file error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

from . import __version__
from .analytics import (REFERENCE_INPUT_SIGMAS, RateModel, analytic_coincidence_rate,
                        analytic_rate_uncertainty)
from .config import ScenarioConfig, load_config, load_scenario, serialize
from .core import ConfigError
from .detection import HomBenchSpec
from .report import build_report, hom_analysis
from .simulate import run_hom, simulate
from .tagio import CorruptTagFile, merge_tags, read_tags, split_tags, write_tags

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3

TAG_SUFFIX = {"binary": "bin", "csv": "csv", "json": "json"}

log = logging.getLogger("qdemux")


def _load(args, overrides: dict) -> ScenarioConfig:
    if args.config and args.scenario:
        raise ConfigError(["give either --config or --scenario, not both"])
    if args.config:
        return load_config(args.config, overrides=overrides)
    return load_scenario(args.scenario or "reference_rates", overrides=overrides)


def _dump_json(obj, path: Path | None) -> None:
    text = json.dumps(obj, indent=2)
    if path is None:
        sys.stdout.write(text + "\n")
    else:
        path.write_text(text + "\n")


def cmd_simulate(args) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["rng_seed"] = args.seed
    if args.pulses is not None:
        overrides["clock.n_pulses"] = args.pulses
    cfg = _load(args, overrides)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    result = simulate(cfg, threads=args.threads)
    wall = time.perf_counter() - t0
    suffix = TAG_SUFFIX[args.format]
    write_tags(out / f"tags.{suffix}", merge_tags(result.tags), args.format)

    hom = None
    if cfg.hom is not None:
        co = run_hom(result, stream_block=0)
        cross = run_hom(result, 0.0, stream_block=1)
        write_tags(out / f"hom_co.{suffix}", merge_tags({0: co[0], 1: co[1]}), args.format)
        write_tags(out / f"hom_cross.{suffix}", merge_tags({0: cross[0], 1: cross[1]}), args.format)
        if min(len(x) for x in co + cross):
            hom, hists = hom_analysis(cfg, co, cross)
            hists[0].to_csv(out / "hom_co_histogram.csv")
            hists[1].to_csv(out / "hom_cross_histogram.csv")

    meta = {"seed": cfg.rng_seed, "n_pulses": cfg.pulse_clock.n_pulses, "threads": args.threads,
            "wall_time_s": wall, "on_fraction": result.on_fraction, "stats": result.stats,
            "version": __version__}
    report, hists = build_report(cfg, result.tags, result.duration_ps, meta, hom)
    for name, h in hists.items():
        h.to_csv(out / f"{name}_histogram.csv")
    (out / "config.cfg").write_text(serialize(cfg))
    _dump_json(report, out / "report.json")
    log.info("wrote %s", out)
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = _load(args, {})
    records = read_tags(args.tagfile)
    tags = split_tags(records, range(cfg.n_channels))
    if records.size and int(records["channel"].max()) >= cfg.n_channels:
        raise ConfigError([f"tag file has channel {int(records['channel'].max())} "
                           f"but the config has {cfg.n_channels} channels"])
    t0 = time.perf_counter()
    hom = None
    if args.hom_cross:
        if cfg.hom is None:
            cfg = replace(cfg, hom=HomBenchSpec())
        cross = split_tags(read_tags(args.hom_cross), (0, 1))
        hom, _ = hom_analysis(cfg, (tags[0], tags[1]), (cross[0], cross[1]), args.g2)
    meta = {"tag_file": str(args.tagfile), "n_tags": int(records.size), "n_pulses": cfg.pulse_clock.n_pulses,
            "seed": cfg.rng_seed, "wall_time_s": None}
    report, hists = build_report(cfg, tags, cfg.pulse_clock.duration_ps, meta, hom)
    report["run"]["wall_time_s"] = time.perf_counter() - t0
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, h in hists.items():
            h.to_csv(out / f"{name}_histogram.csv")
        _dump_json(report, out / "report.json")
    else:
        _dump_json(report, None)
    return EXIT_OK


_MODEL_FLAGS = ("rr_hz", "m", "eta_blinking", "eta_qd", "eta_routing", "eta_det", "eta_sw")


def predict_table(model: RateModel, orders, blinking: str = "slow") -> list:
    rows = []
    for n in orders:
        if n > model.m:
            raise ConfigError([f"n = {n} exceeds channel count m = {model.m}"])
        rows.append({"n": n, "rate_hz": analytic_coincidence_rate(n, model, blinking),
                     "rate_err_hz": analytic_rate_uncertainty(n, model, REFERENCE_INPUT_SIGMAS, blinking)})
    return rows


def _parse_sweep(text: str):
    name, _, values = text.partition("=")
    name = name.strip().replace("-", "_")
    if name not in _MODEL_FLAGS or not values:
        raise ConfigError([f"bad --sweep {text!r}; expected NAME=v1,v2,... with NAME in {', '.join(_MODEL_FLAGS)}"])
    cast = int if name == "m" else float
    try:
        return name, [cast(v) for v in values.split(",")]
    except ValueError:
        raise ConfigError([f"bad --sweep values in {text!r}"]) from None


def cmd_predict(args) -> int:
    base = RateModel(**{k: getattr(args, k) for k in _MODEL_FLAGS})
    orders = args.n or list(range(1, base.m + 1))
    points = [({}, base)]
    if args.sweep:
        name, values = _parse_sweep(args.sweep)
        points = [({name: v}, replace(base, **{name: v})) for v in values]
    rows = []
    for swept, model in points:
        model.validate()
        for row in predict_table(model, orders, args.blinking):
            rows.append({**swept, **row})
    if args.format == "json":
        _dump_json({"model": asdict(base), "blinking": args.blinking, "rows": rows}, None)
    elif args.format == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]) if rows else ["n", "rate_hz", "rate_err_hz"])
        w.writeheader()
        w.writerows(rows)
        sys.stdout.write(buf.getvalue())
    else:
        for r in rows:
            lead = "".join(f"{k}={v:g}  " for k, v in r.items() if k not in ("n", "rate_hz", "rate_err_hz"))
            print(f"{lead}n={r['n']}  R = {r['rate_hz']:.6g} +/- {r['rate_err_hz']:.2g} Hz")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qdemux", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add_config(sp):
        sp.add_argument("--config", help="scenario config file")
        sp.add_argument("--scenario", help="bundled scenario name (default reference_rates)")

    s = sub.add_parser("simulate", help="run the Monte Carlo and write tags plus a report")
    add_config(s)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int)
    s.add_argument("--pulses", type=int)
    s.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    s.add_argument("--format", choices=sorted(TAG_SUFFIX), default="binary", help="tag file format")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="compute rates and estimators from a tag file")
    a.add_argument("tagfile")
    add_config(a)
    a.add_argument("--out", help="output directory (default: report to stdout)")
    a.add_argument("--hom-cross", help="cross-polarised HOM tags; TAGFILE is then the co-polarised run")
    a.add_argument("--g2", type=float, help="g2(0) for the HOM correction (default: from the source model)")
    a.set_defaults(func=cmd_analyze)

    r = sub.add_parser("predict", help="closed-form n-fold rates")
    d = RateModel()
    r.add_argument("--rr-hz", dest="rr_hz", type=float, default=d.rr_hz)
    r.add_argument("--m", type=int, default=d.m)
    for name in _MODEL_FLAGS[2:]:
        r.add_argument("--" + name.replace("_", "-"), dest=name, type=float, default=getattr(d, name))
    r.add_argument("--n", type=int, action="append", help="coincidence order (repeatable; default 1..m)")
    r.add_argument("--blinking", choices=("slow", "fast"), default="slow")
    r.add_argument("--sweep", help="NAME=v1,v2,... over one model parameter")
    r.add_argument("--format", choices=("table", "json", "csv"), default="table")
    r.set_defaults(func=cmd_predict)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
            raise ConfigError(["--threads must be >= 1"])
        return args.func(args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except CorruptTagFile as exc:
        print(f"corrupt tag file: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
