"""Scenario reports shared by the ``simulate`` and ``analyze`` commands."""
from __future__ import annotations

import math

import numpy as np

from .analytics import (REFERENCE_INPUT_SIGMAS, analytic_coincidence_rate, analytic_rate_uncertainty,
                        build_histogram, hbt_g2, hom_visibility_alternative, hom_visibility_corrected,
                        hom_visibility_raw, normalized_center, switching_metrics, sync_histogram)
from .config import ScenarioConfig, to_flat
from .core import PS_PER_S
from .detection import all_coincidences
from .source import source_g2


def _rate(count: int, duration_s: float) -> dict:
    if duration_s <= 0:
        return {"count": int(count), "rate_hz": 0.0, "rate_err_hz": 0.0}
    return {"count": int(count), "rate_hz": count / duration_s, "rate_err_hz": math.sqrt(count) / duration_s}


def coincidence_table(config: ScenarioConfig, tags: dict, duration_ps: int) -> dict:
    """Singles and n-fold rates per channel combination, with the analytic column."""
    dur = duration_ps / PS_PER_S
    m = config.n_channels
    model = config.rate_model()
    a = config.analysis
    mode = config.source.blink_mode
    out = {}
    top = min(m, a.max_coincidence_order)
    for n in range(1, top + 1):
        if n == 1:
            combos = [{"channels": [c], **_rate(len(tags[c]), dur)} for c in range(m)]
        else:
            combos = [{"channels": list(r.channels), **_rate(r.count, dur)}
                      for r in all_coincidences(tags, n, a.coincidence_window_ps, duration_ps)]
        mean_count = float(np.mean([c["count"] for c in combos])) if combos else 0.0
        entry = {
            "combinations": combos,
            # per-combination Poisson error; combinations share tags, so no 1/sqrt(K)
            "mean_rate_hz": mean_count / dur if dur > 0 else 0.0,
            "mean_rate_err_hz": math.sqrt(mean_count) / dur if dur > 0 else 0.0,
            "analytic_rate_hz": analytic_coincidence_rate(n, model, mode),
            "analytic_rate_err_hz": analytic_rate_uncertainty(n, model, REFERENCE_INPUT_SIGMAS, mode),
        }
        out[str(n)] = entry
    return out


def g2_analysis(config: ScenarioConfig, tags: dict):
    a = config.analysis
    if a.hbt_channels is None:
        return None, None
    c0, c1 = a.hbt_channels
    period = config.pulse_clock.pulse_period_ps
    center = config.network.channel_delays_ps[c1] - config.network.channel_delays_ps[c0]
    span = (a.hbt_side_peaks + 0.5) * period
    # one spare bin each side so integer rounding never drops the outermost peaks
    lo = math.floor(center - span) - a.bin_width_ps
    hi = math.ceil(center + span) + a.bin_width_ps
    hist = build_histogram(tags[c0], tags[c1], a.bin_width_ps, (lo, hi),
                           meta={"start": c0, "stop": c1})
    if hist.counts.sum() == 0:
        return None, hist
    try:
        est = hbt_g2(hist, period, center_ps=center)
    except ValueError as exc:
        return {"value": None, "uncertainty": None, "error": str(exc)}, hist
    return est.as_dict(), hist


def switching_analysis(config: ScenarioConfig, tags: dict):
    a = config.analysis
    if not a.switching:
        return None, []
    clk = config.pulse_clock
    period = clk.pulse_period_ps
    cycle = a.sync_divider * period
    hists = [sync_histogram(tags[c], period, clk.n_pulses, a.sync_divider, a.bin_width_ps,
                            a.histogram_cycles * cycle, meta={"stop": c, "sync_divider": a.sync_divider})
             for c in range(config.n_channels)]
    if any(h.counts.sum() == 0 for h in hists):
        return None, hists
    return switching_metrics(hists, period, a.sync_divider).as_dict(), hists


def hom_analysis(config: ScenarioConfig, co: tuple, cross: tuple, g2: float | None = None) -> tuple:
    """Visibilities from co- and cross-polarised output tag pairs."""
    spec = config.hom
    period = config.pulse_clock.pulse_period_ps
    cycle = config.n_channels * period
    span = 2 * cycle + period // 2
    bw = config.analysis.bin_width_ps
    h_co = build_histogram(co[0], co[1], bw, (-span, span), meta={"polarisation": "co"})
    h_x = build_histogram(cross[0], cross[1], bw, (-span, span), meta={"polarisation": "cross"})
    c_par = normalized_center(h_co, 0, period)
    c_perp = normalized_center(h_x, 0, period)
    if g2 is None:
        g2 = source_g2(config.source)
    v_raw = hom_visibility_raw(c_par.value, c_perp.value)
    v_raw_err = abs(1 - v_raw) * math.sqrt(
        (c_par.uncertainty / c_par.value) ** 2 + (c_perp.uncertainty / c_perp.value) ** 2) if c_par.value else 0.0
    corr = hom_visibility_corrected(v_raw, g2, spec.reflectivity)
    center_area = h_co.integrate(-period / 2, period / 2)
    uncorrelated = [h_co.integrate(k * cycle - period / 2, k * cycle + period / 2) for k in (-2, -1, 1, 2)]
    alt = hom_visibility_alternative(center_area, float(np.mean(uncorrelated))) if np.mean(uncorrelated) else None
    scale = corr / v_raw if v_raw else 0.0
    rep = {
        "c_parallel": c_par.as_dict(), "c_perpendicular": c_perp.as_dict(),
        "v_raw": {"value": v_raw, "uncertainty": v_raw_err},
        "v_corrected": {"value": corr, "uncertainty": abs(scale) * v_raw_err},
        "v_alternative": alt, "g2_used": g2, "reflectivity": spec.reflectivity,
    }
    return rep, (h_co, h_x)


def build_report(config: ScenarioConfig, tags: dict, duration_ps: int, run_meta: dict | None = None,
                 hom: dict | None = None) -> tuple:
    """Return ``(report_dict, {name: histogram})``."""
    histograms = {}
    g2, h = g2_analysis(config, tags)
    if h is not None:
        histograms["hbt"] = h
    sw, hs = switching_analysis(config, tags)
    for c, hh in enumerate(hs):
        histograms[f"switching_ch{c}"] = hh
    report = {
        "config": to_flat(config),
        "run": dict(run_meta or {}),
        "coincidences": coincidence_table(config, tags, duration_ps),
        "g2": g2,
        "switching": sw,
        "hom": hom,
    }
    return report, histograms
