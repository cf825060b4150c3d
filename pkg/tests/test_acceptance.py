"""End-to-end acceptance checks; each prints one PASS/FAIL line."""
from __future__ import annotations

import math
import os
import time

import numpy as np

from helpers import bright_config, conditioned_analytic_count, mean_coincidence_counts, record_criterion
from qdemux.analytics import RateModel, analytic_coincidence_rate
from qdemux.cli import predict_table
from qdemux.config import load_scenario
from qdemux.core import make_rng
from qdemux.network import (EomDrive, LOST, eom_pass_probability, eom_switch_probability,
                            expected_channel_switching, route_photons)
from qdemux.oracle import enumerate_cycle
from qdemux.report import g2_analysis, hom_analysis, switching_analysis
from qdemux.simulate import run_hom, simulate
from qdemux.source import sample_emissions

THREADS = os.cpu_count() or 1


def test_criterion_1_analytic_rates():
    targets = {1: 9.8e4, 2: 1.3e3, 3: 17.0, 4: 0.23}
    t0 = time.perf_counter()
    rows = predict_table(RateModel(), [1, 2, 3, 4])
    elapsed = time.perf_counter() - t0
    rel = {r["n"]: r["rate_hz"] / targets[r["n"]] - 1 for r in rows}
    ok = all(abs(v) <= 0.02 for v in rel.values()) and elapsed < 1.0
    detail = ", ".join(f"R({n})={r['rate_hz']:.5g} ({rel[n]:+.2%})" for n, r in zip(rel, rows))
    record_criterion(1, "closed-form rates within 2% of the reference table values", ok,
                     f"{detail}; {elapsed * 1e3:.1f} ms")
    assert elapsed < 1.0
    for n, v in rel.items():
        assert abs(v) <= 0.02, f"R({n}) off by {v:+.2%}"


def test_criterion_2_oracle_equivalence():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst, checked = 0.0, 0
    for mode in ("slow", "fast"):
        for _ in range(120):
            m = int(rng.choice([1, 2, 4]))
            eb = float(rng.uniform(0.05, 1.0))
            model = RateModel(float(rng.uniform(1e6, 1e8)), m, eb, eb * float(rng.uniform(0, 1)),
                              float(rng.uniform(0, 1)), float(rng.uniform(0, 1)), float(rng.uniform(0, 1)))
            e = enumerate_cycle(m, model, mode)
            for n in range(1, m + 1):
                closed = analytic_coincidence_rate(n, model, mode)
                exact = e.rate_hz(n)
                if closed > 0:
                    worst = max(worst, abs(exact / closed - 1))
                else:
                    worst = max(worst, abs(exact))
                checked += 1
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-9 and elapsed < 10
    record_criterion(2, "enumeration oracle equals the closed form", ok,
                     f"240 parameter sets, {checked} rates, worst rel err {worst:.2e}, {elapsed:.2f} s")
    assert worst < 1e-9 and elapsed < 10


def test_criterion_3_monte_carlo_consistency():
    cfg = load_scenario("reference_rates", environ={}).with_pulses(10**8)
    t0 = time.perf_counter()
    res = simulate(cfg, threads=THREADS)
    measured = mean_coincidence_counts(res, cfg.analysis.coincidence_window_ps)
    elapsed = time.perf_counter() - t0
    dur = cfg.pulse_clock.duration_s
    on = res.stats["on_pulses"] / res.stats["pulses"]
    parts, ok = [], elapsed < 120
    for n in range(1, 5):
        expected = conditioned_analytic_count(res, n)
        count, _ = measured[n]
        # Poisson error of one channel combination at the expected count
        z = (count - expected) / math.sqrt(expected)
        ok &= abs(z) < 3
        parts.append(f"R({n}) sim {count / dur:.4g} vs {expected / dur:.4g} Hz (z={z:+.2f})")
    record_criterion(3, "1e8-pulse Monte Carlo within 3 sigma of the closed form", ok,
                     "; ".join(parts) + f"; realised on-fraction {on:.4f}; {elapsed:.1f} s")
    assert ok


def test_criterion_4_estimator_round_trips():
    parts, ok = [], True
    hbt = load_scenario("hbt_g2", environ={})
    res = simulate(hbt, threads=THREADS)
    g2, _ = g2_analysis(hbt, res.tags)
    ok_a = abs(g2["value"] - 0.016) <= 0.003
    parts.append(f"g2 {g2['value']:.4f}+/-{g2['uncertainty']:.4f}")

    fig3 = load_scenario("switching_sync", environ={})
    res = simulate(fig3, threads=THREADS)
    sw, _ = switching_analysis(fig3, res.tags)
    eta = sw["mean_eta_sw"]["value"]
    ok_b = abs(eta - 0.946) <= 0.008
    parts.append(f"eta_sw {eta:.4f} (routing matrix {expected_channel_switching(fig3.network, 167).mean():.4f})")

    hom = load_scenario("hom_visibility", environ={})
    res = simulate(hom, threads=THREADS)
    cross = run_hom(res, 0.0, stream_block=1)
    ok_c = True
    for k, v in enumerate((0.803, 0.826, 0.774)):
        co = run_hom(res, v, stream_block=2 + k)
        rep, _ = hom_analysis(hom, co, cross, g2=0.016)
        got = rep["v_corrected"]["value"]
        ok_c &= abs(got - v) <= 0.01
        parts.append(f"V {v} -> {got:.4f}")
    ok = ok_a and ok_b and ok_c
    record_criterion(4, "g2, switching and HOM estimators recover injected values", ok, "; ".join(parts))
    assert ok_a and ok_b and ok_c


def _r_squared(x, y) -> float:
    a, b = np.polyfit(x, y, 1)
    resid = y - (a * x + b)
    return 1 - float(np.sum(resid**2) / np.sum((y - y.mean()) ** 2))


def test_criterion_5_blinking_dichotomy():
    etas = np.array([0.2, 0.4, 0.8])
    rates = {}
    for mode in ("slow", "fast"):
        r = []
        for i, eb in enumerate(etas):
            cfg = bright_config(4_000_000, 50 + i, eta_blinking=float(eb), blink_mode=mode, per_on=0.8)
            res = simulate(cfg, threads=THREADS)
            r.append(mean_coincidence_counts(res)[4][0] / cfg.pulse_clock.duration_s)
        rates[mode] = np.array(r)
    r2_slow = _r_squared(etas, rates["slow"])
    r2_fast = _r_squared(etas**4, rates["fast"])
    slope_slow = np.polyfit(np.log(etas), np.log(rates["slow"]), 1)[0]
    slope_fast = np.polyfit(np.log(etas), np.log(rates["fast"]), 1)[0]
    ok = r2_slow > 0.99 and r2_fast > 0.99 and abs(slope_slow - 1) < 0.1 and abs(slope_fast - 4) < 0.2
    record_criterion(5, "slow blinking linear, fast blinking quartic in the on-fraction", ok,
                     f"slow R2={r2_slow:.5f} log-slope {slope_slow:.3f}; fast R2(eta^4)={r2_fast:.5f} "
                     f"log-slope {slope_fast:.3f}")
    assert ok


def test_criterion_6_transfer_function_bounds():
    phase_err = np.linspace(-0.2, 0.2, 4001)
    amp_err = np.linspace(-0.1, 0.1, 4001)
    # 1 - p is evaluated in closed form; subtracting p from 1 would be round-off below |err| ~ 1e-3
    phase_drives = [EomDrive(1e6, math.pi / 2 + e) for e in phase_err]
    amp_drives = [EomDrive(1e6, math.pi / 2, 1 + e) for e in amp_err]
    worst_phase = max(eom_pass_probability(0, d) / (math.pi * e * e / 8) ** 2
                      for d, e in zip(phase_drives, phase_err) if e != 0)
    worst_amp = max(eom_pass_probability(0, d) / (math.pi * e / 4) ** 2
                    for d, e in zip(amp_drives, amp_err) if e != 0)
    consistent = max(abs(eom_switch_probability(0, d) + eom_pass_probability(0, d) - 1)
                     for d in phase_drives + amp_drives)
    ok = worst_phase <= 1.01 and worst_amp <= 1.01 and consistent < 1e-15
    record_criterion(6, "quartic phase and quadratic amplitude bounds", ok,
                     f"max (1-p)/bound: phase {worst_phase:.5f}, amplitude {worst_amp:.5f}; "
                     f"|p + (1-p) - 1| <= {consistent:.1e}")
    assert ok


def test_criterion_7_structural_invariants():
    t0 = time.perf_counter()
    cfg = bright_config(10**6, 77, er=(29.5, 44.2), transmission=0.85, efficiency=0.7,
                        dead_time_ps=22_000, per_on=0.6)
    res = simulate(cfg, threads=THREADS, keep_arrivals=range(4), block_pulses=1 << 18)
    s = res.stats
    conservation = (s["network_photons"] == s["lost_photons"] + s["exited_photons"]
                    == s["lost_photons"] + sum(a.size for a in res.arrivals.values()))
    dead = all(np.all(np.diff(res.tags[c]) >= 22_000) for c in range(4))
    ordered = all(np.all(np.diff(res.tags[c]) > 0) for c in range(4))
    twin = simulate(cfg, threads=1, keep_arrivals=range(4), block_pulses=1 << 18)
    exact = all(np.array_equal(res.tags[c], twin.tags[c]) for c in range(4))

    # disjoint time bins of correct and misrouted photons at every channel
    n_ph, pulse, delay = sample_emissions(np.arange(10**6), np.ones(10**6, bool), cfg.source, make_rng(77, 1))
    ch, _, correct = route_photons(pulse, pulse * cfg.network.period_ps + delay, cfg.network, make_rng(77, 2))
    disjoint = True
    for c in range(4):
        good = set(np.unique(pulse[(ch == c) & correct] % 4).tolist())
        bad = set(np.unique(pulse[(ch == c) & ~correct] % 4).tolist())
        disjoint &= not (good & bad)
    disjoint &= bool(np.isin(ch, [LOST, 0, 1, 2, 3]).all())
    elapsed = time.perf_counter() - t0
    ok = conservation and dead and ordered and exact and disjoint and elapsed < 10
    record_criterion(7, "structural invariants on a 1e6-pulse suite", ok,
                     f"conservation={conservation} disjoint_bins={disjoint} dead_time={dead} "
                     f"ordered={ordered} bit_exact={exact}; {elapsed:.1f} s")
    assert ok


def test_criterion_8_what_if_prediction():
    rows = predict_table(RateModel(eta_qd=0.261, eta_blinking=1.0), [4])
    r4 = rows[0]["rate_hz"]
    ok = 5e3 <= r4 <= 9e3
    record_criterion(8, "what-if four-photon rate for a bright blinking-free source", ok,
                     f"R(4)={r4:.4g} Hz (band 5e3..9e3)")
    assert ok
