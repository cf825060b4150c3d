from __future__ import annotations

import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qdemux.analytics import (CorrelationHistogram, RateModel, analytic_coincidence_rate,
                              analytic_rate_uncertainty, build_histogram, coincidence_bracket, hbt_g2,
                              hom_visibility_alternative, hom_visibility_corrected, hom_visibility_raw,
                              normalized_center, REFERENCE_INPUT_SIGMAS, peak_class_totals, source_efficiency,
                              switching_metrics, sync_histogram)
from qdemux.config import load_scenario
from qdemux.simulate import simulate
from qdemux.tagio import read_tags, split_tags

DATA = Path(__file__).parent / "data"
PERIOD = 13123


def test_stops_at_starts_give_single_spike():
    t = np.arange(0, 10**6, 50_000)
    h = build_histogram(t, t, 100, (0, 5000))
    assert h.counts[0] == t.size and h.counts[1:].sum() == 0


def test_empty_streams_give_empty_histogram():
    h = build_histogram([], [], 100, 1000)
    assert h.counts.sum() == 0 and h.counts.size == 10


def test_four_tag_fixture():
    tags = split_tags(read_tags(DATA / "four_tags.csv"))
    h = build_histogram(tags[0], tags[1], 100, (-20_000, 20_000))
    lines = [ln for ln in (DATA / "four_tags_hist.csv").read_text().splitlines() if not ln.startswith("#")][1:]
    expected = [tuple(int(x) for x in ln.split(",")) for ln in lines]
    nz = np.flatnonzero(h.counts)
    assert list(zip(h.bin_starts_ps[nz].tolist(), h.counts[nz].tolist())) == expected
    assert h.n_starts == 2


@given(st.lists(st.integers(0, 10**7), max_size=60), st.lists(st.integers(0, 10**7), max_size=60),
       st.integers(1, 3))
def test_histogram_matches_brute_force(a, b, div):
    a, b = np.sort(np.array(a, dtype=np.int64)), np.sort(np.array(b, dtype=np.int64))
    lo, hi, bw = -30_000, 40_000, 700
    h = build_histogram(a, b, bw, (lo, hi), sync_divider=div)
    ref = np.zeros(h.counts.size, dtype=np.int64)
    for s in a[::div]:
        for t in b:
            d = t - s
            if lo <= d < hi:
                ref[(d - lo) // bw] += 1
    assert np.array_equal(h.counts, ref)


@given(st.lists(st.integers(0, 2 * 10**6), max_size=80), st.integers(1, 4))
def test_sync_histogram_equals_explicit_clock(stops, div):
    stops = np.sort(np.array(stops, dtype=np.int64))
    n_pulses = 2 * 10**6 // PERIOD
    h = sync_histogram(stops, PERIOD, n_pulses, div, 100, 2 * 4 * PERIOD)
    clock = np.arange(n_pulses, dtype=np.int64) * PERIOD
    ref = build_histogram(clock, stops, 100, 2 * 4 * PERIOD, sync_divider=div)
    assert np.array_equal(h.counts, ref.counts) and h.n_starts == ref.n_starts


def test_sync_divider_spaces_main_peaks_by_a_cycle():
    n = 4000
    stops = np.arange(0, n, 4, dtype=np.int64) * PERIOD + 500
    h = sync_histogram(stops, PERIOD, n, 4, 1, 3 * 4 * PERIOD)
    peaks = h.bin_starts_ps[np.flatnonzero(h.counts)]
    assert np.diff(peaks).tolist() == [52_492, 52_492]


def _pulsed_streams(rng, n_pulses, per_pulse):
    """Two detectors behind a 50/50 splitter; ``per_pulse(n)`` draws photon numbers."""
    k = per_pulse(n_pulses)
    to_a = rng.binomial(k, 0.5)
    to_b = k - to_a
    base = np.arange(n_pulses, dtype=np.int64) * PERIOD
    return base[to_a > 0], base[to_b > 0]


def test_g2_of_single_photons_is_zero():
    rng = np.random.default_rng(0)
    a, b = _pulsed_streams(rng, 10**6, lambda n: (rng.random(n) < 0.3).astype(int))
    h = build_histogram(a, b, 100, (-6 * PERIOD - PERIOD // 2, 6 * PERIOD + PERIOD // 2))
    assert hbt_g2(h, PERIOD).value == 0.0


def test_g2_of_coherent_light_is_one():
    rng = np.random.default_rng(1)
    a, b = _pulsed_streams(rng, 10**6, lambda n: rng.poisson(0.1, n))
    h = build_histogram(a, b, 100, (-6 * PERIOD - PERIOD // 2, 6 * PERIOD + PERIOD // 2))
    est = hbt_g2(h, PERIOD)
    # detectors click at most once per pulse, which leaves g2 = 1 for Poisson light
    assert abs(est.value - 1.0) < 3 * est.uncertainty


def test_g2_needs_three_side_peaks():
    h = build_histogram([0], [0], 100, (-2 * PERIOD, 2 * PERIOD))
    with pytest.raises(ValueError):
        hbt_g2(h, PERIOD)


def _class_hist(weights):
    """Sync histogram with class ``j`` peaks of height ``weights[j]`` over two cycles."""
    counts = np.zeros(8 * PERIOD // 100 + 1, dtype=np.int64)
    for j in range(8):
        counts[(j * PERIOD + 300) // 100] = weights[j % 4]
    return CorrelationHistogram(100, 0, counts, 1)


def test_switching_metric_fixtures():
    clean = switching_metrics([_class_hist([0, 50, 0, 0])], PERIOD, 4)
    assert clean.per_channel_eta_sw == [1.0] and math.isinf(clean.per_channel_er[0])
    half = switching_metrics([_class_hist([6, 2, 2, 2])], PERIOD, 4)
    assert half.per_channel_eta_sw[0] == 0.5 and half.per_channel_er[0] == 1.0


@given(st.lists(st.integers(1, 1000), min_size=3, max_size=3), st.integers(2000, 10**5), st.integers(0, 3))
def test_eta_sw_and_er_are_consistent(sides, main, pos):
    w = list(sides)
    w.insert(pos, main)
    res = switching_metrics([_class_hist(w)], PERIOD, 4)
    er, eta = res.per_channel_er[0], res.per_channel_eta_sw[0]
    assert eta == pytest.approx(er / (1 + er), rel=1e-12)
    assert eta == pytest.approx(main / (main + sum(sides)), rel=1e-12)


def test_coarse_bins_rejected():
    with pytest.raises(ValueError):
        peak_class_totals(CorrelationHistogram(5000, 0, np.ones(40, dtype=np.int64)), PERIOD, 4)


def test_switching_histogram_structure_from_simulation():
    cfg = load_scenario("switching_sync", environ={}).with_pulses(4 * 10**6)
    res = simulate(cfg)
    hists = [sync_histogram(res.tags[c], PERIOD, cfg.pulse_clock.n_pulses, 4, 100, 2 * 4 * PERIOD)
             for c in range(4)]
    for h in hists:
        totals, phi = peak_class_totals(h, PERIOD, 4)
        main = int(np.argmax(totals))
        # three side peaks, one at each of +13.1, +26.2 and +39.4 ns from the main peak
        sides = [totals[(main + k) % 4] for k in (1, 2, 3)]
        assert all(s > 0 for s in sides)
        assert max(sides) < 0.1 * totals[main]
    metrics = switching_metrics(hists, PERIOD, 4)
    assert metrics.mean_eta_sw == pytest.approx(0.946, abs=0.008)


def test_source_efficiency_examples():
    assert source_efficiency(425e3, 76.2e6, 0.91, 0.68) == pytest.approx(0.0090, abs=5e-5)
    assert source_efficiency(76.2e6, 76.2e6, 1, 1) == 1.0
    assert source_efficiency(0, 76.2e6, 0.91, 0.68) == 0.0


# closed-form values for the reference parameter set, evaluated independently below
FROZEN_RATES = {1: 97932.2, 2: 1252.87, 3: 16.9069, 4: 0.228389}


def _independent_rate(n, rr, m, eb, eqd, er, ed, esw):
    per = eqd / eb * er * ed
    return rr / m * eb * per**n * (esw**n + (m - 1) * ((1 - esw) / (m - 1)) ** n)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_reference_rates(n):
    model = RateModel()
    assert analytic_coincidence_rate(n, model) == pytest.approx(FROZEN_RATES[n], rel=1e-5)
    assert analytic_coincidence_rate(n, model) == pytest.approx(
        _independent_rate(n, 76.2e6, 4, 0.36, 0.009, 0.84, 0.68, 0.946), rel=1e-12)


def test_reference_rate_uncertainties_match_reference_error_bars():
    model = RateModel()
    errs = [analytic_rate_uncertainty(n, model, REFERENCE_INPUT_SIGMAS) for n in (1, 2, 3, 4)]
    assert [float(f"{e:.1g}") for e in errs] == [1e4, 3e2, 7.0, 0.1]


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_passive_limit_bracket(n):
    assert coincidence_bracket(n, 4, 0.25) == pytest.approx(4.0 ** (1 - n), rel=1e-12)


def test_ideal_rate_is_rr_over_m():
    model = RateModel(eta_blinking=1, eta_qd=1, eta_routing=1, eta_det=1, eta_sw=1)
    assert analytic_coincidence_rate(1, model) == pytest.approx(76.2e6 / 4)


def test_fast_blinking_moves_on_fraction_inside_power():
    model = RateModel()
    slow = analytic_coincidence_rate(4, model)
    fast = analytic_coincidence_rate(4, model, "fast")
    assert fast / slow == pytest.approx(0.36**3, rel=1e-12)


def test_order_above_m_rejected():
    with pytest.raises(ValueError):
        analytic_coincidence_rate(5, RateModel())


def test_hom_visibility_examples():
    assert hom_visibility_raw(0.0, 3.0) == 1.0
    assert hom_visibility_raw(2.0, 2.0) == 0.0
    assert hom_visibility_alternative(0.0, 5.0) == 1.0
    assert hom_visibility_alternative(2.5, 5.0) == 0.0
    assert hom_visibility_corrected(0.7, 0.0, 0.5) == pytest.approx(0.7)
    assert hom_visibility_corrected(-0.016, 0.016, 0.3) == pytest.approx(0.0, abs=1e-15)
    assert hom_visibility_corrected(0.7730, 0.016, 0.514) == pytest.approx(0.803, abs=5e-4)


@given(st.floats(0.0, 0.99), st.floats(0.0, 0.5), st.floats(0.05, 0.95))
def test_correction_monotone_and_balanced_minimum(v, g2, r):
    base = hom_visibility_corrected(v, g2, r)
    assert hom_visibility_corrected(v + 1e-3, g2, r) > base
    assert hom_visibility_corrected(v, g2 + 1e-3, r) > base
    assert hom_visibility_corrected(v, g2, 0.5) <= base + 1e-15


def test_normalized_center_counts_per_start():
    h = CorrelationHistogram(100, -1000, np.array([0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 4, 0, 0]), n_starts=8)
    est = normalized_center(h, 0, 1000)
    assert est.value == 0.5 and est.uncertainty == pytest.approx(0.25)


def test_rate_model_validation():
    from qdemux.core import ConfigError
    with pytest.raises(ConfigError):
        replace(RateModel(), eta_det=1.3).validate()
