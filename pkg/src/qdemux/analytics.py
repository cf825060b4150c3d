"""Correlation histograms, estimators and the closed-form rate model."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .core import ConfigError, check_probability

_CHUNK = 1 << 20


@dataclass
class CorrelationHistogram:
    bin_width_ps: int
    origin_ps: int
    counts: np.ndarray
    n_starts: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def bin_starts_ps(self) -> np.ndarray:
        return self.origin_ps + self.bin_width_ps * np.arange(self.counts.size, dtype=np.int64)

    @property
    def bin_centers_ps(self) -> np.ndarray:
        return self.bin_starts_ps + self.bin_width_ps / 2.0

    def integrate(self, lo_ps: float, hi_ps: float) -> int:
        """Counts in bins whose centre lies in ``[lo, hi)``."""
        c = self.bin_centers_ps
        return int(self.counts[(c >= lo_ps) & (c < hi_ps)].sum())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_start_ps", "count"])
            for s, n in zip(self.bin_starts_ps.tolist(), self.counts.tolist()):
                w.writerow([s, n])


def _range(range_ps):
    if np.isscalar(range_ps):
        return 0, int(range_ps)
    lo, hi = range_ps
    return int(lo), int(hi)


def build_histogram(start_tags, stop_tags, bin_width_ps: int, range_ps, sync_divider: int = 1,
                    meta: dict | None = None) -> CorrelationHistogram:
    """Start-stop histogram of ``stop - start`` over ``[lo, hi)``.

    Every ``sync_divider``-th start is kept.  Each kept start is paired with
    every stop falling inside the range (a scalar range means ``[0, hi)``,
    i.e. only subsequent stops).
    """
    if sync_divider < 1:
        raise ValueError("sync_divider must be >= 1")
    if bin_width_ps <= 0:
        raise ValueError("bin width must be positive")
    lo, hi = _range(range_ps)
    nbins = int(math.ceil((hi - lo) / bin_width_ps))
    counts = np.zeros(nbins, dtype=np.int64)
    starts = np.asarray(start_tags, dtype=np.int64)[::sync_divider]
    stops = np.asarray(stop_tags, dtype=np.int64)
    if starts.size and stops.size:
        for k in range(0, starts.size, _CHUNK):
            s = starts[k:k + _CHUNK]
            j0 = np.searchsorted(stops, s + lo, side="left")
            j1 = np.searchsorted(stops, s + hi, side="left")
            n = j1 - j0
            total = int(n.sum())
            if total == 0:
                continue
            owner = np.repeat(np.arange(s.size), n)
            offs = np.arange(total) - np.repeat(np.cumsum(n) - n, n)
            d = stops[j0[owner] + offs] - s[owner]
            counts += np.bincount((d - lo) // bin_width_ps, minlength=nbins)[:nbins]
    return CorrelationHistogram(int(bin_width_ps), lo, counts, int(starts.size), dict(meta or {}))


def sync_histogram(stop_tags, period_ps: int, n_pulses: int, sync_divider: int, bin_width_ps: int,
                   range_ps, meta: dict | None = None) -> CorrelationHistogram:
    """:func:`build_histogram` with the laser clock as start channel.

    Starts are pulse times ``i * period`` for ``i = 0, d, 2d, ... < n_pulses``;
    they are never materialised, so runs of 1e8 pulses stay cheap.
    """
    lo, hi = _range(range_ps)
    if lo < 0:
        raise ValueError("sync histograms only look forward")
    nbins = int(math.ceil((hi - lo) / bin_width_ps))
    counts = np.zeros(nbins, dtype=np.int64)
    stops = np.asarray(stop_tags, dtype=np.int64)
    D = int(period_ps) * int(sync_divider)
    last_start = ((n_pulses - 1) // sync_divider) if n_pulses > 0 else -1
    if stops.size and last_start >= 0:
        k_hi = np.minimum(stops // D, last_start)      # latest start index <= t
        d = stops - k_hi * D
        k = k_hi.copy()
        while True:
            ok = (k >= 0) & (d < hi)
            if not ok.any():
                break
            sel = ok & (d >= lo)
            counts += np.bincount((d[sel] - lo) // bin_width_ps, minlength=nbins)[:nbins]
            k = k - 1
            d = d + D
    n_starts = last_start + 1 if last_start >= 0 else 0
    return CorrelationHistogram(int(bin_width_ps), lo, counts, int(n_starts), dict(meta or {}))


@dataclass
class Estimate:
    value: float
    uncertainty: float

    def as_dict(self) -> dict:
        return {"value": self.value, "uncertainty": self.uncertainty}


def peak_areas(hist: CorrelationHistogram, centers_ps, half_width_ps: float) -> np.ndarray:
    return np.array([hist.integrate(c - half_width_ps, c + half_width_ps) for c in centers_ps])


def hbt_g2(histogram: CorrelationHistogram, period_ps: int, integration_window_ps: float | None = None,
           center_ps: float = 0.0) -> Estimate:
    """g2(0) as centre-peak area over mean side-peak area.

    Peaks sit at ``center_ps + k * period_ps``; every side peak whose
    integration window lies fully inside the histogram is used (at least three
    per side are required).
    """
    half = (integration_window_ps if integration_window_ps is not None else period_ps) / 2.0
    lo = histogram.origin_ps
    hi = lo + histogram.bin_width_ps * histogram.counts.size
    k_neg = int(math.floor((center_ps - half - lo) / period_ps))
    k_pos = int(math.floor((hi - center_ps - half) / period_ps))
    if k_neg < 3 or k_pos < 3:
        raise ValueError("histogram must span at least three side peaks on each side")
    sides = [center_ps + k * period_ps for k in range(-k_neg, k_pos + 1) if k != 0]
    center = histogram.integrate(center_ps - half, center_ps + half)
    side = peak_areas(histogram, sides, half)
    if side.sum() == 0:
        raise ValueError("side peaks are empty")
    mean_side = side.mean()
    g2 = center / mean_side
    # Poisson errors on the centre and on the pooled side counts
    rel = math.sqrt((1.0 / center if center else 0.0) + 1.0 / side.sum())
    err = g2 * rel if center else 1.0 / mean_side
    return Estimate(float(g2), float(err))


@dataclass
class SwitchingMetrics:
    per_channel_er: list
    per_channel_eta_sw: list
    per_channel_eta_sw_err: list
    mean_eta_sw: float
    std_eta_sw: float

    def as_dict(self) -> dict:
        return {
            "per_channel_er": [float(x) for x in self.per_channel_er],
            "per_channel_eta_sw": [{"value": float(v), "uncertainty": float(e)}
                                   for v, e in zip(self.per_channel_eta_sw, self.per_channel_eta_sw_err)],
            "mean_eta_sw": {"value": self.mean_eta_sw, "uncertainty": self.std_eta_sw},
        }


def peak_phase(hist: CorrelationHistogram, period_ps: int, n_phase_bins: int = 128) -> float:
    """Offset (mod ``period_ps``) of the periodic peak comb."""
    ph = np.mod(hist.bin_centers_ps, period_ps)
    idx = np.minimum((ph / period_ps * n_phase_bins).astype(int), n_phase_bins - 1)
    folded = np.bincount(idx, weights=hist.counts, minlength=n_phase_bins)
    return (np.argmax(folded) + 0.5) * period_ps / n_phase_bins


def peak_class_totals(hist: CorrelationHistogram, period_ps: int, m: int) -> tuple:
    """Counts per peak class ``j mod m`` and the comb phase.

    Each bin is attributed to its nearest comb peak (windows of +-period/2
    tile the axis); classes are labelled relative to the first peak at or
    after the histogram origin.
    """
    if hist.bin_width_ps * 4 > period_ps:
        raise ValueError("bin width too coarse to resolve the peak comb")
    phi = peak_phase(hist, period_ps)
    j = np.rint((hist.bin_centers_ps - phi) / period_ps).astype(np.int64)
    totals = np.bincount(np.mod(j, m), weights=hist.counts, minlength=m)
    return totals, phi


def switching_metrics(histograms, period_ps: int, m: int) -> SwitchingMetrics:
    """Per-channel ER and switching efficiency from sync start-stop histograms.

    The histograms must cover whole switching cycles.  Per channel the main
    peak class is the largest; ``ER = main / sum(sides)`` and
    ``eta_sw = main / (main + sum(sides))``.
    """
    ers, etas, errs = [], [], []
    for h in histograms:
        totals, _ = peak_class_totals(h, period_ps, m)
        main_idx = int(np.argmax(totals))
        main = float(totals[main_idx])
        side = float(totals.sum() - main)
        if main + side == 0:
            raise ValueError("empty switching histogram")
        ers.append(main / side if side > 0 else math.inf)
        eta = main / (main + side)
        etas.append(eta)
        errs.append(math.sqrt(eta * (1 - eta) / (main + side)) if 0 < eta < 1 else 1.0 / (main + side))
    etas_a = np.asarray(etas)
    std = float(etas_a.std(ddof=1)) if etas_a.size > 1 else 0.0
    return SwitchingMetrics(ers, etas, errs, float(etas_a.mean()), std)


def source_efficiency(r_det_hz: float, rr_hz: float, eta_ch1: float, eta_det: float) -> float:
    """Fiber-coupled source efficiency from the detected single-channel rate."""
    if rr_hz <= 0 or eta_ch1 <= 0 or eta_det <= 0:
        raise ZeroDivisionError("rate and efficiencies must be positive")
    if r_det_hz < 0 or eta_ch1 > 1 or eta_det > 1:
        raise ValueError("efficiencies must lie in (0, 1]")
    return r_det_hz / rr_hz / (eta_ch1 * eta_det)


@dataclass(frozen=True)
class RateModel:
    rr_hz: float = 76.2e6
    m: int = 4
    eta_blinking: float = 0.36
    eta_qd: float = 0.0090
    eta_routing: float = 0.84
    eta_det: float = 0.68
    eta_sw: float = 0.946

    def validate(self) -> "RateModel":
        errors: list = []
        for f in ("eta_blinking", "eta_qd", "eta_routing", "eta_det", "eta_sw"):
            check_probability(f, getattr(self, f), errors)
        if self.rr_hz <= 0:
            errors.append("repetition rate must be positive")
        if self.m < 1:
            errors.append("m must be >= 1")
        if self.eta_qd > self.eta_blinking:
            errors.append("eta_qd must not exceed eta_blinking")
        if errors:
            raise ConfigError(errors)
        return self


# spread of the measured inputs, used for the calculated-rate uncertainty
REFERENCE_INPUT_SIGMAS = {"eta_qd": 0.0009, "eta_routing": 0.03, "eta_det": 0.05, "eta_sw": 0.008}


def coincidence_bracket(n: int, m: int, eta_sw: float) -> float:
    """Correct-routing plus uniformly-misrouted n-fold weight (1 for ``m == 1``)."""
    if m == 1:
        return 1.0
    return eta_sw**n + (m - 1) * ((1.0 - eta_sw) / (m - 1)) ** n


def analytic_coincidence_rate(n: int, model: RateModel, blinking: str = "slow") -> float:
    """Detected n-fold coincidence rate of n distinct channels.

    ``blinking="slow"``: the emitter is on or off for a whole cycle, so the
    on-fraction enters once.  ``"fast"``: blinking is uncorrelated pulse to
    pulse and enters with the power n.
    """
    if not 1 <= n <= model.m:
        raise ValueError(f"need 1 <= n <= m (n={n}, m={model.m})")
    per_photon = model.eta_qd / model.eta_blinking * model.eta_routing * model.eta_det
    bracket = coincidence_bracket(n, model.m, model.eta_sw)
    if blinking == "slow":
        return model.rr_hz / model.m * model.eta_blinking * per_photon**n * bracket
    if blinking == "fast":
        return model.rr_hz / model.m * (model.eta_qd * model.eta_routing * model.eta_det) ** n * bracket
    raise ValueError(f"unknown blinking mode {blinking!r}")


def analytic_rate_uncertainty(n: int, model: RateModel, sigmas: dict, blinking: str = "slow") -> float:
    """Linear propagation of independent input errors (central differences)."""
    var = 0.0
    for name, s in sigmas.items():
        if not s:
            continue
        x = getattr(model, name)
        h = max(abs(x), 1e-12) * 1e-6
        up = analytic_coincidence_rate(n, _with(model, name, x + h), blinking)
        dn = analytic_coincidence_rate(n, _with(model, name, x - h), blinking)
        var += ((up - dn) / (2 * h) * s) ** 2
    return math.sqrt(var)


def _with(model: RateModel, name: str, value: float) -> RateModel:
    kw = {f.name: getattr(model, f.name) for f in fields(model)}
    kw[name] = value
    return RateModel(**kw)


def hom_visibility_raw(c_parallel: float, c_perpendicular: float) -> float:
    if c_perpendicular == 0:
        raise ZeroDivisionError("cross-polarised centre area is zero")
    return 1.0 - c_parallel / c_perpendicular


def hom_visibility_alternative(center_area: float, mean_uncorrelated_area: float) -> float:
    """Visibility from the centre area relative to the uncorrelated peaks."""
    if mean_uncorrelated_area == 0:
        raise ZeroDivisionError("uncorrelated peak area is zero")
    return 1.0 - 2.0 * center_area / mean_uncorrelated_area


def hom_visibility_corrected(v_raw: float, g2_zero: float, reflectivity: float) -> float:
    """Indistinguishability corrected for multi-photon events and BS imbalance."""
    if not 0.0 < reflectivity < 1.0:
        raise ValueError("reflectivity must lie strictly between 0 and 1")
    if g2_zero >= 1.0:
        raise ValueError("g2(0) must be < 1")
    r = reflectivity
    t = 1.0 - r
    return (v_raw + g2_zero) / (1.0 - g2_zero) * (r * r + t * t) / (2 * r * t)


def normalized_center(hist: CorrelationHistogram, center_ps: float, period_ps: int) -> Estimate:
    """Centre-peak area per accumulated start event."""
    c = hist.integrate(center_ps - period_ps / 2, center_ps + period_ps / 2)
    n = max(hist.n_starts, 1)
    return Estimate(c / n, math.sqrt(c) / n)
