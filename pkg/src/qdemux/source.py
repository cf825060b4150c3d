"""Pulsed quantum-dot emitter: Rabi excitation, telegraph blinking, emission.

The emitter is described by :class:`SourceParams`.  Blinking is a two-state
telegraph process with exponential dwell times, sampled at pulse times.  A
pulse that finds the emitter *on* is occupied with probability ``eta_pop``;
a fraction ``multiphoton_prob`` of all on-pulses carries a second photon
(re-excitation), which is emitted after the first.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import PulseClock, as_generator, check_probability

BLINK_SLOW = "slow"
BLINK_FAST = "fast"


@dataclass(frozen=True)
class SourceParams:
    eta_pop: float = 0.909
    pulse_area_rad: float = math.pi
    rabi_damping: float = 0.03036
    eta_blinking: float = 0.36
    blink_on_dwell_ps: float = 0.5625e9
    blink_off_dwell_ps: float = 1.0e9
    # slow: telegraph with the dwell times above; fast: independent per pulse
    blink_mode: str = BLINK_SLOW
    multiphoton_prob: float = 0.0
    lifetime_ps: float = 167.0
    eta_extr: float = 0.12
    eta_optics: float | None = None
    eta_fibercoup: float = 0.60
    eta_qd: float = 0.0090

    @property
    def network_survival(self) -> float:
        """Probability that an emitted photon reaches the routing input.

        Chosen so the mean photon number entering the network per on-pulse
        equals ``eta_qd / eta_blinking``.
        """
        per_on = self.eta_qd / self.eta_blinking
        emitted = self.eta_pop + self.multiphoton_prob
        return per_on / emitted if emitted > 0 else 0.0

    def validate(self, errors: list) -> None:
        for name in ("eta_pop", "eta_blinking", "multiphoton_prob", "eta_extr",
                     "eta_fibercoup", "eta_qd"):
            check_probability(f"source.{name}", getattr(self, name), errors)
        if self.eta_optics is not None:
            check_probability("source.eta_optics", self.eta_optics, errors)
        if self.pulse_area_rad < 0 or self.rabi_damping < 0:
            errors.append("source pulse area and damping must be non-negative")
        if self.blink_on_dwell_ps <= 0 or self.blink_off_dwell_ps <= 0:
            errors.append("blink dwell times must be positive")
        elif self.blink_mode == BLINK_SLOW:
            frac = self.blink_on_dwell_ps / (self.blink_on_dwell_ps + self.blink_off_dwell_ps)
            if abs(frac - self.eta_blinking) > 1e-9:
                errors.append(f"eta_blinking={self.eta_blinking} inconsistent with dwell ratio {frac:.12g}")
        if self.blink_mode not in (BLINK_SLOW, BLINK_FAST):
            errors.append(f"unknown blink_mode {self.blink_mode!r}")
        if self.multiphoton_prob > self.eta_pop:
            errors.append("multiphoton_prob must not exceed eta_pop")
        if self.eta_qd > self.eta_blinking:
            errors.append("eta_qd must not exceed eta_blinking")
        if self.lifetime_ps < 0:
            errors.append("lifetime must be non-negative")
        if not errors and self.network_survival > 1.0 + 1e-12:
            errors.append("eta_qd/eta_blinking exceeds the emitted photon number per on-pulse")


class EmissionOutcome(NamedTuple):
    n_photons: int
    delays_ps: tuple
    qd_was_on: bool


def excitation_probability(pulse_area_rad: float, rabi_damping: float) -> float:
    """Damped Rabi population ``sin^2(theta/2) * exp(-theta * damping)``."""
    if pulse_area_rad < 0 or rabi_damping < 0:
        raise ValueError("pulse area and damping must be non-negative")
    return math.sin(pulse_area_rad / 2.0) ** 2 * math.exp(-pulse_area_rad * rabi_damping)


def damping_for_population(eta_pop: float) -> float:
    """Damping constant giving ``eta_pop`` at a pi pulse."""
    return -math.log(eta_pop) / math.pi


def multiphoton_prob_for_g2(g2: float, eta_pop: float) -> float:
    """Second-photon probability giving ``g2`` for the nested emission model.

    Solves ``2 p2 / (eta_pop + p2)^2 = g2`` for the small root.
    """
    if g2 <= 0:
        return 0.0
    # g2 p^2 + (2 g2 eta - 2) p + g2 eta^2 = 0
    a, b, c = g2, 2 * g2 * eta_pop - 2.0, g2 * eta_pop**2
    # small root in the cancellation-free form 2c / (-b + sqrt(disc))
    return 2 * c / (-b + math.sqrt(b * b - 4 * a * c))


def source_g2(params) -> float:
    """Zero-delay g2 of the nested emission model."""
    occ = params.eta_pop + params.multiphoton_prob
    return 2.0 * params.multiphoton_prob / occ**2 if occ > 0 else 0.0


class BlinkingTrace:
    """Telegraph on/off trajectory, queried at arbitrary times.

    ``transitions_ps`` are the switching instants; the state before the first
    one is ``initial_on``.  For ``blink_mode == "fast"`` the trace is
    memoryless per pulse and :meth:`on_at_pulses` needs a generator.
    """

    def __init__(self, initial_on: bool, transitions_ps: np.ndarray, duration_ps: float,
                 mode: str = BLINK_SLOW, eta_blinking: float = 1.0):
        self.initial_on = bool(initial_on)
        self.transitions_ps = np.asarray(transitions_ps, dtype=float)
        self.duration_ps = float(duration_ps)
        self.mode = mode
        self.eta_blinking = eta_blinking

    def on_at(self, t_ps) -> np.ndarray:
        n = np.searchsorted(self.transitions_ps, np.asarray(t_ps, dtype=float), side="right")
        return (n % 2 == 0) == self.initial_on

    def on_at_pulses(self, first: int, stop: int, clock: PulseClock, rng=None) -> np.ndarray:
        if self.mode == BLINK_FAST:
            return as_generator(rng).random(stop - first) < self.eta_blinking
        t = np.arange(first, stop, dtype=np.int64) * clock.pulse_period_ps
        return self.on_at(t)

    def on_fraction(self) -> float:
        """Exact time-averaged on fraction over ``[0, duration]``."""
        if self.mode == BLINK_FAST:
            return self.eta_blinking
        edges = np.concatenate(([0.0], self.transitions_ps[self.transitions_ps < self.duration_ps],
                                [self.duration_ps]))
        spans = np.diff(edges)
        on = self.initial_on
        total = spans[0::2].sum() if on else spans[1::2].sum()
        return float(total / self.duration_ps) if self.duration_ps > 0 else float(on)


def telegraph_trace(duration_ps: float, params: SourceParams, rng) -> BlinkingTrace:
    """Draw a full telegraph trajectory covering ``duration_ps``."""
    rng = as_generator(rng)
    if params.blink_mode == BLINK_FAST:
        return BlinkingTrace(True, np.empty(0), duration_ps, BLINK_FAST, params.eta_blinking)
    on_mean, off_mean = params.blink_on_dwell_ps, params.blink_off_dwell_ps
    p_on = on_mean / (on_mean + off_mean)
    initial_on = rng.random() < p_on
    chunks = []
    t, state = 0.0, initial_on
    mean_cycle = on_mean + off_mean
    while t <= duration_ps:
        # draw dwell pairs in batches; alternate means starting from the current state
        k = max(16, int(2 * (duration_ps - t) / mean_cycle) + 16)
        first = on_mean if state else off_mean
        second = off_mean if state else on_mean
        means = np.empty(2 * k)
        means[0::2], means[1::2] = first, second
        # residual first dwell is exponential too (memoryless)
        dwell = rng.exponential(1.0, size=2 * k) * means
        ends = t + np.cumsum(dwell)
        chunks.append(ends)
        # even number of dwells per batch: state at t is unchanged
        t = float(ends[-1])
    transitions = np.concatenate(chunks)
    transitions = transitions[: np.searchsorted(transitions, duration_ps, side="right") + 1]
    return BlinkingTrace(initial_on, transitions, duration_ps, BLINK_SLOW, params.eta_blinking)


def sample_blinking_trace(clock: PulseClock, params: SourceParams, rng) -> np.ndarray:
    """Per-pulse on/off sequence for the whole clock."""
    rng = as_generator(rng)
    trace = telegraph_trace(clock.duration_ps, params, rng)
    return trace.on_at_pulses(0, clock.n_pulses, clock, rng)


def sample_emission(pulse_index: int, on: bool, params: SourceParams, rng) -> EmissionOutcome:
    """Photon number and emission delays for one pulse."""
    if not on:
        return EmissionOutcome(0, (), False)
    rng = as_generator(rng)
    u = rng.random()
    n = 2 if u < params.multiphoton_prob else (1 if u < params.eta_pop else 0)
    delays = []
    t = 0.0
    for _ in range(n):
        t += rng.exponential(params.lifetime_ps)
        delays.append(int(round(t)))
    return EmissionOutcome(n, tuple(delays), True)


def sample_emissions(pulse_index: np.ndarray, on: np.ndarray, params: SourceParams, rng):
    """Vectorised :func:`sample_emission` over many pulses.

    Returns ``(n_photons, photon_pulse, photon_delay_ps)``: the per-pulse photon
    number and one entry per emitted photon (pulse index, delay).
    """
    rng = as_generator(rng)
    pulse_index = np.asarray(pulse_index, dtype=np.int64)
    on = np.asarray(on, dtype=bool)
    u = rng.random(pulse_index.size)
    n = np.where(u < params.multiphoton_prob, 2, np.where(u < params.eta_pop, 1, 0))
    n[~on] = 0
    first = n >= 1
    second = n == 2
    d1 = rng.exponential(params.lifetime_ps, size=int(first.sum()))
    d2_extra = rng.exponential(params.lifetime_ps, size=int(second.sum()))
    # second photon follows the first from the same pulse
    d1_of_second = d1[second[first]]
    photon_pulse = np.concatenate((pulse_index[first], pulse_index[second]))
    photon_delay = np.concatenate((d1, d1_of_second + d2_extra))
    order = np.argsort(photon_pulse, kind="stable")
    return n, photon_pulse[order], np.rint(photon_delay[order]).astype(np.int64)


def write_emission_csv(path, pulse_index, on, n_photons, first_delay_ps) -> None:
    """Debug dump: ``pulse_index,on,n_photons,delay_ps`` per pulse."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pulse_index", "on", "n_photons", "delay_ps"])
        for row in zip(pulse_index, on, n_photons, first_delay_ps):
            w.writerow([int(row[0]), int(bool(row[1])), int(row[2]), int(row[3])])
