"""Exhaustive enumeration of one switching cycle.

Every pulse of an ``m``-slot cycle independently ends up in one of a few
outcomes: emitter off, no photon, photon lost in the network, or photon in
channel ``c`` (detected or not).  The full outcome space is enumerated as a
dense grid, so the resulting coincidence probabilities carry no sampling
error and share no algebra with the closed-form rate model.

Conventions of the oracle (independent of the routing tree): slot ``s`` is
meant for channel ``s``; a photon from slot ``s`` arriving at channel ``c``
sits at time-bin shift ``(s - c) mod m``.  A coincidence of channel set ``S``
at shift ``d`` needs every channel of ``S`` to click at that shift.  Distinct
shifts are distinct events in time, so the expected number of coincidences
per cycle is the sum over shifts.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .analytics import RateModel

MAX_M = 4
LOST = -1
SLOW = "slow"
FAST = "fast"


@dataclass(frozen=True)
class PulseOutcome:
    emitted: bool
    exit_channel: int  # LOST also for "not emitted"
    detected: bool


@dataclass(frozen=True)
class CycleOutcome:
    per_pulse: tuple
    probability: float


def _pulse_table(m: int, model: RateModel, slot: int, p_emit: float, include_off: bool, p_on: float):
    """Outcomes of one pulse: list of (probability, PulseOutcome)."""
    rows = []
    if include_off:
        rows.append((1.0 - p_on, PulseOutcome(False, LOST, False)))
        scale = p_on
    else:
        scale = 1.0
    rows.append((scale * (1.0 - p_emit), PulseOutcome(False, LOST, False)))
    rows.append((scale * p_emit * (1.0 - model.eta_routing), PulseOutcome(True, LOST, False)))
    for c in range(m):
        if m == 1:
            route = 1.0
        elif c == slot:
            route = model.eta_sw
        else:
            route = (1.0 - model.eta_sw) / (m - 1)
        base = scale * p_emit * model.eta_routing * route
        rows.append((base * model.eta_det, PulseOutcome(True, c, True)))
        rows.append((base * (1.0 - model.eta_det), PulseOutcome(True, c, False)))
    return rows


class CycleEnumeration:
    """Dense outcome grid for one cycle, optionally mixed over a shared on/off state."""

    def __init__(self, m: int, model: RateModel, blinking_mode: str = SLOW):
        if m > MAX_M:
            raise ValueError(f"enumeration limited to m <= {MAX_M}")
        if m < 1:
            raise ValueError("m must be >= 1")
        if blinking_mode not in (SLOW, FAST):
            raise ValueError(f"unknown blinking mode {blinking_mode!r}")
        self.m = m
        self.model = model
        self.blinking_mode = blinking_mode
        # branches: (weight, tables per slot)
        self.branches = []
        if blinking_mode == SLOW:
            p_emit = model.eta_qd / model.eta_blinking if model.eta_blinking > 0 else 0.0
            on = [_pulse_table(m, model, s, p_emit, False, 1.0) for s in range(m)]
            off = [[(1.0, PulseOutcome(False, LOST, False))] for _ in range(m)]
            self.branches = [(model.eta_blinking, on), (1.0 - model.eta_blinking, off)]
        else:
            p_emit = model.eta_qd / model.eta_blinking if model.eta_blinking > 0 else 0.0
            tabs = [_pulse_table(m, model, s, p_emit, True, model.eta_blinking) for s in range(m)]
            self.branches = [(1.0, tabs)]
        self._grids = [self._grid(w, tabs) for w, tabs in self.branches]

    def _grid(self, weight, tables):
        """Flattened product space: probability and per-slot channel/detected arrays."""
        probs = [np.array([p for p, _ in t]) for t in tables]
        chans = [np.array([o.exit_channel for _, o in t]) for t in tables]
        dets = [np.array([o.detected for _, o in t]) for t in tables]
        shape = tuple(len(t) for t in tables)
        idx = np.indices(shape).reshape(len(tables), -1)
        prob = np.full(idx.shape[1], weight, dtype=float)
        ch = np.empty_like(idx)
        det = np.empty(idx.shape, dtype=bool)
        for s in range(len(tables)):
            prob *= probs[s][idx[s]]
            ch[s] = chans[s][idx[s]]
            det[s] = dets[s][idx[s]]
        return prob, ch, det

    def total_probability(self) -> float:
        return float(sum(g[0].sum() for g in self._grids))

    def coincidence_probability(self, channels) -> float:
        """Expected coincidences per cycle in which every channel of ``channels`` clicks."""
        channels = tuple(channels)
        if len(set(channels)) != len(channels) or any(not 0 <= c < self.m for c in channels):
            raise ValueError("channels must be distinct indices < m")
        total = 0.0
        for prob, ch, det in self._grids:
            for d in range(self.m):
                hit = np.ones(prob.size, dtype=bool)
                for c in channels:
                    s = (c + d) % self.m
                    hit &= (ch[s] == c) & det[s]
                total += prob[hit].sum()
        return float(total)

    def mean_coincidence_probability(self, n: int) -> float:
        """Average over all n-subsets of channels."""
        if not 1 <= n <= self.m:
            raise ValueError("need 1 <= n <= m")
        combos = list(itertools.combinations(range(self.m), n))
        return float(np.mean([self.coincidence_probability(c) for c in combos]))

    def rate_hz(self, n: int) -> float:
        return self.model.rr_hz / self.m * self.mean_coincidence_probability(n)

    def outcomes(self):
        """Iterate :class:`CycleOutcome` over the full space (small m only)."""
        for w, tabs in self.branches:
            for combo in itertools.product(*tabs):
                p = w
                for q, _ in combo:
                    p *= q
                yield CycleOutcome(tuple(o for _, o in combo), p)

    def dump_json(self, path) -> None:
        rows = [{"probability": o.probability,
                 "per_pulse": [[int(p.emitted), p.exit_channel, int(p.detected)] for p in o.per_pulse]}
                for o in self.outcomes() if o.probability > 0]
        with open(path, "w") as fh:
            json.dump({"m": self.m, "blinking_mode": self.blinking_mode, "outcomes": rows}, fh)


def enumerate_cycle(m: int, model: RateModel, blinking_mode: str = SLOW) -> CycleEnumeration:
    return CycleEnumeration(m, model, blinking_mode)
