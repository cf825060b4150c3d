"""EOM/PBS binary routing tree.

Layer ``j`` (1-based) of a depth-``k`` tree holds ``2**(j-1)`` switch stages
driven at ``RR / 2**j``.  Stages are stored in heap order: layer 1 first,
then layer 2 nodes ``0, 1``, and so on.  A node's index within its layer is
the integer formed by the branch bits taken so far, layer-1 bit least
significant; the exit channel is the full bit string read the same way.
Bit 1 means "switched" (polarisation flipped by the EOM).

With the drive phases chosen by :func:`build_demux_tree` every pulse meets
its stage at a drive extremum, and pulse ``p`` is routed to channel
``m - 1 - (p mod m)``.  Channel delays ``offset + c * period`` then make all
photons of one cycle exit together.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .core import PulseClock, as_generator, check_probability, is_power_of_two

LOST = -1

# fraction of input power measured in each output channel (four-channel tree)
MEASURED_CHANNEL_FRACTIONS = (0.225, 0.199, 0.214, 0.199)
DEFAULT_DELAY_OFFSET_PS = 10_000


@dataclass(frozen=True)
class EomDrive:
    frequency_hz: float
    phase_rad: float = 0.0
    amplitude_rel: float = 1.0
    bias_quarter_wave: bool = True


@dataclass(frozen=True)
class SwitchStage:
    drive: EomDrive
    extinction_ratio_switch: float = math.inf
    extinction_ratio_pass: float = math.inf

    @property
    def error_switch(self) -> float:
        return 1.0 / (1.0 + self.extinction_ratio_switch)

    @property
    def error_pass(self) -> float:
        return 1.0 / (1.0 + self.extinction_ratio_pass)


@dataclass(frozen=True)
class DemuxNetworkSpec:
    depth_k: int
    period_ps: int
    stages: tuple = ()
    channel_transmissions: tuple = (1.0,)
    channel_delays_ps: tuple = (0,)

    @property
    def n_channels(self) -> int:
        return len(self.channel_transmissions)

    @property
    def eta_routing(self) -> float:
        m = self.n_channels
        return float(sum(self.channel_transmissions) / m)

    def validate(self, errors: list, repetition_rate_hz: float | None = None) -> None:
        m = self.n_channels
        if self.depth_k < 0:
            errors.append("depth_k must be >= 0")
        if not is_power_of_two(m):
            errors.append(f"channel count must be 2^k (got {m})")
        elif m != 2**max(self.depth_k, 0):
            errors.append(f"channel count {m} does not match depth_k={self.depth_k}")
        if len(self.channel_delays_ps) != m:
            errors.append("channel_delays_ps length must equal channel count")
        if len(self.stages) != 2**max(self.depth_k, 0) - 1:
            errors.append(f"expected {2**max(self.depth_k, 0) - 1} stages, got {len(self.stages)}")
        check_probability("network.channel_transmissions", list(self.channel_transmissions), errors)
        if self.eta_routing > 1.0 + 1e-12:
            errors.append("routing efficiency exceeds 1")
        if any(d < 0 for d in self.channel_delays_ps):
            errors.append("channel delays must be non-negative")
        locked = 1e12 / self.period_ps
        for i, st in enumerate(self.stages):
            if not (st.extinction_ratio_switch > 0 and st.extinction_ratio_pass > 0):
                errors.append(f"stage {i}: extinction ratios must be > 0")
            layer = stage_layer(i)
            ratio = locked / st.drive.frequency_hz if st.drive.frequency_hz > 0 else math.inf
            if not math.isclose(ratio, 2**layer, rel_tol=1e-9):
                errors.append(f"stage {i}: drive frequency must be RR/{2**layer}")


@dataclass
class RoutedPhoton:
    origin_pulse_index: int
    exit_channel: int
    exit_time_ps: int
    correctly_routed: bool


def stage_layer(stage_index: int) -> int:
    """1-based layer of a heap-ordered stage."""
    return (stage_index + 1).bit_length()


def _node_residue(layer: int, node: int) -> int:
    # pulse index mod 2**(layer-1) of pulses that reach this node ideally
    return (2 ** (layer - 1) - 1) - node


def ideal_phase(layer: int, node: int) -> float:
    """Drive phase placing every pulse at a drive extremum.

    Pulses reaching the node share ``i mod 2**(layer-1) = r``; with this phase
    the drive reads ``(-1)**(i // 2**(layer-1))``, i.e. +1 (switch) on even
    quotients.
    """
    r = _node_residue(layer, node)
    return math.pi / 2 - 2 * math.pi * r / 2**layer


def build_demux_tree(depth_k: int, clock: PulseClock, stage_defaults: dict | None = None,
                     channel_transmissions=None, delay_offset_ps: int = DEFAULT_DELAY_OFFSET_PS) -> DemuxNetworkSpec:
    """Construct the recursive ``2**k``-channel routing tree.

    ``stage_defaults`` may set ``amplitude_rel``, ``bias_quarter_wave``,
    ``extinction_ratio_switch`` and ``extinction_ratio_pass`` for all stages.
    Transmissions default to the measured four-channel set (scaled to
    per-photon survival) for ``k == 2`` and to 1 otherwise.
    """
    if depth_k < 0:
        raise ValueError("depth_k must be >= 0")
    d = dict(stage_defaults or {})
    rr = clock.locked_rate_hz
    stages = []
    for layer in range(1, depth_k + 1):
        for node in range(2 ** (layer - 1)):
            drive = EomDrive(frequency_hz=rr / 2**layer, phase_rad=ideal_phase(layer, node),
                             amplitude_rel=d.get("amplitude_rel", 1.0),
                             bias_quarter_wave=d.get("bias_quarter_wave", True))
            stages.append(SwitchStage(drive, d.get("extinction_ratio_switch", math.inf),
                                      d.get("extinction_ratio_pass", math.inf)))
    m = 2**depth_k
    if channel_transmissions is None:
        if m == len(MEASURED_CHANNEL_FRACTIONS):
            channel_transmissions = tuple(m * f for f in MEASURED_CHANNEL_FRACTIONS)
        else:
            channel_transmissions = (1.0,) * m
    period = clock.pulse_period_ps
    delays = tuple(int(delay_offset_ps + c * period) for c in range(m))
    return DemuxNetworkSpec(depth_k, period, tuple(stages), tuple(float(t) for t in channel_transmissions), delays)


def eom_switch_probability(t_ps, drive: EomDrive):
    """Probability that the EOM/PBS pair switches a photon passing at ``t_ps``.

    Malus-law transfer of the sinusoidally driven modulator.  With the
    quarter-wave bias the response swings fully between 0 and 1 at nominal
    amplitude; without it the modulation is centred on zero and only partial.
    """
    t = np.asarray(t_ps, dtype=float)
    cycles = np.mod(t * (drive.frequency_hz * 1e-12), 1.0)
    s = np.sin(2 * np.pi * cycles + drive.phase_rad)
    if drive.bias_quarter_wave:
        p = np.sin(np.pi / 4 * (1.0 + drive.amplitude_rel * s)) ** 2
    else:
        p = np.sin(np.pi / 4 * drive.amplitude_rel * s) ** 2
    return float(p) if p.ndim == 0 else p


def eom_pass_probability(t_ps, drive: EomDrive):
    """``1 - eom_switch_probability`` without the cancellation near full switching."""
    t = np.asarray(t_ps, dtype=float)
    cycles = np.mod(t * (drive.frequency_hz * 1e-12), 1.0)
    s = np.sin(2 * np.pi * cycles + drive.phase_rad)
    if drive.bias_quarter_wave:
        q = np.sin(np.pi / 4 * (1.0 - drive.amplitude_rel * s)) ** 2
    else:
        q = np.cos(np.pi / 4 * drive.amplitude_rel * s) ** 2
    return float(q) if q.ndim == 0 else q


def ideal_channel_for_pulse(pulse_index: int, m: int) -> int:
    """Channel the loss-free, error-free tree assigns to ``pulse_index``.

    Traced through the tree: at layer ``j`` the photon switches iff
    ``(pulse_index >> (j-1))`` is even.
    """
    if not is_power_of_two(m):
        raise ValueError("channel count must be a power of two")
    k = m.bit_length() - 1
    channel = 0
    for layer in range(1, k + 1):
        if ((pulse_index >> (layer - 1)) & 1) == 0:
            channel |= 1 << (layer - 1)
    return channel


def ideal_slot_for_channel(channel: int, m: int) -> int:
    """Inverse of :func:`ideal_channel_for_pulse` within one cycle."""
    return (m - 1) - channel


def _branch_one_probability(p_switch, stage: SwitchStage):
    # intended switch is flipped with e_s, intended pass with e_p
    return p_switch * (1.0 - stage.error_switch) + (1.0 - p_switch) * stage.error_pass


def route_photons(pulse_index, emit_time_ps, spec: DemuxNetworkSpec, rng):
    """Vectorised routing of photons through the tree.

    Returns ``(exit_channel, exit_time_ps, correctly_routed)``; lost photons
    have channel :data:`LOST` and their exit time is meaningless.
    """
    rng = as_generator(rng)
    pulse_index = np.asarray(pulse_index, dtype=np.int64)
    t = np.asarray(emit_time_ps, dtype=np.int64)
    n = pulse_index.size
    m = spec.n_channels
    node = np.zeros(n, dtype=np.int64)
    for layer in range(1, spec.depth_k + 1):
        base = 2 ** (layer - 1) - 1
        p1 = np.empty(n)
        for j in range(2 ** (layer - 1)):
            sel = node == j
            if not sel.any():
                continue
            st = spec.stages[base + j]
            p1[sel] = _branch_one_probability(eom_switch_probability(t[sel], st.drive), st)
        bit = rng.random(n) < p1
        node |= bit.astype(np.int64) << (layer - 1)
    channel = node
    trans = np.asarray(spec.channel_transmissions, dtype=float)
    survive = rng.random(n) < trans[channel]
    ideal = (m - 1) - (pulse_index % m)
    correct = channel == ideal
    delays = np.asarray(spec.channel_delays_ps, dtype=np.int64)
    exit_time = t + delays[channel]
    channel = np.where(survive, channel, LOST)
    return channel, exit_time, correct & survive


def route_photon(origin_pulse_index: int, emit_time_ps: int, spec: DemuxNetworkSpec, rng) -> RoutedPhoton:
    ch, t, ok = route_photons([origin_pulse_index], [emit_time_ps], spec, rng)
    return RoutedPhoton(int(origin_pulse_index), int(ch[0]), int(t[0]), bool(ok[0]))


def routing_matrix(spec: DemuxNetworkSpec, emission_delay_ps: float = 0.0) -> np.ndarray:
    """Exact ``P[slot, channel]`` for a photon emitted in cycle slot ``slot``.

    Evaluated at the nominal arrival time (pulse time plus a fixed delay),
    before channel transmission.
    """
    m = spec.n_channels
    out = np.zeros((m, m))
    for slot in range(m):
        t = slot * spec.period_ps + emission_delay_ps
        probs = {0: 1.0}
        for layer in range(1, spec.depth_k + 1):
            base = 2 ** (layer - 1) - 1
            nxt = {}
            for node, p in probs.items():
                st = spec.stages[base + node]
                p1 = _branch_one_probability(eom_switch_probability(t, st.drive), st)
                nxt[node | (1 << (layer - 1))] = nxt.get(node | (1 << (layer - 1)), 0.0) + p * p1
                nxt[node] = nxt.get(node, 0.0) + p * (1 - p1)
            probs = nxt
        for c, p in probs.items():
            out[slot, c] = p
    return out


def expected_channel_switching(spec: DemuxNetworkSpec, emission_delay_ps: float = 0.0) -> np.ndarray:
    """Per-channel main/(main+side) fraction expected from the routing matrix."""
    m = spec.n_channels
    P = routing_matrix(spec, emission_delay_ps)
    main = np.array([P[ideal_slot_for_channel(c, m), c] for c in range(m)])
    return main / P.sum(axis=0)


def with_extinction(spec: DemuxNetworkSpec, er_switch, er_pass) -> DemuxNetworkSpec:
    """Copy of ``spec`` with per-stage extinction ratios (scalars broadcast)."""
    n = len(spec.stages)
    es = np.broadcast_to(np.asarray(er_switch, dtype=float), (n,))
    ep = np.broadcast_to(np.asarray(er_pass, dtype=float), (n,))
    stages = tuple(replace(st, extinction_ratio_switch=float(a), extinction_ratio_pass=float(b))
                   for st, a, b in zip(spec.stages, es, ep))
    return replace(spec, stages=stages)


def write_drive_csv(path, drive: EomDrive, t_start_ps: int, t_stop_ps: int, step_ps: int = 100) -> None:
    """Dump the transfer function ``t_ps,switch_probability`` for plotting."""
    t = np.arange(t_start_ps, t_stop_ps, step_ps, dtype=np.int64)
    p = eom_switch_probability(t, drive)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_ps", "switch_probability"])
        for a, b in zip(t, np.atleast_1d(p)):
            w.writerow([int(a), repr(float(b))])
