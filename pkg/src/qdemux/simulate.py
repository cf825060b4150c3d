"""Discrete-event Monte Carlo: source -> routing tree -> detectors.

Pulses are processed in fixed blocks.  Each block draws from its own RNG
streams (keyed by seed, purpose and block index), so results do not depend
on how many worker threads run the blocks.  The blinking trajectory is drawn
once for the whole run.  Dead time is applied after the per-block tags are
merged, since it couples neighbouring blocks.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .config import ScenarioConfig
from .core import (STREAM_BLINKING, STREAM_DETECTION, STREAM_EMISSION, STREAM_HOM, STREAM_ROUTING,
                   make_rng)
from .detection import apply_dead_time, detect, hom_merge, thin_and_jitter
from .network import LOST, route_photons
from .source import sample_emissions, telegraph_trace

log = logging.getLogger(__name__)

BLOCK_PULSES = 1 << 22


@dataclass
class SimulationResult:
    config: ScenarioConfig
    tags: dict                      # channel -> sorted int64 tag times
    arrivals: dict = field(default_factory=dict)   # channel -> photon arrivals (if kept)
    stats: dict = field(default_factory=dict)
    on_fraction: float = float("nan")

    @property
    def duration_ps(self) -> int:
        return self.config.pulse_clock.duration_ps


def _simulate_block(config: ScenarioConfig, trace, block: int, start: int, stop: int, keep: tuple):
    clock = config.pulse_clock
    src = config.source
    net = config.network
    seed = config.rng_seed
    m = net.n_channels
    rng_em = make_rng(seed, STREAM_EMISSION, block)
    rng_rt = make_rng(seed, STREAM_ROUTING, block)
    rng_det = make_rng(seed, STREAM_DETECTION, block)

    on = trace.on_at_pulses(start, stop, clock, rng_em)
    idx_on = np.arange(start, stop, dtype=np.int64)[on]
    n_ph, ph_pulse, ph_delay = sample_emissions(idx_on, np.ones(idx_on.size, dtype=bool), src, rng_em)
    survive = rng_em.random(ph_pulse.size) < src.network_survival
    ph_pulse, ph_delay = ph_pulse[survive], ph_delay[survive]
    emit_t = ph_pulse * clock.pulse_period_ps + ph_delay
    chan, exit_t, correct = route_photons(ph_pulse, emit_t, net, rng_rt)

    tags, arrivals = {}, {}
    for c in range(m):
        sel = chan == c
        t = np.sort(exit_t[sel])
        if c in keep:
            arrivals[c] = t
        tags[c] = thin_and_jitter(t, config.detectors[c], rng_det)
    stats = {
        "pulses": stop - start,
        "on_pulses": int(on.sum()),
        "occupied_pulses": int((n_ph > 0).sum()),
        "emitted_photons": int(n_ph.sum()),
        "network_photons": int(ph_pulse.size),
        "lost_photons": int((chan == LOST).sum()),
        "exited_photons": int((chan != LOST).sum()),
        "correct_photons": int(correct.sum()),
    }
    return tags, arrivals, stats


def simulate(config: ScenarioConfig, threads: int = 1, keep_arrivals=(), block_pulses: int = BLOCK_PULSES) -> SimulationResult:
    """Run the full chain for ``config.pulse_clock.n_pulses`` pulses.

    ``keep_arrivals`` lists channels whose pre-detection photon arrivals are
    returned too (needed for the HOM bench).
    """
    clock = config.pulse_clock
    n = clock.n_pulses
    m = config.network.n_channels
    keep = tuple(keep_arrivals)
    if config.hom is not None:
        keep = tuple(sorted(set(keep) | {config.hom.input_a, config.hom.input_b}))
    trace = telegraph_trace(clock.duration_ps, config.source, make_rng(config.rng_seed, STREAM_BLINKING))
    bounds = [(b, s, min(s + block_pulses, n)) for b, s in enumerate(range(0, n, block_pulses))]

    def run(args):
        return _simulate_block(config, trace, *args, keep)

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run, bounds))
    else:
        parts = [run(b) for b in bounds]

    tags, arrivals = {}, {}
    stats = {}
    for c in range(m):
        merged = np.concatenate([p[0][c] for p in parts]) if parts else np.empty(0, dtype=np.int64)
        merged.sort(kind="stable")
        tags[c] = apply_dead_time(merged, config.detectors[c].dead_time_ps)
        if c in keep:
            arrivals[c] = np.sort(np.concatenate([p[1][c] for p in parts])) if parts else np.empty(0, dtype=np.int64)
    for p in parts:
        for k, v in p[2].items():
            stats[k] = stats.get(k, 0) + v
    log.debug("simulated %d pulses in %d blocks", n, len(bounds))
    return SimulationResult(config, tags, arrivals, stats, trace.on_fraction())


def run_hom(result: SimulationResult, indistinguishability: float | None = None, stream_block: int = 0):
    """Send the two HOM input channels through the beamsplitter and detect.

    Returns ``(out1_tags, out2_tags)``; outputs are detected with the
    detectors of ``input_a`` and ``input_b`` respectively.
    """
    cfg = result.config
    spec = cfg.hom
    if spec is None:
        raise ValueError("scenario has no HOM bench")
    if indistinguishability is not None:
        spec = replace(spec, mutual_indistinguishability=indistinguishability)
    a = result.arrivals[spec.input_a]
    b = result.arrivals[spec.input_b]
    rng = make_rng(cfg.rng_seed, STREAM_HOM, 3 * stream_block)
    out1, out2 = hom_merge(a, b, spec, rng)
    t1 = detect(out1, cfg.detectors[spec.input_a], make_rng(cfg.rng_seed, STREAM_HOM, 3 * stream_block + 1))
    t2 = detect(out2, cfg.detectors[spec.input_b], make_rng(cfg.rng_seed, STREAM_HOM, 3 * stream_block + 2))
    return t1, t2
