"""Shared value types, time units and the RNG-stream contract.

All times are integer picoseconds held in int64.  Pulse times are always
computed as ``index * period`` so long runs never accumulate drift.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

PS_PER_S = 10**12

# stream purposes; combined with a block index into a stream id
STREAM_BLINKING = 0
STREAM_EMISSION = 1
STREAM_ROUTING = 2
STREAM_DETECTION = 3
STREAM_HOM = 4
_PURPOSE_BITS = 8


class ConfigError(ValueError):
    """Raised by validation; ``errors`` holds every violation found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class TimeTag(NamedTuple):
    channel: int
    time_ps: int


@dataclass(frozen=True)
class PulseClock:
    repetition_rate_hz: float
    n_pulses: int = 0

    @property
    def pulse_period_ps(self) -> int:
        if self.repetition_rate_hz <= 0:
            raise ValueError("repetition rate must be positive")
        return int(round(PS_PER_S / self.repetition_rate_hz))

    @property
    def locked_rate_hz(self) -> float:
        """Repetition rate implied by the integer period (what the drives lock to)."""
        return PS_PER_S / self.pulse_period_ps

    @property
    def duration_ps(self) -> int:
        return self.n_pulses * self.pulse_period_ps

    @property
    def duration_s(self) -> float:
        return self.duration_ps / PS_PER_S


def pulse_time(pulse_index: int, clock: PulseClock) -> int:
    """Emission time of the excitation pulse ``pulse_index`` in ps."""
    if pulse_index < 0 or pulse_index >= clock.n_pulses:
        raise IndexError(f"pulse index {pulse_index} outside [0, {clock.n_pulses})")
    return pulse_index * clock.pulse_period_ps


def pulse_times(start: int, stop: int, clock: PulseClock) -> np.ndarray:
    return np.arange(start, stop, dtype=np.int64) * np.int64(clock.pulse_period_ps)


@dataclass(frozen=True)
class RngStreamSpec:
    seed: int
    stream_id: int

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed & (2**64 - 1), spawn_key=(self.stream_id & (2**64 - 1),))
        return np.random.Generator(np.random.PCG64(ss))


def stream_id(purpose: int, block: int = 0) -> int:
    return (block << _PURPOSE_BITS) | purpose


def make_rng(seed: int, purpose: int, block: int = 0) -> np.random.Generator:
    """Generator for ``(seed, purpose, block)``; independent of execution order."""
    return RngStreamSpec(seed, stream_id(purpose, block)).generator()


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStreamSpec):
        return rng.generator()
    return np.random.default_rng(rng)


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def check_probability(name: str, value, errors: list) -> None:
    vals = np.atleast_1d(np.asarray(value, dtype=float))
    if np.any(~np.isfinite(vals)) or np.any(vals < 0.0) or np.any(vals > 1.0):
        errors.append(f"probability out of range: {name}={value!r}")
