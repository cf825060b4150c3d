"""Scenario configuration: schema, flat key-value file format, validation.

File format (``schema_version = 1``)::

    # comment
    schema_version = 1
    clock.repetition_rate_hz = 76200000.0
    source.eta_qd = 0.009
    network.stage_er_switch = [29.5, 29.5, 29.5]

One ``key = value`` per line; keys are dotted section paths and values are
JSON literals (``Infinity`` allowed; bare words are read as strings).
Per-stage and per-detector keys accept a scalar, which is broadcast.
Any key can be overridden from the environment as
``QDEMUX_<SECTION>__<NAME>``, e.g. ``QDEMUX_SOURCE__ETA_QD=0.261``.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .analytics import RateModel
from .core import ConfigError, PulseClock
from .detection import DEFAULT_COINCIDENCE_WINDOW_PS, DetectorParams, HomBenchSpec
from .network import (DEFAULT_DELAY_OFFSET_PS, DemuxNetworkSpec, EomDrive, SwitchStage,
                      build_demux_tree, expected_channel_switching)
from .source import SourceParams

SCHEMA_VERSION = 1
ENV_PREFIX = "QDEMUX_"


@dataclass(frozen=True)
class AnalysisSpec:
    coincidence_window_ps: int = DEFAULT_COINCIDENCE_WINDOW_PS
    bin_width_ps: int = 100
    max_coincidence_order: int = 4
    switching: bool = False
    sync_divider: int = 4
    histogram_cycles: int = 2
    hbt_channels: tuple | None = None
    hbt_side_peaks: int = 5


@dataclass(frozen=True)
class ScenarioConfig:
    pulse_clock: PulseClock
    source: SourceParams
    network: DemuxNetworkSpec
    detectors: tuple
    analysis: AnalysisSpec = field(default_factory=AnalysisSpec)
    hom: HomBenchSpec | None = None
    rng_seed: int = 0
    schema_version: int = SCHEMA_VERSION

    @property
    def n_channels(self) -> int:
        return self.network.n_channels

    def rate_model(self) -> RateModel:
        """Closed-form model matching this scenario's simulated physics."""
        m = self.n_channels
        eta_sw = float(np.mean(expected_channel_switching(self.network, self.source.lifetime_ps)))
        eta_det = float(np.mean([d.efficiency for d in self.detectors]))
        return RateModel(self.pulse_clock.locked_rate_hz, m, self.source.eta_blinking, self.source.eta_qd,
                         self.network.eta_routing, eta_det, eta_sw)

    def with_pulses(self, n_pulses: int) -> "ScenarioConfig":
        return replace(self, pulse_clock=replace(self.pulse_clock, n_pulses=int(n_pulses)))

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, rng_seed=int(seed))


def validate_config(config: ScenarioConfig) -> ScenarioConfig:
    """Return ``config`` unchanged or raise :class:`ConfigError` listing every violation."""
    errors: list = []
    clk = config.pulse_clock
    if not clk.repetition_rate_hz > 0:
        errors.append("repetition rate must be positive")
    if clk.n_pulses < 0:
        errors.append("n_pulses must be >= 0")
    config.source.validate(errors)
    if clk.repetition_rate_hz > 0:
        config.network.validate(errors, clk.repetition_rate_hz)
        if config.network.period_ps != clk.pulse_period_ps:
            errors.append("network period does not match the pulse clock")
    if len(config.detectors) != config.network.n_channels:
        errors.append(f"detector count {len(config.detectors)} != channel count {config.network.n_channels}")
    for i, d in enumerate(config.detectors):
        d.validate(errors, f"detectors[{i}]")
    a = config.analysis
    if a.coincidence_window_ps <= 0:
        errors.append("analysis.coincidence_window_ps must be positive")
    if a.bin_width_ps <= 0:
        errors.append("analysis.bin_width_ps must be positive")
    if a.sync_divider < 1:
        errors.append("analysis.sync_divider must be >= 1")
    if a.hbt_channels is not None:
        hc = a.hbt_channels
        if len(hc) != 2 or len(set(hc)) != 2 or any(not 0 <= c < config.network.n_channels for c in hc):
            errors.append("analysis.hbt_channels must name two distinct channels")
    if config.hom is not None:
        config.hom.validate(errors)
        for c in (config.hom.input_a, config.hom.input_b):
            if not 0 <= c < config.network.n_channels:
                errors.append(f"hom input channel {c} out of range")
    if config.schema_version != SCHEMA_VERSION:
        errors.append(f"unsupported schema_version {config.schema_version}")
    if errors:
        raise ConfigError(errors)
    return config


def default_config(n_pulses: int = 0, seed: int = 0) -> ScenarioConfig:
    clock = PulseClock(76.2e6, n_pulses)
    net = build_demux_tree(2, clock, {"extinction_ratio_switch": 29.5, "extinction_ratio_pass": 44.2})
    return ScenarioConfig(clock, SourceParams(), net, tuple(DetectorParams() for _ in range(4)), rng_seed=seed)


# --- flat key-value mapping ---------------------------------------------------

_SOURCE_KEYS = [f.name for f in dataclasses.fields(SourceParams)]
_ANALYSIS_KEYS = [f.name for f in dataclasses.fields(AnalysisSpec)]
_HOM_KEYS = [f.name for f in dataclasses.fields(HomBenchSpec)]


def to_flat(config: ScenarioConfig) -> dict:
    """Ordered flat mapping of every config key."""
    flat = {"schema_version": config.schema_version, "rng_seed": int(config.rng_seed),
            "clock.repetition_rate_hz": float(config.pulse_clock.repetition_rate_hz),
            "clock.n_pulses": int(config.pulse_clock.n_pulses)}
    for k in _SOURCE_KEYS:
        flat[f"source.{k}"] = getattr(config.source, k)
    net = config.network
    flat["network.depth_k"] = net.depth_k
    flat["network.stage_phase_rad"] = [st.drive.phase_rad for st in net.stages]
    flat["network.stage_amplitude_rel"] = [st.drive.amplitude_rel for st in net.stages]
    flat["network.stage_bias_quarter_wave"] = [st.drive.bias_quarter_wave for st in net.stages]
    flat["network.stage_er_switch"] = [st.extinction_ratio_switch for st in net.stages]
    flat["network.stage_er_pass"] = [st.extinction_ratio_pass for st in net.stages]
    flat["network.channel_transmissions"] = list(net.channel_transmissions)
    flat["network.channel_delays_ps"] = [int(d) for d in net.channel_delays_ps]
    flat["detectors.efficiency"] = [d.efficiency for d in config.detectors]
    flat["detectors.dead_time_ps"] = [int(d.dead_time_ps) for d in config.detectors]
    flat["detectors.jitter_sigma_ps"] = [d.jitter_sigma_ps for d in config.detectors]
    for k in _ANALYSIS_KEYS:
        v = getattr(config.analysis, k)
        flat[f"analysis.{k}"] = list(v) if isinstance(v, tuple) else v
    flat["hom.enabled"] = config.hom is not None
    if config.hom is not None:
        for k in _HOM_KEYS:
            flat[f"hom.{k}"] = getattr(config.hom, k)
    return flat


def _broadcast(value, n, what, errors, cast=float):
    if isinstance(value, list):
        if len(value) != n:
            errors.append(f"{what}: expected {n} values, got {len(value)}")
            return None
        return [cast(v) for v in value]
    return [cast(value)] * n


def from_flat(flat: dict) -> ScenarioConfig:
    """Build a config from a flat mapping; missing keys take defaults."""
    try:
        return _from_flat(flat)
    except ConfigError:
        raise
    except (TypeError, ValueError, OverflowError) as exc:
        raise ConfigError([f"bad config value: {exc}"]) from None


def _from_flat(flat: dict) -> ScenarioConfig:
    errors: list = []
    known = set()

    def get(key, default=None):
        known.add(key)
        return flat.get(key, default)

    version = int(get("schema_version", SCHEMA_VERSION))
    seed = int(get("rng_seed", 0))
    rr = float(get("clock.repetition_rate_hz", 76.2e6))
    if rr <= 0:
        raise ConfigError(["zero repetition rate: clock.repetition_rate_hz must be positive"])
    clock = PulseClock(rr, int(get("clock.n_pulses", 0)))

    src_kw = {}
    defaults = SourceParams()
    for k in _SOURCE_KEYS:
        v = get(f"source.{k}", getattr(defaults, k))
        src_kw[k] = v
    source = SourceParams(**src_kw)

    depth = int(get("network.depth_k", 2))
    n_stages = 2**max(depth, 0) - 1
    trans = get("network.channel_transmissions")
    offset = int(get("network.delay_offset_ps", DEFAULT_DELAY_OFFSET_PS))
    net = build_demux_tree(max(depth, 0), clock, None,
                           tuple(float(t) for t in trans) if trans is not None else None, offset)
    if trans is not None and len(trans) != 2**max(depth, 0):
        # keep the user's list so validation reports the mismatch
        net = replace(net, channel_transmissions=tuple(float(t) for t in trans))
    stage_vals = {}
    for key, cast in (("stage_phase_rad", float), ("stage_amplitude_rel", float),
                      ("stage_bias_quarter_wave", bool), ("stage_er_switch", float), ("stage_er_pass", float)):
        v = get(f"network.{key}")
        if v is not None:
            stage_vals[key] = _broadcast(v, n_stages, f"network.{key}", errors, cast)
    def pick(key, i, current):
        vals = stage_vals.get(key)
        return vals[i] if vals is not None else current

    stages = []
    for i, st in enumerate(net.stages):
        d = st.drive
        drive = EomDrive(d.frequency_hz, pick("stage_phase_rad", i, d.phase_rad),
                         pick("stage_amplitude_rel", i, d.amplitude_rel),
                         pick("stage_bias_quarter_wave", i, d.bias_quarter_wave))
        stages.append(SwitchStage(drive, pick("stage_er_switch", i, st.extinction_ratio_switch),
                                  pick("stage_er_pass", i, st.extinction_ratio_pass)))
    net = replace(net, stages=tuple(stages))
    delays = get("network.channel_delays_ps")
    if delays is not None:
        net = replace(net, channel_delays_ps=tuple(int(x) for x in delays))

    det_default = DetectorParams()
    det_raw = {k: get(f"detectors.{k}", getattr(det_default, k))
               for k in ("efficiency", "dead_time_ps", "jitter_sigma_ps")}
    lengths = {len(v) for v in det_raw.values() if isinstance(v, list)}
    if len(lengths) > 1:
        errors.append("detector lists have different lengths")
    n_det = lengths.pop() if lengths else net.n_channels
    eff = _broadcast(det_raw["efficiency"], n_det, "detectors.efficiency", errors)
    dead = _broadcast(det_raw["dead_time_ps"], n_det, "detectors.dead_time_ps", errors, int)
    jit = _broadcast(det_raw["jitter_sigma_ps"], n_det, "detectors.jitter_sigma_ps", errors)
    detectors = tuple(DetectorParams(e, d, j) for e, d, j in zip(eff or [], dead or [], jit or []))

    a_kw = {}
    a_def = AnalysisSpec()
    for k in _ANALYSIS_KEYS:
        v = get(f"analysis.{k}", getattr(a_def, k))
        a_kw[k] = tuple(v) if isinstance(v, list) else v
    analysis = AnalysisSpec(**a_kw)

    hom = None
    if get("hom.enabled", False):
        h_def = HomBenchSpec()
        hom = HomBenchSpec(**{k: get(f"hom.{k}", getattr(h_def, k)) for k in _HOM_KEYS})
    else:
        for k in _HOM_KEYS:
            known.add(f"hom.{k}")

    unknown = sorted(set(flat) - known)
    if unknown:
        errors.append(f"unknown config keys: {', '.join(unknown)}")
    if errors:
        raise ConfigError(errors)
    return ScenarioConfig(clock, source, net, detectors, analysis, hom, seed, version)


def _format_value(v) -> str:
    if isinstance(v, tuple):
        v = list(v)
    return json.dumps(v)


def _parse_value(text: str):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def serialize(config: ScenarioConfig) -> str:
    return "".join(f"{k} = {_format_value(v)}\n" for k, v in to_flat(config).items())


def parse_flat(text: str) -> dict:
    flat = {}
    errors = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value'")
            continue
        key, value = line.split("=", 1)
        flat[key.strip()] = _parse_value(value)
    if errors:
        raise ConfigError(errors)
    return flat


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for name, value in environ.items():
        if name.startswith(ENV_PREFIX):
            key = name[len(ENV_PREFIX):].lower().replace("__", ".")
            out[key] = _parse_value(value)
    return out


def parse(text: str, environ=None) -> ScenarioConfig:
    """Parse and validate config text; ``environ=None`` reads ``os.environ``."""
    flat = parse_flat(text)
    flat.update(env_overrides(environ))
    return validate_config(from_flat(flat))


def load_config(path, environ=None, overrides: dict | None = None) -> ScenarioConfig:
    """Read a config file, applying environment and explicit overrides."""
    with open(path) as fh:
        flat = parse_flat(fh.read())
    flat.update(env_overrides(environ))
    flat.update(overrides or {})
    return validate_config(from_flat(flat))


def scenario_names() -> list:
    return sorted(p.name[:-4] for p in resources.files("qdemux.scenarios").iterdir() if p.name.endswith(".cfg"))


def scenario_path(name: str):
    if name not in scenario_names():
        raise ConfigError([f"unknown scenario {name!r}; choose from {', '.join(scenario_names())}"])
    return resources.files("qdemux.scenarios").joinpath(f"{name}.cfg")


def load_scenario(name: str, environ=None, overrides: dict | None = None) -> ScenarioConfig:
    text = scenario_path(name).read_text()
    flat = parse_flat(text)
    flat.update(env_overrides(environ))
    flat.update(overrides or {})
    return validate_config(from_flat(flat))
