"""Scenario configuration: sectioned TOML files mapped onto dataclasses.

Unknown sections and unknown keys are errors. A silently ignored typo in a
scenario file is the usual reason two "identical" runs disagree.
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .keysync import RekeyPolicy
from .netsim import LifiChannelModel, Medium, RfChannelModel

SCHEMA_VERSION = "lightguard-output/1"
MODES = ("lightguard", "baseline")
EXPERIMENT_KINDS = ("sweep", "trace", "adversarial")


class ConfigError(ValueError):
    pass


@dataclass
class SimConfig:
    seed: int = 1
    duration_ms: float = 100_000.0
    mode: str = "lightguard"
    ssid: str = "LightGuard"


@dataclass
class AngleStep:
    at_ms: float
    angle_deg: float


@dataclass
class LifiConfig:
    angle_deg: float = 0.0
    theta_full_deg: float = 15.0
    theta_cut_deg: float = 25.0
    propagation_delay_ms: float = 1.0
    bitrate_frames_per_ms: float = 10.0
    angle_schedule: list[AngleStep] = field(default_factory=list)

    def model(self) -> LifiChannelModel:
        return LifiChannelModel(self.angle_deg, self.theta_full_deg, self.theta_cut_deg,
                                self.propagation_delay_ms, self.bitrate_frames_per_ms)


@dataclass
class RfConfig:
    delivery_probability: float = 1.0
    propagation_delay_ms: float = 1.0

    def model(self) -> RfChannelModel:
        return RfChannelModel(self.delivery_probability, self.propagation_delay_ms)


@dataclass
class RekeyConfig:
    interval_ms: float = 30_000.0
    first_rekey_ms: float = 0.0
    commit_timeout_ms: float = 100.0
    handshake_timeout_ms: float = 100.0
    max_retries: int = 4
    commit_retries: int = 4
    pmk_derivation_ms: float = 4.0
    hold_old_key_on_failure: bool = False

    def policy(self) -> RekeyPolicy:
        return RekeyPolicy(self.interval_ms, self.commit_timeout_ms, self.handshake_timeout_ms,
                           self.max_retries, self.commit_retries, self.pmk_derivation_ms,
                           self.hold_old_key_on_failure)


@dataclass
class TrafficConfig:
    enabled: bool = True
    offered_load_mbps: float = 80.0
    nominal_throughput_mbps: float = 80.0
    base_latency_ms: float = 1.0
    frame_interval_ms: float = 1.0
    sample_interval_ms: float = 100.0
    window_ms: float = 500.0


@dataclass
class TapConfig:
    id: str
    medium: str
    in_cone: bool = False


@dataclass
class ExperimentConfig:
    kind: str = "trace"
    angle_min_deg: float = -40.0
    angle_max_deg: float = 40.0
    angle_step_deg: float = 5.0
    attempts: int = 200
    attempt_duration_ms: float = 2_000.0
    seeds: list[int] = field(default_factory=list)
    runs: int = 100
    dictionary_size: int = 1000

    def angle_grid(self) -> list[float]:
        lo, hi, step = self.angle_min_deg, self.angle_max_deg, self.angle_step_deg
        n = int(round((hi - lo) / step))
        if abs(lo + n * step - hi) > 1e-9:
            raise ConfigError("angle grid: (max - min) must be a whole number of steps")
        return [round(lo + i * step, 9) for i in range(n + 1)]

    def seed_list(self, base_seed: int) -> list[int]:
        return list(self.seeds) if self.seeds else [base_seed + i for i in range(self.runs)]


@dataclass
class ScenarioConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    lifi: LifiConfig = field(default_factory=LifiConfig)
    rf: RfConfig = field(default_factory=RfConfig)
    rekey: RekeyConfig = field(default_factory=RekeyConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    taps: list[TapConfig] = field(default_factory=list)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    def validate(self) -> ScenarioConfig:
        if self.sim.mode not in MODES:
            raise ConfigError(f"sim.mode must be one of {MODES}, got {self.sim.mode!r}")
        if not 1 <= len(self.sim.ssid.encode()) <= 32:
            raise ConfigError("sim.ssid must be 1..32 octets")
        if self.sim.duration_ms <= 0:
            raise ConfigError("sim.duration_ms must be > 0")
        if self.experiment.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"experiment.kind must be one of {EXPERIMENT_KINDS}")
        ex = self.experiment
        if ex.angle_step_deg <= 0 or ex.angle_max_deg < ex.angle_min_deg:
            raise ConfigError("angle grid needs step > 0 and max >= min")
        ex.angle_grid()
        if ex.attempts < 1 or ex.runs < 1 or ex.dictionary_size < 1:
            raise ConfigError("experiment.attempts, runs and dictionary_size must be >= 1")
        t = self.traffic
        if t.frame_interval_ms <= 0 or t.sample_interval_ms <= 0 or t.window_ms <= 0:
            raise ConfigError("traffic intervals must be > 0")
        if t.offered_load_mbps < 0 or t.nominal_throughput_mbps <= 0:
            raise ConfigError("traffic rates must be non-negative")
        for step in self.lifi.angle_schedule:
            if step.at_ms < 0:
                raise ConfigError("lifi.angle_schedule times must be >= 0")
        ids = [tap.id for tap in self.taps]
        if len(set(ids)) != len(ids):
            raise ConfigError("tap ids must be unique")
        for tap in self.taps:
            if tap.medium not in (Medium.RF.value, Medium.LIFI.value):
                raise ConfigError(f"tap {tap.id}: medium must be RF or LiFi")
        try:
            self.lifi.model()
            self.rf.model()
            self.rekey.policy()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {"sim": SimConfig, "lifi": LifiConfig, "rf": RfConfig, "rekey": RekeyConfig,
             "traffic": TrafficConfig, "experiment": ExperimentConfig}


def _build(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"[{where}] must be a table")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"[{where}] unknown key(s): {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        ftype = str(known[name].type)
        if name == "angle_schedule":
            if not isinstance(value, list):
                raise ConfigError(f"[{where}] angle_schedule must be a list")
            value = [_build(AngleStep, v, f"{where}.angle_schedule") for v in value]
        elif ftype == "float":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"[{where}] {name} must be a number")
            value = float(value)
        elif ftype == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"[{where}] {name} must be an integer")
        elif ftype == "bool":
            if not isinstance(value, bool):
                raise ConfigError(f"[{where}] {name} must be true or false")
        elif ftype == "str":
            if not isinstance(value, str):
                raise ConfigError(f"[{where}] {name} must be a string")
        elif ftype == "list[int]":
            if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool)
                                                      for v in value):
                raise ConfigError(f"[{where}] {name} must be a list of integers")
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"[{where}] {exc}") from None


def config_from_dict(data: dict) -> ScenarioConfig:
    unknown = sorted(set(data) - set(_SECTIONS) - {"taps"})
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    cfg = ScenarioConfig()
    for name, cls in _SECTIONS.items():
        if name in data:
            setattr(cfg, name, _build(cls, data[name], name))
    taps = data.get("taps", [])
    if not isinstance(taps, list):
        raise ConfigError("taps must be an array of tables")
    cfg.taps = [_build(TapConfig, t, "taps") for t in taps]
    return cfg.validate()


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data)


def default_scenario(kind: str = "trace") -> ScenarioConfig:
    """Built-in scenario for each experiment when no config file is given."""
    cfg = ScenarioConfig()
    cfg.experiment.kind = kind
    if kind == "adversarial":
        cfg.sim.duration_ms = 100.0
        cfg.taps = [TapConfig("rf-1", "RF"), TapConfig("lifi-in", "LiFi", True),
                    TapConfig("lifi-out", "LiFi", False)]
    elif kind == "sweep":
        cfg.traffic.enabled = False
    return cfg.validate()
