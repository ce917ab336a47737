"""Run configuration: schema, validation, profiles, YAML round trip."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .agents import AGENT_KINDS, Hyperparams
from .env import ExogenousParams


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists every violation found."""

    def __init__(self, problems: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class HouseRanges:
    """Per-house parameter ranges sampled once per house from the run seed."""

    pv_panels: tuple[int, int] = (6, 14)
    pv_unit_kw: float = 0.48
    battery_capacity_kwh: float = 10.0
    battery_rate_kw: float = 3.0
    soc_range: tuple[float, float] = (0.1, 0.8)
    charge_eff: float = 0.95
    discharge_eff: float = 0.95
    initial_soc_range: tuple[float, float] = (0.3, 0.6)
    hvac_rated_kw: float = 3.0
    t_set_range: tuple[float, float] = (22.0, 24.0)
    comfort_band_c: float = 1.0
    t_max_dev_c: float = 3.0
    comfort_floor: float = 0.01
    # 0.15/h (roughly a 7-hour thermal time constant) keeps one 30-minute
    # round from swinging the room by whole degrees
    leak_per_h: float = 0.15
    cool_gain_c_per_kwh: float = 2.0
    beta_range: tuple[float, float] = (10.0, 20.0)
    cost_pv: float = 0.05
    cost_bat: float = 0.02
    base_scale_range: tuple[float, float] = (0.75, 1.25)


@dataclass(frozen=True)
class NoiseConfig:
    kind: str = "quadratic"
    sigma0_logit: float = 1.0
    sigma0_price: float = 0.2
    sigma_min: float = 0.01
    step_drop_every_episodes: int = 100
    step_drop_ratio: float = 0.5


@dataclass(frozen=True)
class ExogenousConfig:
    source: str = "synthetic"  # synthetic | csv
    csv_path: str | None = None
    params: ExogenousParams = field(default_factory=ExogenousParams)


@dataclass(frozen=True)
class SimulationConfig:
    seed: int = 0
    n_houses: int = 10
    days_train: int = 300
    days_test: int = 6
    rounds_per_day: int = 48
    agent_kind: str = "proposed"
    supplier_capacity_kw: float = 1000.0
    price_cap: float = 0.4
    houses: HouseRanges = field(default_factory=HouseRanges)
    exogenous: ExogenousConfig = field(default_factory=ExogenousConfig)
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    noise: NoiseConfig = field(default_factory=NoiseConfig)

    @property
    def dt_h(self) -> float:
        return 24.0 / self.rounds_per_day

    @property
    def total_days(self) -> int:
        return self.days_train + self.days_test


def desk_profile(**overrides) -> SimulationConfig:
    """Laptop-scale settings: 10 houses, 300 one-day episodes of 48 rounds.

    The quantity actor learns an order of magnitude slower than the critic,
    and the critic/targets faster than the full-scale defaults: desk training
    offers ~3600 updates, and the discrete policy otherwise saturates before
    the critic's state-conditional rankings are trustworthy, freezing the
    population on non-participation.
    """
    base = SimulationConfig(
        n_houses=10,
        days_train=300,
        days_test=6,
        rounds_per_day=48,
        hyperparams=Hyperparams(
            lr_quantity=1e-5,
            lr_critic=1e-3,
            tau=0.01,
            buffer_capacity=20_000,
        ),
    )
    return replace(base, **overrides)


def paper_profile(**overrides) -> SimulationConfig:
    """Full-scale settings (long): 30 houses, 54 training and 6 test days of
    300-second auctions."""
    base = SimulationConfig(
        n_houses=30,
        days_train=54,
        days_test=6,
        rounds_per_day=288,
        hyperparams=Hyperparams(buffer_capacity=100_000),
    )
    return replace(base, **overrides)


PROFILES = {"desk": desk_profile, "paper": paper_profile}


def validate_config(config: SimulationConfig) -> list[str]:
    """Collect every violation; an empty list means the config is usable."""
    problems: list[str] = []
    if config.n_houses < 1:
        problems.append("n_houses must be >= 1")
    if config.days_train < 0:
        problems.append("days_train must be >= 0")
    if config.days_test < 1:
        problems.append("days_test must be >= 1")
    if config.rounds_per_day < 1:
        problems.append("rounds_per_day must be >= 1")
    if config.agent_kind not in AGENT_KINDS:
        problems.append(f"agent_kind must be one of {sorted(AGENT_KINDS)}")
    if config.supplier_capacity_kw <= 0:
        problems.append("supplier_capacity_kw must be positive")
    if config.price_cap <= 0:
        problems.append("price_cap must be positive")
    h = config.houses
    if not (0 < h.pv_panels[0] <= h.pv_panels[1]):
        problems.append("pv_panels range must be increasing and positive")
    if not (0.0 < h.soc_range[0] < h.soc_range[1] <= 1.0):
        problems.append("soc_range must satisfy 0 < lo < hi <= 1")
    if not (h.soc_range[0] <= h.initial_soc_range[0] <= h.initial_soc_range[1] <= h.soc_range[1]):
        problems.append("initial_soc_range must lie within soc_range")
    if not (0.0 < h.charge_eff <= 1.0 and 0.0 < h.discharge_eff <= 1.0):
        problems.append("battery efficiencies must lie in (0, 1]")
    if h.battery_capacity_kwh <= 0 or h.battery_rate_kw <= 0 or h.hvac_rated_kw <= 0:
        problems.append("battery capacity/rate and HVAC rating must be positive")
    if h.t_set_range[0] > h.t_set_range[1]:
        problems.append("t_set_range must be increasing")
    if h.beta_range[0] <= 0 or h.beta_range[0] > h.beta_range[1]:
        problems.append("beta_range must be positive and increasing")
    if h.cost_pv <= 0 or h.cost_bat <= 0:
        problems.append("generation costs must be positive")
    if config.noise.kind not in ("none", "step", "quadratic"):
        problems.append("noise.kind must be none, step, or quadratic")
    if config.exogenous.source not in ("synthetic", "csv"):
        problems.append("exogenous.source must be synthetic or csv")
    if config.exogenous.source == "csv" and not config.exogenous.csv_path:
        problems.append("exogenous.source=csv requires exogenous.csv_path")
    hp = config.hyperparams
    if not (0.0 <= hp.gamma < 1.0):
        problems.append("hyperparams.gamma must lie in [0, 1)")
    if hp.batch_size < 1 or hp.update_period < 1:
        problems.append("hyperparams batch_size and update_period must be >= 1")
    return problems


def require_valid(config: SimulationConfig) -> SimulationConfig:
    problems = validate_config(config)
    if problems:
        raise ConfigError(problems)
    return config


# ---------------------------------------------------------------------------
# Serialization


def config_to_dict(config: SimulationConfig) -> dict:
    return asdict(config)


def _build(cls, data: dict, where: str):
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError([f"unknown key(s) {sorted(unknown)} in {where}"])
    kwargs = {}
    for name, value in data.items():
        target = known[name].type
        if isinstance(value, dict):
            nested = {
                "houses": HouseRanges,
                "exogenous": ExogenousConfig,
                "hyperparams": Hyperparams,
                "noise": NoiseConfig,
                "params": ExogenousParams,
            }.get(name)
            if nested is None:
                raise ConfigError([f"unexpected mapping for {where}.{name}"])
            kwargs[name] = _build(nested, value, f"{where}.{name}")
        elif isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
        del target
    return cls(**kwargs)


def config_from_dict(data: dict) -> SimulationConfig:
    return _build(SimulationConfig, data, "config")


def load_config(path: str | Path) -> SimulationConfig:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError([f"config file {path} must contain a mapping"])
    return config_from_dict(data)


def save_config(path: str | Path, config: SimulationConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config_to_dict(config), fh, sort_keys=True)


def config_hash(config: SimulationConfig) -> str:
    canonical = json.dumps(config_to_dict(config), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
