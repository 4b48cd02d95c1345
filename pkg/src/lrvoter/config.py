"""Experiment configuration: a strict YAML schema with full validation.

Every section is a fixed set of keys; unknown keys, wrong types and values
outside the model's domain raise ConfigError before anything is computed.
A loaded config dumps back to the same mapping (defaults filled in).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .errors import ConfigError, DomainError, GuardViolation
from .kernel import KernelParams

__all__ = ["PIPELINES", "ModelSection", "LatticeSection", "CampaignSection", "NumericsSection",
           "ExperimentConfig", "load_config"]

PIPELINES = ("constants", "lclt", "duality", "stationary", "occupation", "report")

_U64 = 2 ** 64


@dataclass
class ModelSection:
    d: int = 1
    alpha: float = 0.5
    p: float = 0.5


@dataclass
class LatticeSection:
    L: int = 64


@dataclass
class CampaignSection:
    N: list = field(default_factory=lambda: [64, 128, 256])
    t_grid: list = field(default_factory=lambda: [0.25, 0.5, 0.75, 1.0])
    replicas: int = 100
    T_burn: float = 0.0
    t: float = 8.0
    sites: list = field(default_factory=lambda: [0, 1])
    thetas: list = field(default_factory=list)
    samples: int = 1000
    method: str = "lineage"
    eps: float = 0.0
    inputs: list = field(default_factory=list)


@dataclass
class NumericsSection:
    R_phi: int | None = None
    M: int | None = None
    n_gauss: int | None = None
    table_radius: int | None = None
    lclt_N: list = field(default_factory=lambda: [8, 64])
    lclt_t: float = 1.0
    R_sum: int = 512


_SECTIONS = {"model": ModelSection, "lattice": LatticeSection, "campaign": CampaignSection,
             "numerics": NumericsSection}
_TOP = ("pipeline", "seed", "output") + tuple(_SECTIONS)


def _check_type(section, name, value, default):
    """Coerce YAML scalars to the field's type, refusing lossy or nonsense values."""
    where = f"{section}.{name}"
    if value is None:
        if default is None:
            return None
        raise ConfigError(f"{where} must not be null")
    ref = default
    if isinstance(ref, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean")
        return value
    if isinstance(ref, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be a list")
        return [_scalar(where, v) for v in value]
    if isinstance(ref, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        return value
    if isinstance(ref, int) or ref is None and name in ("R_phi", "M", "n_gauss", "table_radius"):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
            raise ConfigError(f"{where} must be an integer, got {value!r}")
        return int(value)
    if isinstance(ref, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigError(f"{where} must be a finite number, got {value!r}")
        return float(value)
    return value


def _scalar(where, v):
    if isinstance(v, list):
        return [_scalar(where, u) for u in v]
    if isinstance(v, bool) or not isinstance(v, (int, float, str)):
        raise ConfigError(f"{where} entries must be numbers, strings or lists of them, got {v!r}")
    return v


def _section(name, data):
    cls = _SECTIONS[name]
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in {name}: {', '.join(map(str, unknown))}")
    obj = cls()
    for k, v in data.items():
        setattr(obj, k, _check_type(name, k, v, getattr(obj, k)))
    return obj


@dataclass
class ExperimentConfig:
    pipeline: str = "constants"
    seed: int = 0
    output: str = "out"
    model: ModelSection = field(default_factory=ModelSection)
    lattice: LatticeSection = field(default_factory=LatticeSection)
    campaign: CampaignSection = field(default_factory=CampaignSection)
    numerics: NumericsSection = field(default_factory=NumericsSection)

    # ---- (de)serialisation

    @classmethod
    def from_dict(cls, data) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping at top level")
        unknown = sorted(set(map(str, data)) - set(_TOP))
        if unknown:
            raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
        cfg = cls(**{k: _section(k, data.get(k)) for k in _SECTIONS})
        if "pipeline" in data:
            cfg.pipeline = data["pipeline"]
        if "seed" in data:
            cfg.seed = data["seed"]
        if "output" in data:
            cfg.output = data["output"]
        if not isinstance(cfg.pipeline, str):
            raise ConfigError("pipeline must be a string")
        if isinstance(cfg.seed, bool) or not isinstance(cfg.seed, int):
            raise ConfigError("seed must be an integer")
        if not isinstance(cfg.output, str):
            raise ConfigError("output must be a string")
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_yaml(cls, text: str) -> "ExperimentConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from exc
        return cls.from_dict(data if data is not None else {})

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)

    def echo(self) -> dict:
        """The config as recorded in outputs: the output location is excluded."""
        out = self.to_dict()
        out.pop("output")
        return out

    # ---- validation

    def validate(self) -> "ExperimentConfig":
        """Every downstream precondition, checked before any computation."""
        try:
            self._validate()
        except ConfigError:
            raise
        except (DomainError, GuardViolation) as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def _validate(self):
        if self.pipeline not in PIPELINES:
            raise ConfigError(f"unknown pipeline {self.pipeline!r}; expected one of {', '.join(PIPELINES)}")
        if not 0 <= self.seed < _U64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.pipeline == "report":
            if not self.campaign.inputs or not all(isinstance(v, str) for v in self.campaign.inputs):
                raise ConfigError("the report pipeline needs campaign.inputs: a list of result directories")
            return
        m, c, n = self.model, self.campaign, self.numerics
        params = KernelParams(m.d, m.alpha)
        if self.pipeline != "lclt":
            params.require_transient(f"the {self.pipeline} pipeline")
        if self.pipeline in ("duality", "stationary", "occupation"):
            if not 0.0 < m.p < 1.0:
                raise ConfigError("model.p must lie in (0, 1)")
        for name in ("R_phi", "M", "n_gauss", "table_radius"):
            v = getattr(n, name)
            if v is not None and v < 1:
                raise ConfigError(f"numerics.{name} must be >= 1")
        if n.M is not None and n.M & (n.M - 1):
            raise ConfigError("numerics.M must be a power of two")
        if self.pipeline == "lclt":
            if len(n.lclt_N) < 1 or any(not isinstance(v, (int, float)) or v <= 0 for v in n.lclt_N):
                raise ConfigError("numerics.lclt_N must be a non-empty list of positive numbers")
            if m.alpha == 2 and min(n.lclt_N) <= 1:
                raise ConfigError("numerics.lclt_N must be > 1 on the alpha = 2 branch")
            if not n.lclt_t > 0:
                raise ConfigError("numerics.lclt_t must be > 0")
            if n.M is not None:
                self._check_grid()
        if self.pipeline == "duality":
            L = self.lattice.L
            if L < 2:
                raise ConfigError("lattice.L must be >= 2")
            if not c.t > 0:
                raise ConfigError("campaign.t must be > 0")
            if c.replicas < 2:
                raise ConfigError("campaign.replicas must be >= 2")
            if len(c.sites) < 1:
                raise ConfigError("campaign.sites must not be empty")
            self._int_list("campaign.sites", c.sites)
        if self.pipeline == "stationary":
            if not c.T_burn > 0:
                raise ConfigError("campaign.T_burn must be > 0 for the stationary pipeline")
            if c.samples < 2:
                raise ConfigError("campaign.samples must be >= 2")
            self._int_list("campaign.sites", c.sites)
            if any(v < 0 for v in c.thetas):
                raise ConfigError("campaign.thetas must be >= 0")
            if c.thetas and c.replicas < 2:
                raise ConfigError("campaign.replicas must be >= 2")
        if self.pipeline == "occupation":
            self._int_list("campaign.N", c.N)
            if len(c.N) < 1 or min(c.N) < 1:
                raise ConfigError("campaign.N must be a non-empty list of positive integers")
            from .voter import OccupationConfig

            OccupationConfig(m.d, m.alpha, m.p, self.lattice.L, c.N, c.t_grid, c.replicas, c.T_burn,
                             c.method).validate()

    def _check_grid(self):
        from .spectral import _h_guard

        M = self.numerics.M
        for N in self.numerics.lclt_N:
            T = self.numerics.lclt_t * float(N)
            if 4.0 * _h_guard(T, self.model.alpha) + 1 > M:
                raise ConfigError(f"numerics.M = {M} cannot hold the spread of the walk at time {T:g}")

    def _int_list(self, where, xs):
        d = self.model.d
        for v in xs:
            flat = v if isinstance(v, list) else [v]
            if any(not isinstance(u, int) or isinstance(u, bool) for u in flat):
                raise ConfigError(f"{where} entries must be integers or integer lists, got {v!r}")
            if where == "campaign.sites" and len(flat) != d:
                raise ConfigError(f"{where} entry {v!r} is not a point of Z^{d}")


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_yaml(Path(path).read_text())
