"""Experiment configuration: TOML schema, validation, canonical hashing.

The file format is TOML with flat top-level keys plus the sections
[dataset], [weights], [architecture], and [schedule].  Every key is
optional (defaults below), unknown keys are rejected with their full path
so typos fail loudly.  The resolved configuration hashes to a stable
identifier that every output file embeds, making reruns auditable.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, fields

from .active import INIT_MODES, STRATEGIES, Schedule
from .datasets import KINDS, SyntheticSpec
from .losses import LossWeights
from .networks import Architecture

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Configuration schema violation; the message names the offending key."""


@dataclass(frozen=True)
class DatasetConfig:
    """Either a synthetic recipe or a labeled CSV (kind = "csv", path set)."""

    kind: str = "gaussian-blobs"
    n: int = 2000
    dim: int = 32
    classes: int = 8
    dispersion: float = 1.0
    center_radius: float = 3.0
    seed: int = 0
    path: str | None = None

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(
            kind=self.kind,
            n=self.n,
            dim=self.dim,
            n_classes=self.classes,
            dispersion=self.dispersion,
            center_radius=self.center_radius,
            seed=self.seed,
        )


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    trials: int = 5
    strategies: tuple = ("sraal", "random")
    init: str = "random"
    labeled_fraction: float = 0.10
    step_fraction: float = 0.05
    budget_fraction: float = 0.40
    out_dir: str = "results"
    timing: bool = False
    checked: bool = False
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    architecture: Architecture = field(default_factory=Architecture)
    schedule: Schedule = field(default_factory=Schedule)


_SECTION_TYPES = {
    "dataset": DatasetConfig,
    "weights": LossWeights,
    "architecture": Architecture,
    "schedule": Schedule,
}


def _coerce(path: str, value, target_type):
    if target_type is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if target_type is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if target_type is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if target_type is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    return value


def _build_section(name: str, cls, data: dict):
    if not isinstance(data, dict):
        raise ConfigError(f"{name}: expected a section/table")
    spec = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in spec:
            raise ConfigError(f"{name}.{key}: unknown key")
        path = f"{name}.{key}"
        ftype = str(spec[key].type)
        if ftype == "tuple":
            if not isinstance(value, (list, tuple)) or not all(
                isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in value
            ):
                raise ConfigError(f"{path}: expected a list of positive layer widths")
            kwargs[key] = tuple(value)
        else:
            base = {"int": int, "float": float, "str": str, "bool": bool}.get(ftype)
            kwargs[key] = _coerce(path, value, base)
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    """Validate a parsed mapping into an ExperimentConfig."""
    if not isinstance(data, dict):
        raise ConfigError("top level: expected a table")
    known_flat = {
        "seed": int,
        "trials": int,
        "strategies": list,
        "init": str,
        "labeled_fraction": float,
        "step_fraction": float,
        "budget_fraction": float,
        "out_dir": str,
        "timing": bool,
        "checked": bool,
    }
    kwargs: dict = {}
    for key, value in data.items():
        if key in _SECTION_TYPES:
            kwargs[key] = _build_section(key, _SECTION_TYPES[key], value)
        elif key in known_flat:
            if key == "strategies":
                if not isinstance(value, (list, tuple)) or not value:
                    raise ConfigError("strategies: expected a non-empty list of names")
                for s in value:
                    if s not in STRATEGIES:
                        raise ConfigError(
                            f"strategies: unknown strategy {s!r}; expected one of {STRATEGIES}"
                        )
                kwargs[key] = tuple(value)
            else:
                kwargs[key] = _coerce(key, value, known_flat[key])
        else:
            raise ConfigError(f"{key}: unknown key")
    cfg = ExperimentConfig(**kwargs)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.seed < 0:
        raise ConfigError(f"seed: must be >= 0, got {cfg.seed}")
    if cfg.trials < 1:
        raise ConfigError(f"trials: must be >= 1, got {cfg.trials}")
    if cfg.init not in INIT_MODES:
        raise ConfigError(f"init: unknown mode {cfg.init!r}; expected one of {INIT_MODES}")
    for name in ("labeled_fraction", "step_fraction", "budget_fraction"):
        value = getattr(cfg, name)
        if not 0.0 < value <= 1.0:
            raise ConfigError(f"{name}: must lie in (0, 1], got {value}")
    if cfg.budget_fraction < cfg.labeled_fraction:
        raise ConfigError(
            f"budget_fraction: {cfg.budget_fraction} below labeled_fraction {cfg.labeled_fraction}"
        )
    ds = cfg.dataset
    if ds.kind == "csv":
        if not ds.path:
            raise ConfigError("dataset.path: required when dataset.kind is 'csv'")
    elif ds.kind not in KINDS:
        raise ConfigError(f"dataset.kind: unknown kind {ds.kind!r}; expected {KINDS + ('csv',)}")
    else:
        try:
            ds.synthetic_spec()
        except ValueError as exc:
            raise ConfigError(f"dataset: {exc}") from exc
    sched = cfg.schedule
    for name in ("target_epochs", "sraal_epochs", "uir_pretrain_epochs"):
        if getattr(sched, name) < 0:
            raise ConfigError(f"schedule.{name}: must be >= 0")
    if sched.batch_size < 1:
        raise ConfigError(f"schedule.batch_size: must be >= 1, got {sched.batch_size}")
    if sched.learning_rate <= 0:
        raise ConfigError(f"schedule.learning_rate: must be > 0, got {sched.learning_rate}")
    if cfg.architecture.latent_dim < 1:
        raise ConfigError(f"architecture.latent_dim: must be >= 1, got {cfg.architecture.latent_dim}")


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)


def canonical_dict(cfg: ExperimentConfig) -> dict:
    data = asdict(cfg)
    data["strategies"] = list(cfg.strategies)
    for key in ("trunk", "decoder", "discriminator", "target"):
        data["architecture"][key] = list(data["architecture"][key])
    return data


def config_hash(cfg: ExperimentConfig) -> str:
    """Stable digest of the resolved configuration (overrides included)."""
    blob = json.dumps(canonical_dict(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
