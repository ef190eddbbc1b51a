"""Declarative run configuration: nested dataclasses loaded from YAML.

Every field can be overridden with a dotted ``key=value`` pair, e.g.
``landscape.stall_n=30`` or ``kernel.nu_free=true``; values are parsed as
YAML scalars.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .landscape import BasinHoppingConfig

OUT_ENV = "GPLANDSCAPE_OUT"


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass
class DatasetConfig:
    source: str = "schwefel"  # schwefel | csv | npz
    d: int = 3
    n: int = 100
    low: float = -100.0
    high: float = 100.0
    seed: int = 0
    path: str | None = None
    target: str | None = None
    delimiter: str = ","
    test_fraction: float = 0.2
    split_seed: int = 0
    # None: raw features for schwefel, standardized otherwise
    standardize_features: bool | None = None
    standardize_targets: bool = True


@dataclass
class KernelConfig:
    nu: float = 2.5
    nu_free: bool = False
    nu_max: float = 10.0
    isotropic: bool = False
    log_amplitude_bounds: list = field(default_factory=lambda: [-4.0, 4.0])
    log_lengthscale_bounds: list = field(default_factory=lambda: [-3.0, 5.0])
    log_noise_bounds: list = field(default_factory=lambda: [-12.0, 0.0])
    scale_lengthscales: bool = True


@dataclass
class LandscapeConfig:
    metropolis_c: float | None = None
    step_scale: float = 1.0
    stall_n: int = 20
    max_steps: int = 200
    local_tol: float = 1e-3
    max_local_iter: int = 1000
    n_initial: int = 10
    dedup_loss_tol: float = 1e-4
    dedup_theta_tol: float = 0.05
    seed: int = 0
    transitions: bool = False
    n_images: int = 11
    k_spring: float = 1.0
    pair_budget: int | None = None
    n_levels: int = 20

    def basin_hopping(self) -> BasinHoppingConfig:
        names = {f.name for f in dataclasses.fields(BasinHoppingConfig)}
        return BasinHoppingConfig(**{k: v for k, v in dataclasses.asdict(self).items()
                                     if k in names})


@dataclass
class SweepConfig:
    nu_start: float = 0.5
    nu_stop: float = 4.0
    nu_step: float = 0.1
    warm_start: bool = True


@dataclass
class FitConfig:
    n_starts: int = 10
    seed: int = 0


@dataclass
class OptimizeNuConfig:
    repeats: int = 5
    fixed_nu: float = 2.5


@dataclass
class EnsembleConfig:
    schemes: list = field(default_factory=lambda: ["unweighted", "nlml", "occupation",
                                                   "hessian_norm", "train_mse"])
    threshold: int = 10


@dataclass
class RunConfig:
    output_dir: str = "run"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    landscape: LandscapeConfig = field(default_factory=LandscapeConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    fit: FitConfig = field(default_factory=FitConfig)
    optimize_nu: OptimizeNuConfig = field(default_factory=OptimizeNuConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        """sha256 of the settings; the output location is not part of it."""
        body = self.to_dict()
        del body["output_dir"]
        blob = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def output_path(self) -> Path:
        p = Path(self.output_dir)
        root = os.environ.get(OUT_ENV)
        if root and not p.is_absolute():
            p = Path(root) / p
        return p


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected a mapping, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in fields:
            raise ConfigError(f"unknown key {where + '.' if where else ''}{key}")
        sub = _nested_type(cls, key)
        kwargs[key] = _build(sub, value, f"{where}.{key}" if where else key) if sub else value
    try:
        obj = cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from None
    return obj


def _nested_type(cls, name):
    default = cls().__dict__.get(name) if dataclasses.is_dataclass(cls) else None
    return type(default) if dataclasses.is_dataclass(default) else None


def from_dict(data: dict | None) -> RunConfig:
    cfg = _build(RunConfig, data or {}, "")
    validate(cfg)
    return cfg


def load(path=None, overrides=()) -> RunConfig:
    """Read a YAML file (optional) and apply ``key=value`` overrides."""
    data: dict = {}
    if path is not None:
        try:
            data = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    for item in overrides:
        apply_override(data, item)
    return from_dict(data)


def apply_override(data: dict, item: str) -> None:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    key, raw = item.split("=", 1)
    parts = key.strip().split(".")
    if not all(parts):
        raise ConfigError(f"bad override key {key!r}")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value in {item!r}: {exc}") from None
    node = data
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {item!r} descends into a scalar")
    node[parts[-1]] = value


def validate(cfg: RunConfig) -> None:
    ds = cfg.dataset
    if ds.source not in ("schwefel", "csv", "npz"):
        raise ConfigError(f"dataset.source must be schwefel, csv or npz, not {ds.source!r}")
    if ds.source in ("csv", "npz") and not ds.path:
        raise ConfigError(f"dataset.path is required for source {ds.source}")
    if ds.source == "csv" and not ds.target:
        raise ConfigError("dataset.target is required for csv input")
    if not 0.0 < ds.test_fraction < 1.0:
        raise ConfigError("dataset.test_fraction must lie in (0, 1)")
    k = cfg.kernel
    if not k.nu_max > 0.5:
        raise ConfigError("kernel.nu_max must exceed 0.5")
    if not k.nu_free and not 0.5 <= k.nu <= k.nu_max:
        raise ConfigError("kernel.nu must lie in [0.5, nu_max]")
    try:
        cfg.landscape.basin_hopping()
    except ValueError as exc:
        raise ConfigError(f"landscape: {exc}") from None
    s = cfg.sweep
    if not (s.nu_step > 0 and 0.5 <= s.nu_start <= s.nu_stop <= k.nu_max):
        raise ConfigError("sweep grid must satisfy 0.5 <= nu_start <= nu_stop <= nu_max, step > 0")
    if cfg.fit.n_starts < 1 or cfg.optimize_nu.repeats < 1:
        raise ConfigError("fit.n_starts and optimize_nu.repeats must be >= 1")
    for sch in cfg.ensemble.schemes:
        if sch not in ("unweighted", "nlml", "occupation", "hessian_norm", "train_mse"):
            raise ConfigError(f"unknown ensemble scheme {sch!r}")
