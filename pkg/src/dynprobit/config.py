"""Run configuration read from a single JSON file.

Matrices are row-major nested lists.  A scalar ``c`` for G, W or P0 means
``c * I_p``; a (p, p) matrix is reused for every t; a list of n matrices
gives one per time point.  Exactly one data source is allowed: ``csv`` or
``simulate``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .ep import EpConfig


class ConfigError(ValueError):
    pass


@dataclass
class ModelSpec:
    G: object = 1.0
    W: object = 0.01
    P0: object = 3.0
    n: int | None = None
    p: int | None = None


@dataclass
class SimulateSpec:
    seed: int = 0
    covariates: str = "binary"


@dataclass
class DataSpec:
    csv: str | None = None
    simulate: SimulateSpec | None = None

    def __post_init__(self):
        if (self.csv is None) == (self.simulate is None):
            raise ConfigError("data needs exactly one of 'csv' or 'simulate'")
        if self.simulate is not None and self.simulate.covariates not in ("binary", "gaussian"):
            raise ConfigError("simulate.covariates must be 'binary' or 'gaussian'")


@dataclass
class OracleConfig:
    method: str = "gibbs"
    draws: int = 20_000
    burn_in: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("rejection", "gibbs", "quadrature"):
            raise ConfigError(f"unknown oracle method {self.method!r}")
        if self.draws < 2 or self.burn_in < 0:
            raise ConfigError("oracle.draws must be >= 2 and oracle.burn_in >= 0")


@dataclass
class OutputConfig:
    dir: str = "out"
    covariance: bool = False
    draws: bool = False


@dataclass
class CompareConfig:
    gate: float = 0.1


@dataclass
class BenchConfig:
    grid: list = field(default_factory=lambda: [[50, 2], [100, 2], [200, 2], [400, 2],
                                                [100, 1], [100, 4], [100, 8]])
    seed: int = 0
    repeats: int = 3


@dataclass
class RunConfig:
    model: ModelSpec = field(default_factory=ModelSpec)
    data: DataSpec | None = None
    ep: EpConfig = field(default_factory=EpConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    compare: CompareConfig = field(default_factory=CompareConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    base_dir: Path = field(default=Path("."), repr=False)

    def csv_path(self) -> Path:
        path = Path(self.data.csv)
        return path if path.is_absolute() else self.base_dir / path


_SECTIONS = {"model": ModelSpec, "ep": EpConfig, "oracle": OracleConfig,
             "compare": CompareConfig, "bench": BenchConfig, "output": OutputConfig}


def _build(cls, raw, where: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(raw: dict, base_dir: Path | str = ".") -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - set(_SECTIONS) - {"data"}
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}")
    kwargs = {name: _build(cls, raw[name], name) for name, cls in _SECTIONS.items() if name in raw}
    if "data" in raw:
        data = dict(raw["data"])
        if isinstance(data.get("simulate"), dict):
            data["simulate"] = _build(SimulateSpec, data["simulate"], "data.simulate")
        kwargs["data"] = _build(DataSpec, data, "data")
    return RunConfig(base_dir=Path(base_dir), **kwargs)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(raw, path.parent)


def expand_matrix(name: str, spec, n: int, p: int) -> np.ndarray:
    """Turn a scalar, (p, p) or per-t list spec into an (n, p, p) array."""
    arr = np.asarray(spec, dtype=float)
    if arr.ndim == 0:
        return np.broadcast_to(float(arr) * np.eye(p), (n, p, p)).copy()
    if arr.shape == (p, p):
        return np.broadcast_to(arr, (n, p, p)).copy()
    if arr.shape == (n, p, p):
        return arr
    raise ConfigError(f"model.{name} has shape {arr.shape}; expected scalar, ({p}, {p}) "
                      f"or ({n}, {p}, {p})")
