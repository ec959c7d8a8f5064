"""Run configuration: a TOML file with one table per concern.

Example::

    [mesh]
    nx = 60
    ny = 20

    [material]
    E = 1.0
    nu = 0.3
    thickness = 1.0

    [design]
    filter_radius = 2.0
    x_min = 0.001
    volume_fraction = 0.4
    x_init = 0.4

    [objective]
    kind = "mean_std"         # "mean" | "mean_std"
    m = 2.0
    method = "diag_corrected" # "exact" | "trace" | "diag_corrected"
    correction_refresh = 0    # re-measure ratios every k stages (0 = once)

    [probes]
    kind = "hadamard"         # "hadamard" | "rademacher"
    N = 8
    seed = 0

    [scenarios]
    L = 64
    R = 10
    seed = 0
    file = ""                 # optional CSV written by ``scenarios export``

    [continuation]
    p_start = 1.0
    p_end = 6.0
    p_step = 0.5
    beta_start = 0.0
    beta_end = 20.0
    beta_step = 4.0
    tol_start = 1e-3
    tol_end = 1e-4

    [mma]
    max_iters = 1000
    move = 0.5

    [output]
    dir = "out"

Every key is optional; missing keys take the defaults of :class:`RunConfig`.
"""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .mma import MmaParams
from .problem import METHODS, OBJECTIVES

__all__ = ["ConfigError", "RunConfig", "load_config"]

PROBE_KINDS = ("hadamard", "rademacher")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass
class RunConfig:
    nx: int = 60
    ny: int = 20
    E: float = 1.0
    nu: float = 0.3
    thickness: float = 1.0
    filter_radius: float = 2.0
    x_min: float = 0.001
    volume_fraction: float = 0.4
    x_init: float = 0.4
    objective: str = "mean"
    m: float = 2.0
    method: str = "exact"
    correction_refresh: int = 0
    probe_kind: str = "hadamard"
    N: int = 8
    probe_seed: int = 0
    L: int = 64
    R: int = 10
    scenario_seed: int = 0
    scenario_file: str = ""
    p_start: float = 1.0
    p_end: float = 6.0
    p_step: float = 0.5
    beta_start: float = 0.0
    beta_end: float = 20.0
    beta_step: float = 4.0
    tol_start: float = 1e-3
    tol_end: float = 1e-4
    mma: dict[str, Any] = field(default_factory=dict)
    output_dir: str = "out"

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.nx < 1 or self.ny < 1:
            raise ConfigError("mesh dimensions must be at least 1")
        for name in ("E", "thickness", "volume_fraction", "x_init", "p_start", "p_end",
                     "tol_start", "tol_end"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive number, got {v!r}")
        if not -1.0 < self.nu < 0.5:
            raise ConfigError(f"nu must lie in (-1, 0.5), got {self.nu}")
        if self.filter_radius < 0:
            raise ConfigError("filter_radius must be non-negative")
        if not 0 < self.x_min < 1:
            raise ConfigError("x_min must lie in (0, 1)")
        if not self.volume_fraction <= 1 or not self.x_init <= 1:
            raise ConfigError("volume_fraction and x_init must not exceed 1")
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.objective == "mean_std" and self.method == "trace":
            raise ConfigError("mean_std needs method 'exact' or 'diag_corrected'")
        if self.correction_refresh < 0:
            raise ConfigError("correction_refresh must be non-negative")
        if self.m < 0:
            raise ConfigError("m must be non-negative")
        if self.probe_kind not in PROBE_KINDS:
            raise ConfigError(f"probe kind must be one of {PROBE_KINDS}")
        if self.N < 1 or self.L < 1:
            raise ConfigError("N and L must be at least 1")
        if self.R < 4:
            raise ConfigError("R must be at least 4")
        if self.p_start < 1 or self.p_end < self.p_start:
            raise ConfigError("need 1 <= p_start <= p_end")
        if self.tol_end > self.tol_start:
            raise ConfigError("tol_end must not exceed tol_start")
        if self.p_step < 0 or self.beta_step < 0 or self.beta_start < 0:
            raise ConfigError("continuation steps and beta_start must be non-negative")
        try:
            self.mma_params()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[mma]: {exc}") from exc

    def mma_params(self) -> MmaParams:
        return MmaParams(**self.mma)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        """Build from the nested TOML layout; unknown keys are rejected."""
        flat: dict[str, Any] = {}
        data = dict(data)
        for section, table in data.items():
            if section not in _SECTIONS:
                raise ConfigError(f"unknown section [{section}]")
            if not isinstance(table, dict):
                raise ConfigError(f"[{section}] must be a table")
            if section == "mma":
                flat["mma"] = dict(table)
                continue
            for key, value in table.items():
                target = _SECTIONS[section].get(key)
                if target is None:
                    raise ConfigError(f"unknown key {section}.{key}")
                flat[target] = value
        try:
            return cls(**flat)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, dict[str, Any]] = {}
        for section, keys in _SECTIONS.items():
            out[section] = {k: getattr(self, attr) for k, attr in keys.items()}
        out["mma"] = dict(self.mma)
        return out

    def replace(self, **changes: Any) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_SECTIONS: dict[str, dict[str, str]] = {
    "mesh": {"nx": "nx", "ny": "ny"},
    "material": {"E": "E", "nu": "nu", "thickness": "thickness"},
    "design": {"filter_radius": "filter_radius", "x_min": "x_min",
               "volume_fraction": "volume_fraction", "x_init": "x_init"},
    "objective": {"kind": "objective", "m": "m", "method": "method",
                  "correction_refresh": "correction_refresh"},
    "probes": {"kind": "probe_kind", "N": "N", "seed": "probe_seed"},
    "scenarios": {"L": "L", "R": "R", "seed": "scenario_seed", "file": "scenario_file"},
    "continuation": {k: k for k in ("p_start", "p_end", "p_step", "beta_start", "beta_end",
                                    "beta_step", "tol_start", "tol_end")},
    "mma": {},
    "output": {"dir": "output_dir"},
}


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return RunConfig.from_dict(data)
