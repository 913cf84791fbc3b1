"""JSON run configuration."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigError
from .geometry import BoundaryCurve, curve_from_spec

__all__ = ["RunConfig", "load_config", "DEFAULT_TOLERANCES"]

DEFAULT_TOLERANCES = {
    "eig_tol": 1e-11,
    "gap_tol": 1e-6,
    "compat_tol": 1e-6,
    "min_slope": 1.7,
}


@dataclass
class RunConfig:
    curve: dict
    mass_M: float
    j: int = 1
    k: int = 6
    eps_list: list = field(default_factory=list)
    mesh: dict = field(default_factory=lambda: {"n_tangential": 160, "n_layer": 4})
    mesh_file: str | None = None
    disk_mode: bool = False
    order: int = 0
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.curve, dict) or "kind" not in self.curve:
            raise ConfigError("curve must be an object with a 'kind' key")
        try:
            self.mass_M = float(self.mass_M)
        except (TypeError, ValueError):
            raise ConfigError("mass_M must be a number") from None
        if self.mass_M <= 0:
            raise ConfigError("mass_M must be positive")
        if int(self.j) != self.j or self.j < 0:
            raise ConfigError("j must be a non-negative integer")
        self.j = int(self.j)
        self.eps_list = [float(e) for e in self.eps_list]
        if any(b >= a for a, b in zip(self.eps_list, self.eps_list[1:])):
            raise ConfigError("eps_list must be strictly decreasing")
        if any(e <= 0 for e in self.eps_list):
            raise ConfigError("eps_list entries must be positive")
        for key in ("n_tangential", "n_layer"):
            if key not in self.mesh:
                raise ConfigError(f"mesh needs '{key}'")
        if self.order not in (0, 1):
            raise ConfigError("order must be 0 or 1")
        unknown = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ConfigError(f"unknown tolerance keys: {sorted(unknown)}")
        self.tolerances = {**DEFAULT_TOLERANCES, **self.tolerances}

    def build_curve(self) -> BoundaryCurve:
        c = curve_from_spec(self.curve)
        bad = [e for e in self.eps_list if e >= c.max_eps]
        if bad:
            raise ConfigError(f"eps {bad[0]} is not below max_eps={c.max_eps:.6g}")
        return c

    def override(self, items):
        """Apply ``K=V`` tolerance overrides."""
        for item in items or []:
            key, sep, val = item.partition("=")
            if not sep or key not in DEFAULT_TOLERANCES:
                raise ConfigError(f"bad tolerance override {item!r}")
            try:
                self.tolerances[key] = float(val)
            except ValueError:
                raise ConfigError(f"tolerance {key} needs a number, got {val!r}") from None
        return self

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def load_config(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    fields = set(RunConfig.__dataclass_fields__)
    unknown = set(raw) - fields
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "curve" not in raw or "mass_M" not in raw:
        raise ConfigError("config needs 'curve' and 'mass_M'")
    return RunConfig(**raw)
