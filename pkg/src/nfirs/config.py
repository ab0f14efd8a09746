"""Scenario configuration: array sizes, OFDM numerology, training dimensions, codebook grids."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SPEED_OF_LIGHT = 299_792_458.0

Range = tuple[float, float]


@dataclass(frozen=True)
class ScenarioConfig:
    """All physical and training constants of one scenario.

    The defaults are the desk-scale setup (8 x 8 IRS, 16-element UE/BS,
    P = Q = T_a = 16, L = 4). ``ScenarioConfig.paper()`` gives the full-size
    512-element configuration.

    ``d`` defaults to half a wavelength. Codebook ranges default to the path
    sampling ranges. Angles are radians, distances meters, frequencies Hz.
    """

    n_y: int = 8
    n_z: int = 8
    n_t: int = 16
    n_b: int = 16
    f_c: float = 100e9
    f_s: float = 320e6
    p0: int = 256
    p: int = 16
    t_a: int = 16
    q: int = 16
    n_paths: int = 4
    d: float | None = None

    theta_range: Range = (0.0, math.pi)
    phi_range: Range = (-math.pi / 2, math.pi / 2)
    psi_range: Range = (-math.pi / 2, math.pi / 2)
    dist_range: Range = (1.0, 6.0)

    g_z: int = 180
    g_y: int = 180
    g_u: int = 720
    theta_grid_range: Range | None = None
    phi_grid_range: Range | None = None
    psi_grid_range: Range | None = None

    # known BS-IRS link
    alpha_bs: complex = 1.0
    tau_bs: float = 0.0
    phi_b: float = 0.3
    theta_irs: float = 1.1
    phi_irs: float = 0.7

    min_z_separation: float = 1e-3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.d is None:
            object.__setattr__(self, "d", self.wavelength / 2)
        for name in ("theta_range", "phi_range", "psi_range", "dist_range",
                     "theta_grid_range", "phi_grid_range", "psi_grid_range"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, (float(val[0]), float(val[1])))
        object.__setattr__(self, "alpha_bs", complex(self.alpha_bs))
        self._check()

    def _check(self) -> None:
        for name in ("n_y", "n_z", "n_t", "n_b", "p0", "p", "t_a", "q", "n_paths", "g_z", "g_y", "g_u"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not self.d > 0:
            raise ConfigError("element spacing d must be positive")
        if not 0 < self.f_s < self.f_c:
            raise ConfigError("need 0 < f_s < f_c")
        if self.p > self.p0:
            raise ConfigError("training subcarriers P cannot exceed P_0")
        lo, hi = self.dist_range
        if not 0 < lo < hi:
            raise ConfigError("dist_range must satisfy 0 < lo < hi")
        if hi / SPEED_OF_LIGHT >= self.delay_period:
            raise ConfigError("dist_range exceeds the unambiguous delay range c*P_0/f_s")
        if self.tau_bs < 0:
            raise ConfigError("tau_bs must be nonnegative")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f_c

    @property
    def n_r(self) -> int:
        return self.n_y * self.n_z

    @property
    def delay_period(self) -> float:
        """Unambiguous delay range P_0 / f_s of the delay generator."""
        return self.p0 / self.f_s

    @property
    def tensor_shape(self) -> tuple[int, int, int]:
        return (self.q, self.t_a, self.p)

    def uniqueness_holds(self, n_paths: int | None = None) -> bool:
        L = self.n_paths if n_paths is None else n_paths
        return min((self.p - 1) * self.t_a, self.q) >= L

    def grid_ranges(self) -> tuple[Range, Range, Range]:
        return (self.theta_grid_range or self.theta_range,
                self.phi_grid_range or self.phi_range,
                self.psi_grid_range or self.psi_range)

    def replace(self, **changes: Any) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in dataclasses.fields(self):
            val = getattr(self, f.name)
            if isinstance(val, complex):
                val = [val.real, val.imag]
            elif isinstance(val, tuple):
                val = list(val)
            out[f.name] = val
        return out

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScenarioConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "alpha_bs" in kwargs and isinstance(kwargs["alpha_bs"], (list, tuple)):
            re, im = kwargs["alpha_bs"]
            kwargs["alpha_bs"] = complex(re, im)
        for key, val in kwargs.items():
            if isinstance(val, list):
                kwargs[key] = tuple(val)
        return cls(**kwargs)

    @classmethod
    def desk(cls, **overrides: Any) -> "ScenarioConfig":
        return cls(**overrides)

    @classmethod
    def paper(cls, **overrides: Any) -> "ScenarioConfig":
        """512-element IRS (64 x 8), 64-element UE/BS, G_z = G_y = 300, G_u = 2000.

        Path directions are drawn from (0, 2*pi) as in the original setup.
        """
        base = dict(
            n_y=64, n_z=8, n_t=64, n_b=64, g_z=300, g_y=300, g_u=2000,
            theta_range=(0.0, 2 * math.pi), phi_range=(0.0, 2 * math.pi),
            psi_range=(0.0, 2 * math.pi),
        )
        base.update(overrides)
        return cls(**base)


def load_config(path: str | Path, **overrides: Any) -> ScenarioConfig:
    """Read a TOML key/value file. A ``preset = "paper"`` key selects the paper-scale base."""
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    preset = data.pop("preset", "desk")
    data.update(overrides)
    if preset not in ("paper", "desk"):
        raise ConfigError(f"unknown preset {preset!r}")
    base = ScenarioConfig.paper() if preset == "paper" else ScenarioConfig()
    merged = base.to_dict()
    merged["d"] = None  # half-wavelength unless given explicitly
    merged.update(data)
    return ScenarioConfig.from_dict(merged)
