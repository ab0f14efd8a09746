"""Array responses and per-subcarrier channel matrices.

IRS elements are flattened with the z index fastest, k = (n_y - 1) * N_z + n_z,
which is the index order of kron(a_y, a_z).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .config import SPEED_OF_LIGHT, ScenarioConfig


@dataclass(frozen=True)
class PathParams:
    """One UE-IRS path. Angles in radians, ``u`` in meters."""

    theta_e: float
    phi_a: float
    psi: float
    u: float
    gamma: complex = 1.0

    @property
    def tau(self) -> float:
        return self.u / SPEED_OF_LIGHT


@dataclass(frozen=True)
class PathSet:
    """L paths stored column-wise as arrays."""

    theta_e: np.ndarray
    phi_a: np.ndarray
    psi: np.ndarray
    u: np.ndarray
    gamma: np.ndarray

    def __post_init__(self) -> None:
        for name in ("theta_e", "phi_a", "psi", "u"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        object.__setattr__(self, "gamma", np.atleast_1d(np.asarray(self.gamma, dtype=complex)))
        n = len(self.u)
        if any(len(getattr(self, k)) != n for k in ("theta_e", "phi_a", "psi", "gamma")):
            raise ValueError("all path parameter arrays must have the same length")
        if np.any(self.u <= 0):
            raise ValueError("path distances must be positive")

    @property
    def tau(self) -> np.ndarray:
        return self.u / SPEED_OF_LIGHT

    def __len__(self) -> int:
        return len(self.u)

    def __iter__(self) -> Iterator[PathParams]:
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i: int) -> PathParams:
        return PathParams(float(self.theta_e[i]), float(self.phi_a[i]), float(self.psi[i]),
                          float(self.u[i]), complex(self.gamma[i]))

    @classmethod
    def from_paths(cls, paths: Sequence[PathParams]) -> "PathSet":
        return cls(
            theta_e=[p.theta_e for p in paths], phi_a=[p.phi_a for p in paths],
            psi=[p.psi for p in paths], u=[p.u for p in paths],
            gamma=[p.gamma for p in paths],
        )

    def permuted(self, order: Sequence[int]) -> "PathSet":
        order = np.asarray(order)
        return PathSet(self.theta_e[order], self.phi_a[order], self.psi[order],
                       self.u[order], self.gamma[order])

    def replace(self, **changes) -> "PathSet":
        vals = {k: getattr(self, k) for k in ("theta_e", "phi_a", "psi", "u", "gamma")}
        vals.update(changes)
        return PathSet(**vals)


@dataclass(frozen=True)
class BsIrsLink:
    alpha: complex = 1.0
    tau: float = 0.0
    phi_b: float = 0.3
    theta_irs: float = 1.1
    phi_irs: float = 0.7

    def __post_init__(self) -> None:
        if self.tau < 0:
            raise ValueError("BS-IRS delay must be nonnegative")

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "BsIrsLink":
        return cls(cfg.alpha_bs, cfg.tau_bs, cfg.phi_b, cfg.theta_irs, cfg.phi_irs)


def element_offsets(cfg: ScenarioConfig) -> tuple[np.ndarray, np.ndarray]:
    """(y, z) offsets in meters of every IRS element from the reference element, flattened order."""
    ny, nz = np.meshgrid(np.arange(cfg.n_y), np.arange(cfg.n_z), indexing="ij")
    return ny.ravel() * cfg.d, nz.ravel() * cfg.d


def nf_path_difference(theta_e, phi_a, u, cfg: ScenarioConfig) -> np.ndarray:
    """u_k - u for every element, shape ``broadcast(theta_e, phi_a, u).shape + (N_r,)``.

    Evaluated as (u_k^2 - u^2) / (u_k + u) to avoid cancellation at large u.
    """
    ry, rz = element_offsets(cfg)
    theta_e, phi_a, u = (np.asarray(x, dtype=float)[..., None] for x in (theta_e, phi_a, u))
    sy = np.sin(theta_e) * np.sin(phi_a)
    sz = np.cos(theta_e)
    num = ry**2 + rz**2 - 2 * ry * u * sy - 2 * rz * u * sz
    return num / (np.sqrt(u**2 + num) + u)


def nf_element_distance(path: PathParams, n_y: int, n_z: int, cfg: ScenarioConfig) -> float:
    """Distance from the path's scatterer to IRS element (n_y, n_z), 1-based indices."""
    if not (1 <= n_y <= cfg.n_y and 1 <= n_z <= cfg.n_z):
        raise IndexError(f"element ({n_y}, {n_z}) outside the {cfg.n_y} x {cfg.n_z} array")
    u, d = path.u, cfg.d
    oy, oz = (n_y - 1) * d, (n_z - 1) * d
    st, ct = np.sin(path.theta_e), np.cos(path.theta_e)
    val = u**2 + oy**2 + oz**2 - 2 * oy * u * st * np.sin(path.phi_a) - 2 * oz * u * ct
    return float(np.sqrt(max(val, 0.0)))


def irs_nf_responses(theta_e, phi_a, u, cfg: ScenarioConfig) -> np.ndarray:
    """Near-field IRS responses, one per trailing-axis vector: shape ``(..., N_r)``."""
    return np.exp(-2j * np.pi * nf_path_difference(theta_e, phi_a, u, cfg) / cfg.wavelength)


def irs_nf_response(path: PathParams, cfg: ScenarioConfig) -> np.ndarray:
    return irs_nf_responses(path.theta_e, path.phi_a, path.u, cfg)


def ula_response(x, n: int, cfg: ScenarioConfig) -> np.ndarray:
    """exp(-j 2 pi (k-1) d x / lambda), k = 1..n; ``x`` is the direction sine. Shape ``(..., n)``."""
    x = np.asarray(x, dtype=float)[..., None]
    return np.exp(-2j * np.pi * np.arange(n) * cfg.d * x / cfg.wavelength)


def ue_ff_response(psi, cfg: ScenarioConfig) -> np.ndarray:
    return ula_response(np.sin(psi), cfg.n_t, cfg)


def bs_ff_response(phi_b, cfg: ScenarioConfig) -> np.ndarray:
    return ula_response(np.sin(phi_b), cfg.n_b, cfg)


def irs_ff_response(theta_irs: float, phi_irs: float, cfg: ScenarioConfig) -> np.ndarray:
    """Far-field UPA response kron(a_y(sin(theta) sin(phi)), a_z(cos(phi)))."""
    a_y = ula_response(np.sin(theta_irs) * np.sin(phi_irs), cfg.n_y, cfg)
    a_z = ula_response(np.cos(phi_irs), cfg.n_z, cfg)
    return np.kron(a_y, a_z)


def delay_generator(tau, cfg: ScenarioConfig) -> np.ndarray:
    """z = exp(-j 2 pi f_s tau / P_0)."""
    return np.exp(-2j * np.pi * cfg.f_s * np.asarray(tau, dtype=float) / cfg.p0)


def ue_irs_channel(paths: PathSet, p: int, cfg: ScenarioConfig) -> np.ndarray:
    """H_{u,p} (N_r x N_t) at subcarrier p (1-based)."""
    if not 1 <= p <= cfg.p:
        raise IndexError(f"subcarrier {p} outside 1..{cfg.p}")
    a_irs = irs_nf_responses(paths.theta_e, paths.phi_a, paths.u, cfg).T  # N_r x L
    a_ue = ue_ff_response(paths.psi, cfg).T  # N_t x L
    w = paths.gamma * delay_generator(paths.tau, cfg) ** p
    return (a_irs * w) @ a_ue.conj().T


def bs_irs_channel(link: BsIrsLink, p: int, cfg: ScenarioConfig) -> np.ndarray:
    """H_{s,p} (N_b x N_r) of the known far-field BS-IRS link."""
    if not 1 <= p <= cfg.p:
        raise IndexError(f"subcarrier {p} outside 1..{cfg.p}")
    phase = np.exp(-2j * np.pi * cfg.f_s * link.tau * p / cfg.p0)
    a_b = bs_ff_response(link.phi_b, cfg)
    a_irs = irs_ff_response(link.theta_irs, link.phi_irs, cfg)
    return link.alpha * phase * np.outer(a_b, a_irs.conj())


def rayleigh_distance(cfg: ScenarioConfig) -> float:
    """2 D^2 / lambda with D the longer IRS side, (max(N_y, N_z) - 1) d."""
    aperture = (max(cfg.n_y, cfg.n_z) - 1) * cfg.d
    return 2 * aperture**2 / cfg.wavelength


def sample_paths(cfg: ScenarioConfig, rng: np.random.Generator, n_paths: int | None = None,
                 grid=None, max_tries: int = 1000) -> PathSet:
    """Draw a random PathSet.

    Angles are uniform on the configured ranges, distances uniform on
    ``dist_range``, gains standard circular complex Gaussian. Draws are
    repeated until all delay generators are at least ``cfg.min_z_separation``
    apart. When ``grid`` (a :class:`~nfirs.estimator.Codebooks`) is given,
    angles are drawn from its grid points instead.
    """
    L = cfg.n_paths if n_paths is None else n_paths
    for _ in range(max_tries):
        u = rng.uniform(*cfg.dist_range, size=L)
        z = delay_generator(u / SPEED_OF_LIGHT, cfg)
        gaps = np.abs(z[:, None] - z[None, :]) + np.eye(L)
        if L == 1 or gaps.min() >= cfg.min_z_separation:
            break
    else:
        raise RuntimeError("could not draw delays satisfying the separation rule")
    if grid is None:
        theta = rng.uniform(*cfg.theta_range, size=L)
        phi = rng.uniform(*cfg.phi_range, size=L)
        psi = rng.uniform(*cfg.psi_range, size=L)
    else:
        theta = rng.choice(grid.theta, size=L, replace=False)
        phi = rng.choice(grid.phi, size=L, replace=False)
        psi = rng.choice(grid.psi, size=L, replace=False)
    gamma = (rng.standard_normal(L) + 1j * rng.standard_normal(L)) / np.sqrt(2)
    return PathSet(theta, phi, psi, u, gamma)
