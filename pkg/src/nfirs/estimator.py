"""Tensor-based parameter estimation: truncated SVD, shift-invariance EVD for the delays,
factor recovery, distance-conditioned codebook searches and gain recovery.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .channel import PathSet, irs_nf_responses, ue_ff_response
from .config import SPEED_OF_LIGHT, ScenarioConfig
from .errors import IllConditioned, RankDeficient, SingularKhatriRao
from .measurement import MeasurementTensor, TrainingOperators, ue_training_response
from .tensor import khatri_rao, unfold

RANK_TOL = 1e-12
EVD_COND_MAX = 1e8
# rows of the IRS grid evaluated per block; keeps the paper-scale search in memory
_CHUNK_ELEMENTS = 1 << 22


def _interior_grid(lo: float, hi: float, n: int) -> tuple[np.ndarray, float]:
    """n points lo + i*step, i = 1..n, step = (hi - lo)/(n + 1); open-interval lattice."""
    step = (hi - lo) / (n + 1)
    return lo + step * np.arange(1, n + 1), step


@dataclass(frozen=True)
class Codebooks:
    """Angle grids: (theta, phi) pairs for the IRS and psi for the UE.

    Each grid is the affine lattice ``minimum + k * step``, k = 0..G-1.
    """

    theta: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    theta_step: float = 0.0
    phi_step: float = 0.0
    psi_step: float = 0.0

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "Codebooks":
        (tlo, thi), (plo, phi_hi), (slo, shi) = cfg.grid_ranges()
        theta, dt = _interior_grid(tlo, thi, cfg.g_z)
        phi, dp = _interior_grid(plo, phi_hi, cfg.g_y)
        psi, ds = _interior_grid(slo, shi, cfg.g_u)
        return cls(theta, phi, psi, dt, dp, ds)

    @property
    def theta_min(self) -> float:
        return float(self.theta[0])

    @property
    def phi_min(self) -> float:
        return float(self.phi[0])

    @property
    def psi_min(self) -> float:
        return float(self.psi[0])

    @property
    def shape(self) -> tuple[int, int, int]:
        return len(self.theta), len(self.phi), len(self.psi)


class SvdResult(NamedTuple):
    U: np.ndarray  # T_a*P x L
    s: np.ndarray  # all singular values, nonincreasing
    Vh: np.ndarray  # L x Q


class EvdResult(NamedTuple):
    z: np.ndarray
    M: np.ndarray
    cond: float


class DelayEstimate(NamedTuple):
    tau: np.ndarray
    u: np.ndarray
    c: np.ndarray  # P x L Vandermonde, built from the unit-modulus projections


class IrsMatch(NamedTuple):
    theta: float
    phi: float
    peak: float
    index: tuple[int, int]


class UeMatch(NamedTuple):
    psi: float
    peak: float
    index: int


class GainEstimate(NamedTuple):
    gamma: np.ndarray
    leakage: float


@dataclass
class EstimationResult:
    """Estimated paths, factor matrices and diagnostics."""

    paths: PathSet
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    singular_values: np.ndarray
    z_moduli: np.ndarray
    evd_cond: float
    irs_peaks: np.ndarray
    ue_peaks: np.ndarray
    leakage: float
    extra: dict = field(default_factory=dict)

    @property
    def tau(self) -> np.ndarray:
        return self.paths.tau


def truncated_svd_mode1(Y, n_paths: int) -> SvdResult:
    """Top-L left singular vectors of the transposed mode-1 unfolding (T_a*P x Q)."""
    data = Y.data if isinstance(Y, MeasurementTensor) else np.asarray(Y)
    Q, T, P = data.shape
    if min((P - 1) * T, Q) < n_paths:
        raise RankDeficient(f"min((P-1)*T_a, Q) = {min((P - 1) * T, Q)} < L = {n_paths}")
    U, s, Vh = np.linalg.svd(unfold(data, 1).T, full_matrices=False)
    if s[0] == 0 or s[n_paths - 1] < RANK_TOL * s[0]:
        raise RankDeficient(f"singular value {n_paths} is negligible: {s[:n_paths + 1]}")
    return SvdResult(U[:, :n_paths], s, Vh[:n_paths])


def shift_invariance_evd(U: np.ndarray, t_a: int) -> EvdResult:
    """Eigen-decompose pinv(U1) U2 where U1/U2 drop the last/first subcarrier block of T_a rows.

    Eigenvalues (and eigenvector columns) are sorted by phase, descending.
    """
    U1, U2 = U[:-t_a], U[t_a:]
    Psi = np.linalg.lstsq(U1, U2, rcond=None)[0]
    z, M = np.linalg.eig(Psi)
    order = np.argsort(-np.angle(z), kind="stable")
    z, M = z[order], M[:, order]
    cond = float(np.linalg.cond(M))
    if not np.isfinite(cond) or cond > EVD_COND_MAX:
        raise IllConditioned(f"eigenvector matrix condition number {cond:.3g} exceeds {EVD_COND_MAX:g}")
    return EvdResult(z, M, cond)


def recover_delay(z, cfg: ScenarioConfig) -> DelayEstimate:
    """Delays, distances and Vandermonde columns from delay-generator estimates."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    zu = z / np.abs(z)
    ang = np.angle(zu)
    tau = -cfg.p0 / (2 * np.pi * cfg.f_s) * ang
    tau = np.where(ang > 0, tau + cfg.delay_period, tau)
    C = zu[None, :] ** np.arange(1, cfg.p + 1)[:, None]
    return DelayEstimate(tau, tau * SPEED_OF_LIGHT, C)


def recover_B_columns(U: np.ndarray, M: np.ndarray, C: np.ndarray) -> np.ndarray:
    """b_l = ((c_l^H / c_l^H c_l) kron I) U M[:, l]."""
    P = C.shape[0]
    T = U.shape[0] // P
    G = (U @ M).reshape(P, T, -1)  # [p, t, l]
    w = C.conj() / np.sum(np.abs(C) ** 2, axis=0)
    return np.einsum("pl,ptl->tl", w, G)


def recover_A(Y1: np.ndarray, C: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Least-squares A from Y_(1) = A (C kr B)^T."""
    K = khatri_rao(C, B)
    if np.linalg.matrix_rank(K) < K.shape[1]:
        raise SingularKhatriRao("C kr B is column-rank deficient")
    return Y1 @ np.linalg.pinv(K.T)


def _correlation(query: np.ndarray, atoms: np.ndarray, printed: bool) -> np.ndarray:
    """Correlation of ``query`` with each row of ``atoms``.

    Default: |q^H x|^2 / (||q||^2 ||x||^2). ``printed=True`` uses the unsquared
    norms in the denominator, which is not invariant to the atom norm.
    """
    num = np.abs(atoms @ query.conj()) ** 2
    norms = np.sum(np.abs(atoms) ** 2, axis=-1)
    qn = np.vdot(query, query).real
    if printed:
        return num / (np.sqrt(qn) * np.sqrt(norms))
    return num / (qn * norms)


def irs_correlation_map(a_hat: np.ndarray, u_hat: float, codebooks: Codebooks,
                        V_tilde: np.ndarray, cfg: ScenarioConfig, printed: bool = False) -> np.ndarray:
    """Full G_z x G_y correlation map (reference implementation, no chunking)."""
    atoms = irs_nf_responses(codebooks.theta[:, None], codebooks.phi[None, :], u_hat, cfg) @ V_tilde.T
    return _correlation(a_hat, atoms, printed)


def search_irs_angles(a_hat: np.ndarray, u_hat: float, codebooks: Codebooks,
                      ops: TrainingOperators | np.ndarray, cfg: ScenarioConfig,
                      printed: bool = False) -> IrsMatch:
    """Grid maximizer of the correlation between a_hat and V_tilde a_IRS(theta, phi, u_hat).

    Ties resolve to the smallest (i, j) in row-major order.
    """
    V = ops.V_tilde if isinstance(ops, TrainingOperators) else np.asarray(ops)
    G_z, G_y = len(codebooks.theta), len(codebooks.phi)
    rows = max(1, _CHUNK_ELEMENTS // (G_y * cfg.n_r))
    best, best_idx = -np.inf, (0, 0)
    for start in range(0, G_z, rows):
        th = codebooks.theta[start:start + rows]
        resp = irs_nf_responses(th[:, None], codebooks.phi[None, :], u_hat, cfg)
        metric = _correlation(a_hat, resp @ V.T, printed)
        k = int(np.argmax(metric))
        if metric.flat[k] > best:
            best = float(metric.flat[k])
            best_idx = (start + k // G_y, k % G_y)
    i, j = best_idx
    return IrsMatch(float(codebooks.theta[i]), float(codebooks.phi[j]), best, (i, j))


def search_ue_angle(b_hat: np.ndarray, codebooks: Codebooks, F: np.ndarray,
                    cfg: ScenarioConfig, printed: bool = False) -> UeMatch:
    """Grid maximizer of the correlation between b_hat and F^T conj(a_ue(psi)); first index wins ties."""
    atoms = ue_ff_response(codebooks.psi, cfg).conj() @ F
    metric = _correlation(b_hat, atoms, printed)
    k = int(np.argmax(metric))
    return UeMatch(float(codebooks.psi[k]), float(metric[k]), k)


def recover_gains(Y2: np.ndarray, A_bar: np.ndarray, B_bar: np.ndarray, C_bar: np.ndarray) -> GainEstimate:
    """Gains from Y_(2) given rebuilt (gain-free) factors.

    B' = Y_(2) pinv((C_bar kr A_bar)^T), Gamma = pinv(B_bar) B'; gamma = diag(Gamma),
    leakage = Frobenius norm of the off-diagonal part.
    """
    K = khatri_rao(C_bar, A_bar)
    L = K.shape[1]
    if np.linalg.matrix_rank(K) < L or np.linalg.matrix_rank(B_bar) < L:
        raise SingularKhatriRao("rebuilt steering factors are column-rank deficient")
    B_prime = Y2 @ np.linalg.pinv(K.T)
    Gamma = np.linalg.pinv(B_bar) @ B_prime
    off = Gamma - np.diag(np.diag(Gamma))
    return GainEstimate(np.diag(Gamma).copy(), float(np.linalg.norm(off)))


def estimate(Y: MeasurementTensor, cfg: ScenarioConfig, codebooks: Codebooks | None = None,
             n_paths: int | None = None) -> EstimationResult:
    """Run the full estimator on a measurement tensor with known training operators."""
    cb = Codebooks.from_config(cfg) if codebooks is None else codebooks
    L = cfg.n_paths if n_paths is None else n_paths
    ops = Y.operators
    data = np.asarray(Y.data)

    svd = truncated_svd_mode1(data, L)
    evd = shift_invariance_evd(svd.U, cfg.t_a)
    dl = recover_delay(evd.z, cfg)
    B_hat = recover_B_columns(svd.U, evd.M, dl.c)
    A_hat = recover_A(unfold(data, 1), dl.c, B_hat)

    irs = [search_irs_angles(A_hat[:, l], dl.u[l], cb, ops, cfg) for l in range(L)]
    ue = [search_ue_angle(B_hat[:, l], cb, ops.F, cfg) for l in range(L)]
    theta = np.array([m.theta for m in irs])
    phi = np.array([m.phi for m in irs])
    psi = np.array([m.psi for m in ue])

    A_bar = ops.V_tilde @ irs_nf_responses(theta, phi, dl.u, cfg).T
    B_bar = ue_training_response(psi, ops.F, cfg)
    gains = recover_gains(unfold(data, 2), A_bar, B_bar, dl.c)

    paths = PathSet(theta, phi, psi, dl.u, gains.gamma)
    return EstimationResult(
        paths=paths, A=A_hat, B=B_hat, C=dl.c,
        singular_values=svd.s, z_moduli=np.abs(evd.z), evd_cond=evd.cond,
        irs_peaks=np.array([m.peak for m in irs]), ue_peaks=np.array([m.peak for m in ue]),
        leakage=gains.leakage,
    )
