"""Fisher information and Cramer-Rao bounds for the path parameters and the overall channel.

Parameter order per path family: theta_e, phi_a, psi, tau (real) and gamma (complex).
Every family's score is written against the noise unfolding in which its
derivative is a single Khatri-Rao column, and cross-family blocks are linked
through the sparse cross-covariance of the different noise unfoldings.

The complex 5L x 5L matrix ``J`` holds 2 Re{.} blocks for real-real pairs and
plain complex blocks wherever gamma is involved. Bounds are taken from the
equivalent 6L x 6L real information matrix in (theta, phi, psi, tau, Re gamma,
Im gamma), see :func:`real_fim`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .channel import PathSet, delay_generator, element_offsets, irs_nf_responses, ue_ff_response
from .config import SPEED_OF_LIGHT, ScenarioConfig
from .errors import InvalidMode, SingularFim
from .measurement import TrainingOperators, ground_truth_factors, ue_training_response
from .tensor import khatri_rao, vec_index_arrays

FAMILIES = ("theta", "phi", "psi", "tau", "gamma")
COND_MAX = 1e12
REG_EPS = 1e-12


def irs_nf_partials(theta_e, phi_a, u, cfg: ScenarioConfig):
    """Near-field IRS responses and their partials in theta_e, phi_a and u.

    All outputs have shape (L, N_r).
    """
    ry, rz = element_offsets(cfg)
    theta_e, phi_a, u = (np.atleast_1d(np.asarray(x, dtype=float))[:, None] for x in (theta_e, phi_a, u))
    st, ct = np.sin(theta_e), np.cos(theta_e)
    sp_, cp_ = np.sin(phi_a), np.cos(phi_a)
    a = irs_nf_responses(theta_e[:, 0], phi_a[:, 0], u[:, 0], cfg)
    u_k = np.sqrt(u**2 + ry**2 + rz**2 - 2 * ry * u * st * sp_ - 2 * rz * u * ct)
    k = 2j * np.pi / cfg.wavelength
    da_dtheta = a * k * (ry * u * ct * sp_ - rz * u * st) / u_k
    da_dphi = a * k * ry * u * st * cp_ / u_k
    da_du = -a * k * ((u - ry * st * sp_ - rz * ct) / u_k - 1)
    return a, da_dtheta, da_dphi, da_du


def ue_ff_partial(psi, cfg: ScenarioConfig) -> np.ndarray:
    """d a_ue / d psi, shape (L, N_t)."""
    psi = np.atleast_1d(np.asarray(psi, dtype=float))
    n = np.arange(cfg.n_t)
    return ue_ff_response(psi, cfg) * (-2j * np.pi * n * cfg.d * np.cos(psi)[:, None] / cfg.wavelength)


def delay_rate(cfg: ScenarioConfig) -> np.ndarray:
    """d C[p, l] / d tau_l divided by C[p, l]: -j 2 pi f_s p / P_0 for p = 1..P (column)."""
    return (-2j * np.pi * cfg.f_s / cfg.p0 * np.arange(1, cfg.p + 1))[:, None]


@dataclass(frozen=True)
class DerivativeMatrices:
    """Factor matrices and their parameter derivatives.

    dA_dtheta, dA_dphi : Q x L
    dB_dpsi : T_a x L (includes gamma)
    gain_factor : P x L, the mode-3 factor paired with d/d gamma (equal to C)
    dBA_dtau : Q*T_a x L, B kr dA/dtau (distance enters the IRS response)
    dC_dtau_rows : L x P, row l = gamma_l d C[:, l]^T / d tau_l
    """

    A: np.ndarray
    B: np.ndarray
    B_bare: np.ndarray  # UE training response without the gains
    C: np.ndarray
    dA_dtheta: np.ndarray
    dA_dphi: np.ndarray
    dB_dpsi: np.ndarray
    gain_factor: np.ndarray
    dBA_dtau: np.ndarray
    dC_dtau_rows: np.ndarray


def build_derivative_matrices(paths: PathSet, ops: TrainingOperators, cfg: ScenarioConfig) -> DerivativeMatrices:
    fac = ground_truth_factors(paths, ops, cfg)
    V = ops.V_tilde
    _, da_dth, da_dph, da_du = irs_nf_partials(paths.theta_e, paths.phi_a, paths.u, cfg)
    dA_dtheta = V @ da_dth.T
    dA_dphi = V @ da_dph.T
    dA_dtau = V @ da_du.T * SPEED_OF_LIGHT
    B_bare = ue_training_response(paths.psi, ops.F, cfg)
    dB_dpsi = ops.F.T @ ue_ff_partial(paths.psi, cfg).conj().T * paths.gamma
    dC = delay_rate(cfg) * fac.C
    return DerivativeMatrices(
        A=fac.A, B=fac.B, B_bare=B_bare, C=fac.C,
        dA_dtheta=dA_dtheta, dA_dphi=dA_dphi, dB_dpsi=dB_dpsi, gain_factor=fac.C,
        dBA_dtau=khatri_rao(fac.B, dA_dtau), dC_dtau_rows=(dC * paths.gamma).T,
    )


def noise_cross_covariance(mode_a: int, mode_b: int, cfg: ScenarioConfig, sigma2: float = 1.0) -> sp.csr_matrix:
    """E[n_a n_b^H] where n_m is the noise laid out as vec of the transposed mode-m unfolding.

    One entry sigma^2 per tensor element, at (i_a, i_b) of that element.
    """
    for m in (mode_a, mode_b):
        if m not in (1, 2, 3):
            raise InvalidMode(f"mode must be 1, 2 or 3, got {m!r}")
    idx = vec_index_arrays(cfg.tensor_shape)
    n = idx[0].size
    return sp.csr_matrix((np.full(n, float(sigma2)), (idx[mode_a - 1], idx[mode_b - 1])), shape=(n, n))


def _score_vectors(dm: DerivativeMatrices):
    """Per-family derivative vectors of the mean, each in its own unfolding layout.

    Returns {family: (mode, list of N x L arrays)}; multiple arrays are summed.
    """
    K1 = khatri_rao(dm.C, dm.B)
    K2 = khatri_rao(dm.C, dm.A)
    BA_bare = khatri_rao(dm.B_bare, dm.A)
    return {
        "theta": (1, [khatri_rao(dm.dA_dtheta, K1)]),
        "phi": (1, [khatri_rao(dm.dA_dphi, K1)]),
        "psi": (2, [khatri_rao(dm.dB_dpsi, K2)]),
        "tau": (3, [khatri_rao(dm.C, dm.dBA_dtau), khatri_rao(dm.dC_dtau_rows.T, BA_bare)]),
        "gamma": (3, [khatri_rao(dm.gain_factor, BA_bare)]),
    }


@dataclass(frozen=True)
class FimMatrix:
    """Complex Hermitian 5L x 5L information matrix, block order theta, phi, psi, tau, gamma."""

    J: np.ndarray
    n_paths: int
    sigma2: float

    def block(self, row: str, col: str | None = None) -> np.ndarray:
        col = row if col is None else col
        L = self.n_paths
        i, j = FAMILIES.index(row), FAMILIES.index(col)
        return self.J[i * L:(i + 1) * L, j * L:(j + 1) * L]

    def scaled(self, factor: float) -> "FimMatrix":
        """Information for noise variance sigma2 * factor."""
        return FimMatrix(self.J / factor, self.n_paths, self.sigma2 * factor)


def assemble_fim(paths: PathSet, ops: TrainingOperators, cfg: ScenarioConfig, sigma2: float) -> FimMatrix:
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    dm = build_derivative_matrices(paths, ops, cfg)
    scores = {k: (m, sum(vs[1:], vs[0])) for k, (m, vs) in _score_vectors(dm).items()}
    L = len(paths)
    J = np.zeros((5 * L, 5 * L), dtype=complex)
    cov = {}
    for i, fi in enumerate(FAMILIES):
        mi, di = scores[fi]
        for j, fj in enumerate(FAMILIES[i:], start=i):
            mj, dj = scores[fj]
            if (mi, mj) not in cov:
                cov[mi, mj] = noise_cross_covariance(mi, mj, cfg, sigma2)
            # E[(d_i^H n_i)(d_j^H n_j)^*] / sigma^4
            inner = di.conj().T @ (cov[mi, mj] @ dj) / sigma2**2
            blk = inner if fj == "gamma" else 2 * inner.real
            J[i * L:(i + 1) * L, j * L:(j + 1) * L] = blk
            J[j * L:(j + 1) * L, i * L:(i + 1) * L] = blk.conj().T
    return FimMatrix(J, L, float(sigma2))


def real_fim(fim: FimMatrix | np.ndarray, n_paths: int | None = None) -> np.ndarray:
    """6L x 6L real information in (theta, phi, psi, tau, Re gamma, Im gamma)."""
    J = fim.J if isinstance(fim, FimMatrix) else np.asarray(fim)
    L = fim.n_paths if isinstance(fim, FimMatrix) else (n_paths or J.shape[0] // 5)
    r = 4 * L
    R = np.zeros((6 * L, 6 * L))
    R[:r, :r] = J[:r, :r].real
    Jxg = J[:r, r:]
    G = J[r:, r:]
    R[:r, r:r + L] = 2 * Jxg.real
    R[:r, r + L:] = -2 * Jxg.imag
    R[r:, :r] = R[:r, r:].T
    R[r:r + L, r:r + L] = 2 * G.real
    R[r:r + L, r + L:] = -2 * G.imag
    R[r + L:, r:r + L] = 2 * G.imag
    R[r + L:, r + L:] = 2 * G.real
    return R


def _inverse(R: np.ndarray) -> tuple[np.ndarray, bool]:
    """Inverse after diagonal equilibration; adds a small ridge if badly conditioned."""
    diag = np.diag(R).copy()
    diag[diag <= 0] = 1.0
    s = 1 / np.sqrt(diag)
    Rs = R * s[:, None] * s[None, :]
    regularized = False
    if not np.isfinite(np.linalg.cond(Rs)) or np.linalg.cond(Rs) > COND_MAX:
        n = Rs.shape[0]
        Rs = Rs + REG_EPS * np.trace(Rs) / n * np.eye(n)
        regularized = True
        warnings.warn(SingularFim("Fisher matrix is near singular; a ridge of 1e-12 tr/n was added"),
                      stacklevel=3)
    inv = np.linalg.solve(Rs, np.eye(Rs.shape[0]))
    return inv * s[:, None] * s[None, :], regularized


@dataclass(frozen=True)
class CrlbReport:
    sigma2: float
    total: float
    theta: float
    phi: float
    psi: float
    tau: float
    gamma: float
    channel: float = float("nan")
    regularized: bool = False

    CSV_HEADER = ("snr_db", "sigma2", "crlb_total", "crlb_theta", "crlb_phi", "crlb_psi",
                  "crlb_tau", "crlb_gamma", "crlb_channel")

    def family(self, name: str) -> float:
        return getattr(self, name)

    def scaled(self, factor: float) -> "CrlbReport":
        """Bounds for noise variance sigma2 * factor (all bounds are linear in sigma2)."""
        f = float(factor)
        return CrlbReport(self.sigma2 * f, self.total * f, self.theta * f, self.phi * f,
                          self.psi * f, self.tau * f, self.gamma * f, self.channel * f, self.regularized)

    def to_csv_row(self, snr_db: float) -> list[str]:
        vals = (snr_db, self.sigma2, self.total, self.theta, self.phi, self.psi, self.tau,
                self.gamma, self.channel)
        return [repr(float(v)) for v in vals]


def crlb_parameters(fim: FimMatrix) -> CrlbReport:
    """Total and per-family traces of the inverse information. The gamma family sums Re and Im."""
    L = fim.n_paths
    inv, reg = _inverse(real_fim(fim))
    d = np.diag(inv)
    fam = [float(d[i * L:(i + 1) * L].sum()) for i in range(4)]
    gamma = float(d[4 * L:].sum())
    return CrlbReport(fim.sigma2, float(d.sum()), *fam, gamma, regularized=reg)


# -- overall channel ---------------------------------------------------------

def channel_vector(paths: PathSet, cfg: ScenarioConfig) -> np.ndarray:
    """h_v = (C kr conj(A_U) kr A_R) gamma, length P*N_t*N_r (N_r fastest)."""
    C = delay_generator(paths.tau, cfg)[None, :] ** np.arange(1, cfg.p + 1)[:, None]
    A_U = ue_ff_response(paths.psi, cfg).T
    A_R = irs_nf_responses(paths.theta_e, paths.phi_a, paths.u, cfg).T
    return khatri_rao(khatri_rao(C, A_U.conj()), A_R) @ paths.gamma


def _channel_terms(paths: PathSet, cfg: ScenarioConfig):
    """Jacobian columns of h_v as sums of scaled triple Kronecker products kron(c, a, r).

    Returns a list over the 6L real parameters; each entry is a list of
    (coef, c, a, r) with c in C^P, a in C^{N_t}, r in C^{N_r}.
    """
    a_r, dth, dph, du = irs_nf_partials(paths.theta_e, paths.phi_a, paths.u, cfg)
    a_u = ue_ff_response(paths.psi, cfg).conj()
    da_u = ue_ff_partial(paths.psi, cfg).conj()
    C = delay_generator(paths.tau, cfg)[None, :] ** np.arange(1, cfg.p + 1)[:, None]
    dC = delay_rate(cfg) * C
    L = len(paths)
    g = paths.gamma
    cols = []
    for l in range(L):
        cols.append([(g[l], C[:, l], a_u[l], dth[l])])
    for l in range(L):
        cols.append([(g[l], C[:, l], a_u[l], dph[l])])
    for l in range(L):
        cols.append([(g[l], C[:, l], da_u[l], a_r[l])])
    for l in range(L):
        cols.append([(g[l], dC[:, l], a_u[l], a_r[l]),
                     (g[l] * SPEED_OF_LIGHT, C[:, l], a_u[l], du[l])])
    for l in range(L):
        cols.append([(1.0, C[:, l], a_u[l], a_r[l])])
    for l in range(L):
        cols.append([(1j, C[:, l], a_u[l], a_r[l])])
    return cols


def channel_jacobian(paths: PathSet, cfg: ScenarioConfig) -> np.ndarray:
    """Explicit (P*N_t*N_r) x 6L complex Jacobian of h_v in the real parameters."""
    cols = _channel_terms(paths, cfg)
    out = np.zeros((cfg.p * cfg.n_t * cfg.n_r, len(cols)), dtype=complex)
    for k, terms in enumerate(cols):
        for coef, c, a, r in terms:
            out[:, k] += coef * np.kron(np.kron(c, a), r)
    return out


def channel_jacobian_gram(paths: PathSet, cfg: ScenarioConfig) -> np.ndarray:
    """Jac^H Jac from the Kronecker factors, without forming the Jacobian."""
    cols = _channel_terms(paths, cfg)
    n = len(cols)
    G = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(i, n):
            s = 0j
            for ci, c1, a1, r1 in cols[i]:
                for cj, c2, a2, r2 in cols[j]:
                    s += np.conj(ci) * cj * np.vdot(c1, c2) * np.vdot(a1, a2) * np.vdot(r1, r2)
            G[i, j] = s
            G[j, i] = np.conj(s)
    return G


def crlb_channel(fim: FimMatrix, paths: PathSet, cfg: ScenarioConfig) -> float:
    """tr(Jac R^-1 Jac^H) for the overall channel vector."""
    inv, _ = _inverse(real_fim(fim))
    G = channel_jacobian_gram(paths, cfg)
    # inv is real symmetric, so only the symmetric part of G contributes
    return float(np.sum(inv * G.real))


def crlb_report(paths: PathSet, ops: TrainingOperators, cfg: ScenarioConfig, sigma2: float) -> CrlbReport:
    """Parameter and channel bounds in one call."""
    fim = assemble_fim(paths, ops, cfg, sigma2)
    rep = crlb_parameters(fim)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SingularFim)
        ch = crlb_channel(fim, paths, cfg)
    return CrlbReport(rep.sigma2, rep.total, rep.theta, rep.phi, rep.psi, rep.tau, rep.gamma,
                      ch, rep.regularized)
