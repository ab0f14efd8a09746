"""Training operators, noiseless reception tensor, ground-truth CP factors and noise injection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import (BsIrsLink, PathSet, bs_irs_channel, delay_generator, irs_nf_responses,
                      ue_ff_response)
from .config import ScenarioConfig
from .errors import UniquenessViolation
from .tensor import cp_tensor


@dataclass(frozen=True)
class TrainingOperators:
    """Known training quantities.

    Attributes
    ----------
    w : (N_b,) BS combiner, unit norm.
    F : (N_t, T_a) UE beamformers, one column per time frame.
    v : (Q, N_r) IRS phase patterns, unit-modulus entries, one row per time slot.
    h_tilde : (N_r,) effective BS-IRS row w^H H_s.
    """

    w: np.ndarray
    F: np.ndarray
    v: np.ndarray
    h_tilde: np.ndarray

    @property
    def V_tilde(self) -> np.ndarray:
        """Effective IRS training matrix, row q = v_q * h_tilde."""
        return self.v * self.h_tilde[None, :]


@dataclass(frozen=True)
class FactorMatrices:
    A: np.ndarray  # Q x L
    B: np.ndarray  # T_a x L
    C: np.ndarray  # P x L

    def tensor(self) -> np.ndarray:
        return cp_tensor(self.A, self.B, self.C)


@dataclass(frozen=True)
class MeasurementTensor:
    data: np.ndarray  # Q x T_a x P
    operators: TrainingOperators
    sigma2: float
    snr_linear: float


def _unit_modulus(rng: np.random.Generator, shape) -> np.ndarray:
    return np.exp(2j * np.pi * rng.random(shape))


def make_training_operators(cfg: ScenarioConfig, link: BsIrsLink | None = None,
                            seed=None) -> TrainingOperators:
    """Random unit-modulus combiner, beamformers and IRS phases; deterministic in ``seed``.

    The BS-IRS link must have zero delay so the effective training matrix does
    not depend on the subcarrier.
    """
    link = BsIrsLink.from_config(cfg) if link is None else link
    if link.tau != 0:
        raise ValueError("the BS-IRS delay must be zero for a subcarrier-independent training matrix")
    rng = np.random.default_rng(seed)
    w = _unit_modulus(rng, cfg.n_b) / np.sqrt(cfg.n_b)
    F = _unit_modulus(rng, (cfg.n_t, cfg.t_a)) / np.sqrt(cfg.n_t)
    v = _unit_modulus(rng, (cfg.q, cfg.n_r))
    h_tilde = w.conj() @ bs_irs_channel(link, 1, cfg)
    return TrainingOperators(w=w, F=F, v=v, h_tilde=h_tilde)


def ue_training_response(psi, F: np.ndarray, cfg: ScenarioConfig) -> np.ndarray:
    """Entry (t, l) = a_ue(psi_l)^H F[:, t], the UE response seen through frame t's beamformer.

    This is the complex conjugate of F^H a_ue; it is what the received-signal
    chain w^H H_s Omega_q H_u x(t) produces. Shape (T_a, L).
    """
    return F.T @ ue_ff_response(np.atleast_1d(psi), cfg).conj().T


def ground_truth_factors(paths: PathSet, ops: TrainingOperators, cfg: ScenarioConfig) -> FactorMatrices:
    """A = V_tilde a_IRS, B[:, l] = gamma_l F^T conj(a_ue), C[p, l] = z_l^p for p = 1..P."""
    a_irs = irs_nf_responses(paths.theta_e, paths.phi_a, paths.u, cfg).T
    A = ops.V_tilde @ a_irs
    B = ue_training_response(paths.psi, ops.F, cfg) * paths.gamma
    C = delay_generator(paths.tau, cfg)[None, :] ** np.arange(1, cfg.p + 1)[:, None]
    return FactorMatrices(A, B, C)


def synthesize_noiseless(paths: PathSet, ops: TrainingOperators, cfg: ScenarioConfig) -> np.ndarray:
    """Noiseless Q x T_a x P reception tensor."""
    if not cfg.uniqueness_holds(len(paths)):
        raise UniquenessViolation(
            f"min((P-1)*T_a, Q) = {min((cfg.p - 1) * cfg.t_a, cfg.q)} < L = {len(paths)}")
    return ground_truth_factors(paths, ops, cfg).tensor()


def noise_variance(noiseless: np.ndarray, snr_db: float) -> float:
    """sigma^2 giving ||X||_F^2 / E||N||_F^2 = 10^(snr_db/10)."""
    if snr_db is None or math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return float(np.vdot(noiseless, noiseless).real / (10 ** (snr_db / 10) * noiseless.size))


def add_noise(noiseless: np.ndarray, snr_db: float | None, seed=None,
              operators: TrainingOperators | None = None) -> MeasurementTensor:
    """Add i.i.d. circular complex Gaussian noise at ``snr_db``.

    ``snr_db = math.inf`` (or None) disables noise.
    """
    if snr_db is not None and not math.isfinite(snr_db) and not snr_db > 0:
        raise ValueError("snr_db must be finite or +inf")
    noiseless = np.asarray(noiseless, dtype=complex)
    sigma2 = noise_variance(noiseless, snr_db)
    if sigma2 == 0.0:
        return MeasurementTensor(noiseless.copy(), operators, 0.0, math.inf)
    rng = np.random.default_rng(seed)
    noise = np.sqrt(sigma2 / 2) * (rng.standard_normal(noiseless.shape)
                                   + 1j * rng.standard_normal(noiseless.shape))
    realized = float(np.vdot(noiseless, noiseless).real / np.vdot(noise, noise).real)
    return MeasurementTensor(noiseless + noise, operators, sigma2, realized)
