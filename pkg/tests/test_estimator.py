import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st

from conftest import crandn
import nfirs.estimator as est_mod
from nfirs.channel import delay_generator, irs_nf_responses, sample_paths
from nfirs.config import SPEED_OF_LIGHT, ScenarioConfig
from nfirs.errors import IllConditioned, RankDeficient, SingularKhatriRao
from nfirs.estimator import (Codebooks, estimate, irs_correlation_map, recover_A, recover_B_columns,
                             recover_delay, recover_gains, search_irs_angles, search_ue_angle,
                             shift_invariance_evd, truncated_svd_mode1)
from nfirs.harness import channel_nmse, match_paths
from nfirs.measurement import (add_noise, ground_truth_factors, make_training_operators, synthesize_noiseless,
                               ue_training_response)
from nfirs.tensor import khatri_rao, unfold


@pytest.fixture(scope="module")
def cfg():
    return ScenarioConfig()


@pytest.fixture(scope="module")
def cb(cfg):
    return Codebooks.from_config(cfg)


def scenario(cfg, seed, grid=None, n_paths=None):
    ps = sample_paths(cfg, np.random.default_rng(seed), n_paths=n_paths, grid=grid)
    ops = make_training_operators(cfg, seed=seed)
    return ps, ops, synthesize_noiseless(ps, ops, cfg)


def test_codebook_lattice(cfg, cb):
    assert cb.shape == (cfg.g_z, cfg.g_y, cfg.g_u)
    k = np.arange(cfg.g_z)
    np.testing.assert_allclose(cb.theta, cb.theta_min + k * cb.theta_step, atol=1e-14)
    assert cb.theta_step == pytest.approx(math.pi / (cfg.g_z + 1))
    assert cb.theta[0] > 0 and cb.theta[-1] < math.pi
    assert cb.psi[0] > -math.pi / 2 and cb.psi[-1] < math.pi / 2
    np.testing.assert_allclose(np.diff(cb.psi), cb.psi_step, atol=1e-14)


def test_codebook_custom_ranges(cfg):
    c = Codebooks.from_config(cfg.replace(theta_grid_range=(0.5, 1.5), g_z=9))
    np.testing.assert_allclose(c.theta, 0.5 + 0.1 * np.arange(1, 10), atol=1e-14)


# -- SVD / EVD -----------------------------------------------------------------

def test_svd_noiseless(cfg):
    ps, ops, X = scenario(cfg, 0)
    svd = truncated_svd_mode1(X, cfg.n_paths)
    L = cfg.n_paths
    assert np.all(svd.s[L:] <= 1e-10 * svd.s[0])
    assert np.all(np.diff(svd.s) <= 0)
    np.testing.assert_allclose(svd.U.conj().T @ svd.U, np.eye(L), atol=1e-12)
    fac = ground_truth_factors(ps, ops, cfg)
    angles = scipy.linalg.subspace_angles(svd.U, khatri_rao(fac.C, fac.B))
    assert np.max(angles) <= 1e-8


def test_svd_rank_deficient(cfg):
    _, _, X = scenario(cfg, 1, n_paths=2)
    with pytest.raises(RankDeficient):
        truncated_svd_mode1(X, 3)
    with pytest.raises(RankDeficient):
        truncated_svd_mode1(np.zeros(cfg.tensor_shape), 1)


def test_svd_precondition():
    with pytest.raises(RankDeficient):
        truncated_svd_mode1(np.ones((2, 3, 3)), 3)


def test_evd_recovers_generators(cfg):
    ps, _, X = scenario(cfg, 2)
    evd = shift_invariance_evd(truncated_svd_mode1(X, cfg.n_paths).U, cfg.t_a)
    truth = delay_generator(ps.tau, cfg)
    for z in truth:
        assert np.min(np.abs(evd.z - z)) <= 1e-8
    assert np.all(np.diff(np.angle(evd.z)) <= 0)


def test_evd_single_path(cfg):
    _, _, X = scenario(cfg, 3, n_paths=1)
    evd = shift_invariance_evd(truncated_svd_mode1(X, 1).U, cfg.t_a)
    assert evd.M.shape == (1, 1) and evd.M[0, 0] != 0
    assert abs(abs(evd.z[0]) - 1) <= 1e-8


def test_evd_unitary_invariance(cfg, rng):
    _, _, X = scenario(cfg, 4)
    U = truncated_svd_mode1(X, cfg.n_paths).U
    R, _ = np.linalg.qr(crandn(rng, cfg.n_paths, cfg.n_paths))
    z1 = shift_invariance_evd(U, cfg.t_a).z
    z2 = shift_invariance_evd(U @ R, cfg.t_a).z
    np.testing.assert_allclose(z1, z2, atol=1e-10)


def test_evd_defective_shift_is_ill_conditioned():
    # rows x J^k with J a Jordan block: the shift operator has a single repeated eigenvalue
    J = np.array([[np.exp(-0.3j), 1.0], [0.0, np.exp(-0.3j)]])
    rows = [np.array([1.0, 1.0j])]
    for _ in range(7):
        rows.append(rows[-1] @ J)
    with pytest.raises(IllConditioned):
        shift_invariance_evd(np.array(rows), 1)


def test_recover_delay_examples(cfg):
    d = recover_delay(1.0, cfg)
    assert d.tau[0] == 0 and d.u[0] == 0
    tau = 20 / SPEED_OF_LIGHT
    z = delay_generator(tau, cfg)
    got = recover_delay(z, cfg)
    assert got.tau[0] == pytest.approx(tau, rel=1e-12)
    assert got.u[0] == got.tau[0] * SPEED_OF_LIGHT
    shrunk = recover_delay(0.9 * z, cfg)
    assert shrunk.tau[0] == got.tau[0]
    np.testing.assert_allclose(got.c[:, 0], z ** np.arange(1, cfg.p + 1), atol=1e-13)


def test_recover_delay_wraps_into_period(cfg):
    z = np.exp(0.2j)  # positive phase belongs to the far end of the period
    tau = recover_delay(z, cfg).tau[0]
    assert 0 <= tau < cfg.delay_period
    assert delay_generator(tau, cfg) == pytest.approx(z, abs=1e-12)


@given(st.floats(1e-3, 0.999))
def test_recover_delay_inverts_forward_map(frac):
    cfg = ScenarioConfig()
    tau = frac * cfg.delay_period
    assert recover_delay(delay_generator(tau, cfg), cfg).tau[0] == pytest.approx(tau, rel=1e-9)


# -- factor recovery -----------------------------------------------------------

def test_recover_B_noiseless_collinear(cfg):
    ps, ops, X = scenario(cfg, 5)
    svd = truncated_svd_mode1(X, cfg.n_paths)
    evd = shift_invariance_evd(svd.U, cfg.t_a)
    dl = recover_delay(evd.z, cfg)
    B_hat = recover_B_columns(svd.U, evd.M, dl.c)
    fac = ground_truth_factors(ps, ops, cfg)
    for l in range(cfg.n_paths):
        col = np.abs(B_hat[:, l].conj() @ fac.B) / (np.linalg.norm(B_hat[:, l]) * np.linalg.norm(fac.B, axis=0))
        assert col.max() >= 1 - 1e-8


def test_recover_B_exact_slice(rng):
    P, T = 5, 3
    c = np.exp(-0.4j * np.arange(1, P + 1))
    b = crandn(rng, T)
    U = np.kron(c, b)[:, None]
    np.testing.assert_allclose(recover_B_columns(U, np.eye(1), c[:, None])[:, 0], b, atol=1e-14)
    np.testing.assert_allclose(recover_B_columns(U, 2.5j * np.eye(1), c[:, None])[:, 0], 2.5j * b, atol=1e-14)


def test_recover_A_exact(cfg):
    ps, ops, X = scenario(cfg, 6)
    fac = ground_truth_factors(ps, ops, cfg)
    A = recover_A(unfold(X, 1), fac.C, fac.B)
    assert np.linalg.norm(A - fac.A) <= 1e-8 * np.linalg.norm(fac.A)


def test_recover_A_single_path_matched_filter(rng):
    Q, T, P = 4, 3, 5
    a, b, c = crandn(rng, Q, 1), crandn(rng, T, 1), crandn(rng, P, 1)
    Y = np.einsum("il,jl,kl->ijk", a, b, c) + 0.1 * crandn(rng, Q, T, P)
    k = np.kron(c[:, 0], b[:, 0])
    expect = unfold(Y, 1) @ k.conj() / np.vdot(k, k).real
    np.testing.assert_allclose(recover_A(unfold(Y, 1), c, b)[:, 0], expect, atol=1e-12)


def test_recover_A_least_squares_optimal(rng):
    Q, T, P, L = 5, 3, 4, 2
    Y = crandn(rng, Q, T, P)
    B, C = crandn(rng, T, L), crandn(rng, P, L)
    K = khatri_rao(C, B)
    A = recover_A(unfold(Y, 1), C, B)
    res = np.linalg.norm(unfold(Y, 1).T - K @ A.T)
    for _ in range(20):
        other = A + 1e-3 * crandn(rng, Q, L)
        assert np.linalg.norm(unfold(Y, 1).T - K @ other.T) >= res


def test_recover_A_singular():
    C = np.ones((4, 2))
    B = np.ones((3, 2))
    with pytest.raises(SingularKhatriRao):
        recover_A(np.ones((5, 12)), C, B)


# -- codebook searches ---------------------------------------------------------

def test_irs_search_self_peak(cfg, cb):
    ops = make_training_operators(cfg, seed=7)
    for i, j in ((0, 0), (40, 50), (179, 179), (90, 3)):
        a = ops.V_tilde @ irs_nf_responses(cb.theta[i], cb.phi[j], 2.0, cfg)
        m = search_irs_angles(a, 2.0, cb, ops, cfg)
        assert (m.theta, m.phi, m.index) == (cb.theta[i], cb.phi[j], (i, j))
        assert m.peak == pytest.approx(1.0, abs=1e-12)


def test_irs_search_matches_brute_force(cfg, cb, rng):
    ops = make_training_operators(cfg, seed=8)
    for _ in range(3):
        a = crandn(rng, cfg.q)
        u = rng.uniform(1, 6)
        full = irs_correlation_map(a, u, cb, ops.V_tilde, cfg)
        k = int(np.argmax(full))
        m = search_irs_angles(a, u, cb, ops, cfg)
        assert m.index == (k // cfg.g_y, k % cfg.g_y)


def test_irs_search_chunking_is_exact(cfg, cb, rng, monkeypatch):
    ops = make_training_operators(cfg, seed=9)
    a = crandn(rng, cfg.q)
    whole = search_irs_angles(a, 3.0, cb, ops, cfg)
    monkeypatch.setattr(est_mod, "_CHUNK_ELEMENTS", 7 * cfg.g_y * cfg.n_r)
    assert search_irs_angles(a, 3.0, cb, ops, cfg) == whole


def test_irs_search_scale_invariant(cfg, cb, rng):
    ops = make_training_operators(cfg, seed=10)
    a = crandn(rng, cfg.q)
    base = search_irs_angles(a, 2.5, cb, ops, cfg).index
    for s in (1e-6, -3.0, 2 - 5j):
        assert search_irs_angles(s * a, 2.5, cb, ops, cfg).index == base


def test_irs_search_tie_break(cfg):
    ops = make_training_operators(cfg, seed=11)
    grid = Codebooks(np.array([0.7, 1.2, 0.7]), np.array([0.3, 0.3, -0.2]), np.array([0.0]))
    a = ops.V_tilde @ irs_nf_responses(0.7, 0.3, 2.0, cfg)
    assert search_irs_angles(a, 2.0, grid, ops, cfg).index == (0, 0)


def test_unsquared_denominator_misses_self_peak(cfg, cb):
    """With ||x|| instead of ||x||^2 in the denominator the maximizer moves off the true point."""
    ops = make_training_operators(cfg, seed=0)
    a = ops.V_tilde @ irs_nf_responses(cb.theta[40], cb.phi[50], 2.0, cfg)
    assert search_irs_angles(a, 2.0, cb, ops, cfg).index == (40, 50)
    assert search_irs_angles(a, 2.0, cb, ops, cfg, printed=True).index == (41, 51)


def test_ue_search(cfg, cb, rng):
    ops = make_training_operators(cfg, seed=12)
    for k in (0, 100, 719):
        b = ue_training_response(cb.psi[k], ops.F, cfg)[:, 0]
        m = search_ue_angle(b, cb, ops.F, cfg)
        assert m.index == k and m.psi == cb.psi[k]
        assert search_ue_angle((0.3 - 2j) * b, cb, ops.F, cfg).index == k
    b = crandn(rng, cfg.t_a)
    atoms = ue_training_response(cb.psi, ops.F, cfg).T
    metric = np.abs(atoms @ b.conj()) ** 2 / np.sum(np.abs(atoms) ** 2, axis=1)
    assert search_ue_angle(b, cb, ops.F, cfg).index == int(np.argmax(metric))


def test_ue_search_tie_break(cfg):
    ops = make_training_operators(cfg, seed=13)
    grid = Codebooks(np.array([1.0]), np.array([0.0]), np.array([0.4, 0.1, 0.4]))
    b = ue_training_response(0.4, ops.F, cfg)[:, 0]
    assert search_ue_angle(b, grid, ops.F, cfg).index == 0


# -- gains and end to end ------------------------------------------------------

def _rebuilt(ps, ops, cfg):
    A_bar = ops.V_tilde @ irs_nf_responses(ps.theta_e, ps.phi_a, ps.u, cfg).T
    B_bar = ue_training_response(ps.psi, ops.F, cfg)
    C_bar = delay_generator(ps.tau, cfg)[None, :] ** np.arange(1, cfg.p + 1)[:, None]
    return A_bar, B_bar, C_bar


def test_recover_gains(cfg):
    ps, ops, X = scenario(cfg, 14)
    A_bar, B_bar, C_bar = _rebuilt(ps, ops, cfg)
    g = recover_gains(unfold(X, 2), A_bar, B_bar, C_bar)
    np.testing.assert_allclose(g.gamma, ps.gamma, rtol=1e-6)
    assert g.leakage <= 1e-8
    zero = recover_gains(np.zeros_like(unfold(X, 2)), A_bar, B_bar, C_bar)
    assert not np.any(zero.gamma)
    double = recover_gains(unfold(2 * X, 2), A_bar, B_bar, C_bar)
    np.testing.assert_allclose(double.gamma, 2 * g.gamma, rtol=1e-12)


def test_recover_gains_singular(cfg):
    ps, ops, X = scenario(cfg, 15)
    A_bar, B_bar, C_bar = _rebuilt(ps, ops, cfg)
    B_bar[:, 1] = B_bar[:, 0]
    with pytest.raises(SingularKhatriRao):
        recover_gains(unfold(X, 2), A_bar, B_bar, C_bar)


def assert_exact_recovery(truth, res):
    got = match_paths(truth, res.paths)
    np.testing.assert_allclose(got.tau, truth.tau, rtol=1e-8)
    np.testing.assert_array_equal(got.theta_e, truth.theta_e)
    np.testing.assert_array_equal(got.phi_a, truth.phi_a)
    np.testing.assert_array_equal(got.psi, truth.psi)
    np.testing.assert_allclose(got.gamma, truth.gamma, rtol=1e-6)


def test_estimate_noiseless_on_grid(cfg, cb):
    ps, ops, X = scenario(cfg, 16, grid=cb)
    res = estimate(add_noise(X, math.inf, operators=ops), cfg, cb)
    assert_exact_recovery(ps, res)
    np.testing.assert_allclose(res.z_moduli, 1, atol=1e-8)
    assert np.all(np.isin(res.paths.theta_e, cb.theta)) and np.all(np.isin(res.paths.psi, cb.psi))
    np.testing.assert_array_equal(res.paths.u, res.paths.tau * SPEED_OF_LIGHT)


def test_estimate_permutation_invariant(cfg, cb):
    ps, ops, _ = scenario(cfg, 17, grid=cb)
    perm = ps.permuted([2, 0, 3, 1])
    r1 = estimate(add_noise(synthesize_noiseless(ps, ops, cfg), 25.0, seed=1, operators=ops), cfg, cb)
    r2 = estimate(add_noise(synthesize_noiseless(perm, ops, cfg), 25.0, seed=1, operators=ops), cfg, cb)
    key = lambda r: sorted(zip(np.round(r.paths.u, 6), r.paths.theta_e, r.paths.phi_a, r.paths.psi))  # noqa: E731
    assert key(r1) == key(r2)


def test_estimate_deterministic(cfg, cb):
    _, ops, X = scenario(cfg, 18)
    m = add_noise(X, 10.0, seed=4, operators=ops)
    r1, r2 = estimate(m, cfg, cb), estimate(m, cfg, cb)
    np.testing.assert_array_equal(r1.paths.gamma, r2.paths.gamma)


def test_eigenvalue_modulus_drift(cfg):
    """Diagnostic: at 20 dB the unprojected generators stay close to the unit circle."""
    drift = []
    for s in range(100):
        _, ops, X = scenario(cfg, 1000 + s)
        m = add_noise(X, 20.0, seed=s)
        evd = shift_invariance_evd(truncated_svd_mode1(m.data, cfg.n_paths).U, cfg.t_a)
        drift.extend(np.abs(np.abs(evd.z) - 1))
    assert np.median(drift) <= 0.05


@pytest.mark.slow
def test_estimate_paper_scale_sanity():
    cfg = ScenarioConfig.paper()
    ps, ops, X = scenario(cfg, 19)
    res = estimate(add_noise(X, 30.0, seed=2, operators=ops), cfg)
    e = channel_nmse(ps, res, cfg)
    assert np.isfinite(e) and e < 1
