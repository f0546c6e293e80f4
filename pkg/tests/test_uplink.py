import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from cfmimo import fronthaul, harness, netgen, rf, uplink
from cfmimo.config import SystemConfig

from conftest import random_psd


def test_training_matrix_small():
    X = uplink.training_matrix(2, 2, 1.0)
    np.testing.assert_allclose(X, [[1, 1], [1, -1]], atol=1e-15)
    np.testing.assert_allclose(X.conj().T @ X, 2 * np.eye(2), atol=1e-14)


def test_training_matrix_columns():
    X = uplink.training_matrix(4, 2, 0.2)
    D = np.exp(-2j * np.pi * np.outer(np.arange(4), np.arange(4)) / 4)
    np.testing.assert_allclose(X, math.sqrt(0.2) * D[:, :2], atol=1e-15)
    X = uplink.training_matrix(8, 8, 0.2)
    np.testing.assert_allclose(X.conj().T @ X, 8 * 0.2 * np.eye(8), rtol=1e-9, atol=1e-12)
    with pytest.raises(ValueError):
        uplink.training_matrix(3, 4, 1.0)


def test_observation_scalar_collapse():
    Psi, C_y = uplink.observation_model(np.array([[math.sqrt(3.0)]]), np.array([[1.0 + 0j]]),
                                        np.array([[1.0 + 0j]]), 1.0, 0.5)
    assert C_y[0, 0].real == pytest.approx(2.0)
    assert Psi[0, 0] == pytest.approx(math.sqrt(3.0))


def test_observation_without_quantization(rng):
    X = uplink.training_matrix(4, 2, 0.5)
    W = np.exp(2j * np.pi * rng.random((3, 2)))
    C_h = np.zeros((6, 6), complex)
    C_h[:3, :3] = random_psd(rng, 3)
    C_h[3:, 3:] = random_psd(rng, 3)
    Psi, C_y = uplink.observation_model(X, W, C_h, 0.7, 0.0)
    expect = Psi @ C_h @ Psi.conj().T + 0.7 * np.kron(np.eye(4), W.conj().T @ W)
    np.testing.assert_allclose(C_y, expect, atol=1e-12)
    # orthogonal pilots: the user blocks decouple after projecting on each pilot
    Xn = X / np.linalg.norm(X[:, 0])
    proj = [np.kron(Xn[:, k:k + 1], np.eye(2)) for k in range(2)]
    S = Psi @ C_h @ Psi.conj().T
    cross = proj[0].conj().T @ S @ proj[1]
    assert np.abs(cross).max() < 1e-12 * np.abs(S).max()


def test_observation_psd(rng):
    X = uplink.training_matrix(4, 2, 0.5)
    W = np.exp(2j * np.pi * rng.random((3, 2)))
    C_h = np.kron(np.eye(2), random_psd(rng, 3))
    _, C_y = uplink.observation_model(X, W, C_h, 0.7, rf.distortion_factor(2))
    np.testing.assert_allclose(C_y, C_y.conj().T, atol=1e-14)
    assert np.linalg.eigvalsh(C_y).min() > 0


def test_observation_dimension_cap():
    X = uplink.training_matrix(2100, 1, 1.0)
    W = np.ones((2, 2), complex)
    with pytest.raises(ValueError):
        uplink.observation_model(X, W, np.eye(2, dtype=complex), 1.0, 0.0)


def test_solve_sigma_u_closed_forms():
    assert uplink.solve_sigma_u(3.0 * np.eye(2), 2, 2.0) == pytest.approx(1.0, rel=1e-10)
    assert uplink.solve_sigma_u(np.eye(2), 2, math.inf) == 0.0
    s2 = uplink.solve_sigma_u(np.diag([1.0, 4.0]), 1, 2.0) ** 2
    assert s2 == pytest.approx(8 / (-5 + math.sqrt(73)), rel=1e-10)
    assert s2 == pytest.approx(2.2573, abs=1e-4)


def test_capacity_inversion_against_brentq(rng):
    for _ in range(20):
        C = random_psd(rng, 5, rank=int(rng.integers(1, 6)), scale=10 ** rng.uniform(-3, 3))
        target = rng.uniform(0.1, 30)
        v = fronthaul.invert_capacity(C, target)
        ref = brentq(lambda lv: fronthaul.capacity_bits(C, math.exp(lv)) - target, -200, 200, xtol=1e-14)
        assert math.log(v) == pytest.approx(ref, abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.5, 20), st.floats(0.5, 20))
def test_sigma_monotone_in_capacity(seed, c1, c2):
    C_y = random_psd(np.random.default_rng(seed), 4, rank=2)
    s1, s2 = uplink.solve_sigma_u(C_y, 1, c1), uplink.solve_sigma_u(C_y, 1, c2)
    if c1 < c2:
        assert s1 > s2
    elif c1 > c2:
        assert s1 < s2


@settings(max_examples=40)
@given(st.integers(0, 10_000), st.floats(0.01, 10), st.floats(0.01, 10))
def test_capacity_curve_decreasing(seed, a, b):
    C = random_psd(np.random.default_rng(seed), 3)
    lo, hi = min(a, b), max(a, b)
    if hi > lo * (1 + 1e-9):
        assert fronthaul.capacity_bits(C, lo) > fronthaul.capacity_bits(C, hi)


def test_capacity_edge_cases():
    assert fronthaul.capacity_bits(np.zeros((2, 2)), 1.0) == 0.0
    assert fronthaul.capacity_bits(np.eye(2), 0.0) == math.inf
    assert fronthaul.invert_capacity(np.zeros((2, 2)), 3.0) == 0.0
    with pytest.raises(ValueError):
        fronthaul.invert_capacity(np.eye(2), 0.0)


def test_lmmse_scalar_case():
    Psi = np.array([[math.sqrt(3.0)]])
    C_h = np.array([[1.0 + 0j]])
    C_y = np.array([[4.0 + 0j]])  # P_u*gamma + sigma2_u
    est = uplink.lmmse_estimate(None, Psi, C_h, C_y, 0.0, 0.0, 1)
    assert est.C_hhat[0, 0, 0].real == pytest.approx(0.75)
    assert est.C_htilde[0, 0, 0].real == pytest.approx(0.25)
    far = uplink.lmmse_estimate(None, Psi, C_h, C_y, 1e8, 0.0, 1)
    assert far.C_hhat[0, 0, 0].real < 1e-15
    assert far.C_htilde[0, 0, 0].real == pytest.approx(1.0)


def _toy_station(rng, N=3, R=2, K=2, T=4, rho=None, C_u=3.0):
    rho = rf.distortion_factor(2) if rho is None else rho
    X = uplink.training_matrix(T, K, 0.5)
    W = np.exp(2j * np.pi * rng.random((N, R)))
    blocks = [random_psd(rng, N, rank=2) for _ in range(K)]
    C_h = np.zeros((N * K, N * K), complex)
    for k, b in enumerate(blocks):
        C_h[k * N:(k + 1) * N, k * N:(k + 1) * N] = b
    Psi, C_y = uplink.observation_model(X, W, C_h, 0.3, rho)
    sig = uplink.solve_sigma_u(C_y, T, C_u)
    return X, W, C_h, Psi, C_y, sig, rho


def test_lmmse_covariance_identities(rng):
    X, W, C_h, Psi, C_y, sig, rho = _toy_station(rng)
    est = uplink.lmmse_estimate(None, Psi, C_h, C_y, sig, rho, 2)
    for k in range(2):
        blk = C_h[k * 3:(k + 1) * 3, k * 3:(k + 1) * 3]
        total = est.C_hhat[k] + est.C_htilde[k]
        assert np.linalg.norm(total - blk) <= 1e-9 * np.linalg.norm(blk)
        assert np.linalg.eigvalsh(est.C_hhat[k]).min() >= -1e-12
        assert np.linalg.eigvalsh(est.C_htilde[k]).min() >= -1e-12
    # orthogonal pilots make the estimate covariance block diagonal across users
    off = est.C_hhat_full[:3, 3:]
    assert np.abs(off).max() <= 1e-9 * np.abs(est.C_hhat_full).max()


def test_lmmse_sample_covariance(rng):
    """Formula covariance of the estimate versus an independent sample-path simulation."""
    X, W, C_h, Psi, C_y, sig, rho = _toy_station(rng)
    K, N, T = 2, 3, 4
    RT = Psi.shape[0]
    # the estimator is linear in y: recover its matrix column by column
    G = np.stack([uplink.lmmse_estimate(e, Psi, C_h, C_y, sig, rho, K).h_hat.reshape(-1)
                  for e in np.eye(RT, dtype=complex)], axis=1)
    n = 100_000
    L = np.linalg.cholesky(C_h + 1e-14 * np.eye(N * K))
    cn = lambda *shape: (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)
    h = L @ cn(N * K, n)
    noise = math.sqrt(0.3) * cn(N, T, n)
    v = np.einsum("rn,ntj->trj", W.conj().T, noise).reshape(RT, n)  # time-major stacking
    S = Psi @ C_h @ Psi.conj().T + 0.3 * np.kron(np.eye(T), W.conj().T @ W)
    q = np.sqrt(rho * (1 - rho) * np.real(np.diag(S)))[:, None] * cn(RT, n)
    y = (1 - rho) * (Psi @ h + v) + q + sig * cn(RT, n)
    emp = np.cov(y)
    assert np.linalg.norm(emp - (C_y + sig ** 2 * np.eye(RT))) / np.linalg.norm(C_y) < 0.05
    h_hat = G @ y
    sample = h_hat @ h_hat.conj().T / n
    est = uplink.lmmse_estimate(None, Psi, C_h, C_y, sig, rho, K)
    assert np.linalg.norm(sample - est.C_hhat_full) / np.linalg.norm(est.C_hhat_full) < 0.05


def test_sample_observation_statistics(rng):
    X, W, C_h, Psi, C_y, sig, rho = _toy_station(rng)
    s_diag = np.real(np.diag(C_y)) / (1 - rho)
    n = 20_000
    L = np.linalg.cholesky(C_h + 1e-14 * np.eye(6))
    ys = []
    for _ in range(n):
        h = L @ ((rng.standard_normal(6) + 1j * rng.standard_normal(6)) / math.sqrt(2))
        ys.append(uplink.sample_observation(h.reshape(2, 3), Psi, W, s_diag, 0.3, rho, sig, rng))
    Y = np.array(ys).T
    target = C_y + sig ** 2 * np.eye(Psi.shape[0])
    assert np.linalg.norm(Y @ Y.conj().T / n - target) / np.linalg.norm(target) < 0.05


def test_effective_channel_basics(rng):
    W = np.linalg.qr(rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2)))[0][None]
    est = uplink.UplinkEstimate(np.zeros(1), np.zeros((1, 1, 4), complex), np.zeros((1, 1, 4, 4)),
                                np.eye(4, dtype=complex)[None, None])
    eff = uplink.effective_channel(est, W)
    np.testing.assert_allclose(eff.C_gtilde[0, 0], np.eye(2), atol=1e-12)
    assert not np.any(eff.g_hat)
    est.C_htilde = random_psd(rng, 4)[None, None]
    Wu = np.exp(2j * np.pi * rng.random((1, 4, 2)))
    Cg = uplink.effective_channel(est, Wu).C_gtilde[0, 0]
    np.testing.assert_allclose(Cg, Cg.conj().T, atol=1e-14)
    assert np.linalg.eigvalsh(Cg).min() >= -1e-12


def test_nmse_extremes():
    C = np.eye(2, dtype=complex)[None, None]
    stats = netgen.ChannelStats(C)
    zero = uplink.UplinkEstimate(np.zeros(1), None, C, np.zeros_like(C))
    assert uplink.nmse(stats, zero) == 0.0
    none = uplink.UplinkEstimate(np.zeros(1), None, np.zeros_like(C), C)
    assert uplink.nmse(stats, none) == 1.0
    scalar = uplink.UplinkEstimate(np.zeros(1), None, 0.75 * C[..., :1, :1], 0.25 * C[..., :1, :1])
    assert uplink.nmse(netgen.ChannelStats(C[..., :1, :1]), scalar) == pytest.approx(0.25)
    with pytest.raises(ZeroDivisionError):
        uplink.nmse(netgen.ChannelStats(np.zeros_like(C)), zero)


@pytest.fixture(scope="module")
def drop_state():
    return harness.prepare_drop(SystemConfig(), 11, 0)


def test_nmse_monotone_on_drop(drop_state):
    cfg = SystemConfig()
    Cs = [2.0, 8.0, 16.0, 64.0, math.inf]
    Bs = [1, 2, 3, 5, 8, math.inf]
    grid = np.array([[harness.drop_nmse(drop_state, cfg.with_resolution_capacity(B, C)) for B in Bs]
                     for C in Cs])
    assert np.all((grid >= 0) & (grid <= 1))
    assert np.all(np.diff(grid, axis=0) <= 1e-12)
    assert np.all(np.diff(grid, axis=1) <= 1e-12)


def test_uplink_estimate_invariants(drop_state):
    cfg = SystemConfig()
    X = uplink.training_matrix(cfg.T, cfg.K, cfg.P_u)
    est = uplink.estimate_uplink(drop_state.stats, drop_state.combiners.W, X, cfg.sigma2_u,
                                 rf.distortion_factor(cfg.B_u), cfg.C_u)
    C = drop_state.stats.cov
    tr = lambda A: np.real(np.trace(A, axis1=-2, axis2=-1))
    np.testing.assert_allclose(tr(est.C_hhat) + tr(est.C_htilde), tr(C), rtol=1e-9)
    assert np.all(est.sigma_u > 0)
    inf = uplink.estimate_uplink(drop_state.stats, drop_state.combiners.W, X, cfg.sigma2_u,
                                 0.0, math.inf)
    assert np.all(inf.sigma_u == 0)
