import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matgarch.experiments import factor_design_theta
from matgarch.factor import (FactorError, eigenvalue_ratio, estimate_loadings, extract_factors,
                             factor_covariance, fit_factor_garch, idiosyncratic_cov, random_loading,
                             reconstruct, sigma_x_forecast, simulate_factor_panel, subspace_distance,
                             varimax, varimax_criterion)


def noiseless(seed=0, m=8, n=6, k1=2, k2=3, T=150):
    rng = np.random.default_rng(seed)
    R = rng.standard_normal((m, k1))
    C = rng.standard_normal((n, k2))
    F = rng.standard_normal((T, k1, k2))
    return np.einsum("ik,tkl,jl->tij", R, F, C), R, C


def test_noiseless_loadings_span_truth():
    X, R, C = noiseless()
    Rh, Ch = estimate_loadings(X, 2, 3)
    assert subspace_distance(Rh, R) < 1e-8 and subspace_distance(Ch, C) < 1e-8
    np.testing.assert_allclose(Rh.T @ Rh, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(Ch.T @ Ch, np.eye(3), atol=1e-12)


def test_noiseless_projection_reproduces_panel():
    X, _, _ = noiseless(1)
    Rh, Ch = estimate_loadings(X, 2, 3)
    np.testing.assert_allclose(reconstruct(extract_factors(X, Rh, Ch), Rh, Ch), X, atol=1e-9)


def test_k_above_rank_raises():
    X, _, _ = noiseless(2)
    with pytest.raises(FactorError):
        estimate_loadings(X, 4, 3)


def test_eigenvalue_ratio_noiseless():
    X, _, _ = noiseless(3)
    assert eigenvalue_ratio(X, 4) == (2, 3)


def test_subspace_distance_basics():
    rng = np.random.default_rng(4)
    A = rng.standard_normal((6, 2))
    Q = np.linalg.qr(rng.standard_normal((2, 2)))[0]
    assert subspace_distance(A, A @ Q * 3.0) < 1e-12
    B = np.zeros((6, 1))
    B[0] = 1
    Cc = np.zeros((6, 1))
    Cc[1] = 1
    assert subspace_distance(B, Cc) == pytest.approx(1.0)


def test_varimax_45_degrees():
    L = np.array([[1.0, 1.0], [1.0, -1.0], [1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2)
    Lr, G = varimax(L)
    np.testing.assert_allclose(np.sort(np.abs(Lr), axis=1), [[0, 1]] * 4, atol=1e-8)
    np.testing.assert_allclose(np.abs(G), np.full((2, 2), 1 / np.sqrt(2)), atol=1e-8)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 4))
def test_varimax_properties(seed, k):
    rng = np.random.default_rng(seed)
    L = random_loading(8, k, rng)
    Lr, G = varimax(L)
    np.testing.assert_allclose(G.T @ G, np.eye(k), atol=1e-10)
    np.testing.assert_allclose(L @ G, Lr, atol=1e-10)
    assert varimax_criterion(Lr) >= varimax_criterion(L) - 1e-10
    # the column space is untouched
    assert subspace_distance(Lr, L) < 1e-8


def test_rotation_leaves_common_component():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((100, 6, 5))
    R, C = estimate_loadings(X, 2, 2)
    Rr, _ = varimax(R)
    Cr, _ = varimax(C)
    a = reconstruct(extract_factors(X, R, C), R, C)
    b = reconstruct(extract_factors(X, Rr, Cr), Rr, Cr)
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_factor_covariance_trace():
    rng = np.random.default_rng(6)
    R, C = random_loading(5, 2, rng), random_loading(4, 3, rng)
    U = np.array([[2.0, 0.3], [0.3, 1.0]])
    V = np.diag([0.5, 0.3, 0.2])
    Se = np.diag(rng.uniform(0.1, 1.0, 20))
    S = factor_covariance(R, C, U, V, Se)
    assert np.trace(S) == pytest.approx(np.trace(U) * np.trace(V) + np.trace(Se), rel=1e-12)
    dense = np.kron(C, R) @ np.kron(V, U) @ np.kron(C, R).T + Se
    np.testing.assert_allclose(S, dense, atol=1e-12)
    np.testing.assert_allclose(factor_covariance(R, C, U, V, np.diag(Se), True), S)


def test_idiosyncratic_cov_zero_for_exact_factors():
    X, _, _ = noiseless(7)
    R, C = estimate_loadings(X, 2, 3)
    S, diag = idiosyncratic_cov(X, R, C)
    assert not diag and np.abs(S).max() < 1e-12


def test_fit_factor_garch_pipeline():
    rng = np.random.default_rng(8)
    R, C = random_loading(6, 3, rng), random_loading(6, 3, rng)
    X, F = simulate_factor_panel(R, C, factor_design_theta(), 800, noise_sd=0.5, seed=9)
    ff = fit_factor_garch(X, k_max=3, multistarts=1, compute_sandwich=False)
    assert (ff.k1, ff.k2) == (3, 3)
    assert subspace_distance(ff.R_load, R) < 0.1
    S = sigma_x_forecast(ff)
    assert S.shape == (36, 36)
    assert np.linalg.eigvalsh(S)[0] > 0
    np.testing.assert_allclose(sigma_x_forecast(ff, t=10), sigma_x_forecast(ff, t=10).T)
