import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matgarch._backend import compiled_kernels, python_kernels
from matgarch.core import (DimensionError, MatrixPanel, ParamLayout, SideParams, Theta,
                           filter_path, forecast_state, inv_sqrt_pd, kron_eigenvalues, n_params,
                           pack, sqrt_psd, unpack, vec_to_matrix)

from conftest import random_theta


def test_panel_promotes_2d_and_is_read_only():
    p = MatrixPanel(np.arange(6.0).reshape(3, 2))
    assert p.data.shape == (3, 2, 1)
    with pytest.raises(ValueError):
        p.data[0, 0, 0] = 1.0


@pytest.mark.parametrize("bad", [np.zeros((2, 2, 2, 2)), np.zeros((0, 2, 2))])
def test_panel_rejects_bad_shapes(bad):
    with pytest.raises(DimensionError):
        MatrixPanel(bad)


def test_panel_rejects_nan():
    X = np.zeros((4, 2, 2))
    X[1, 0, 1] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        MatrixPanel(X)


def test_vec_is_column_major():
    X = np.arange(6.0).reshape(1, 2, 3)
    v = MatrixPanel(X).vec()[0]
    np.testing.assert_array_equal(v, X[0].reshape(-1, order="F"))
    np.testing.assert_array_equal(vec_to_matrix(v, 2, 3), X[0])


def test_side_params_validation():
    I = np.eye(2)
    with pytest.raises(ValueError, match="lower triangular"):
        SideParams(np.array([[1.0, 0.1], [0.0, 1.0]]), [I], [I])
    with pytest.raises(ValueError, match=r"\[0, 0\]"):
        SideParams(2 * I, [I], [I])
    with pytest.raises(ValueError, match="off-diagonal"):
        SideParams(I, [np.ones((2, 2))], [I], "diagonal")


def test_names_and_sizes():
    lay = ParamLayout(3, 3, "diagonal", (1, 1))
    names = lay.names()
    assert names[:3] == ["w", "alpha", "beta"]
    assert names[3:8] == ["A0[2,1]", "A0[3,1]", "A0[2,2]", "A0[3,2]", "A0[3,3]"]
    assert names[8:11] == ["A1[1,1]", "A1[2,2]", "A1[3,3]"]
    assert len(names) == lay.p == 3 + 2 * (5 + 6)
    assert n_params(3, 3, "full") == 3 + 2 * (5 + 18)
    lay2 = ParamLayout(2, 2, "diagonal", (2, 2))
    assert lay2.names()[:5] == ["w", "alpha1", "alpha2", "beta1", "beta2"]
    assert [n for n in lay2.names() if n.startswith("A") and "[1,1]" in n] == [
        "A1[1,1]", "A2[1,1]", "A3[1,1]", "A4[1,1]"]


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 3), n=st.integers(1, 3),
       structure=st.sampled_from(["diagonal", "full"]),
       order=st.sampled_from([(1, 1), (2, 2), (1, 2)]))
def test_pack_unpack_roundtrip(seed, m, n, structure, order):
    rng = np.random.default_rng(seed)
    theta = random_theta(rng, m, n, structure, order)
    v = pack(theta)
    back = unpack(v, (m, n), structure, order)
    np.testing.assert_allclose(back.to_vector(), theta.to_vector(), rtol=1e-12, atol=1e-14)
    # and unconstrained -> natural -> unconstrained
    u = rng.normal(size=v.size)
    lay = theta.layout
    np.testing.assert_allclose(lay.pack(lay.unpack_vector(u)), u, rtol=1e-9, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_unpacked_weights_respect_persistence_bound(seed):
    rng = np.random.default_rng(seed)
    lay = ParamLayout(2, 2, "diagonal", (2, 2))
    v = rng.normal(scale=5.0, size=lay.p)
    x = lay.unpack_vector(v, rho_bar=0.9)
    ab = x[1:lay.n_gamma]
    assert np.all(ab >= 0) and ab.sum() < 0.9
    assert x[0] > 0 and np.all(x[lay.diag_a0_mask()] > 0)


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(3)
    lay = ParamLayout(2, 3, "full", (2, 2))
    v = rng.normal(scale=0.5, size=lay.p)
    J = lay.jacobian(v)
    h = 1e-6
    Jfd = np.empty_like(J)
    for i in range(lay.p):
        e = np.zeros(lay.p)
        e[i] = h
        Jfd[:, i] = (lay.unpack_vector(v + e) - lay.unpack_vector(v - e)) / (2 * h)
    np.testing.assert_allclose(J, Jfd, atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), structure=st.sampled_from(["diagonal", "full"]),
       order=st.sampled_from([(1, 1), (2, 2)]))
def test_trace_identities(seed, structure, order):
    rng = np.random.default_rng(seed)
    theta = random_theta(rng, 3, 2, structure, order)
    X = rng.standard_normal((40, 3, 2))
    state = filter_path(X, theta)
    np.testing.assert_allclose(np.trace(state.V, axis1=1, axis2=2), 1.0, atol=1e-10)
    for t in (0, 17, 39):
        S = state.sigma(t)
        assert abs(np.trace(S) - state.y[t]) <= 1e-10 * max(1.0, state.y[t])
        np.testing.assert_allclose(state.row_cov(t), state.U[t], rtol=1e-12)
        np.testing.assert_allclose(state.col_cov(t), state.y[t] * state.V[t], rtol=1e-12)


def test_sigma_matches_expected_outer_product():
    # E[vec(X) vec(X)'] = V (x) U for X = U^{1/2} Z V^{1/2} with iid N(0,1) Z
    rng = np.random.default_rng(0)
    U = np.array([[2.0, 0.5], [0.5, 1.0]])
    V = np.array([[0.6, 0.1, 0.0], [0.1, 0.3, 0.05], [0.0, 0.05, 0.1]])
    Ur, Vr = sqrt_psd(U), sqrt_psd(V)
    Z = rng.standard_normal((200000, 2, 3))
    X = Ur @ Z @ Vr
    v = np.swapaxes(X, 1, 2).reshape(len(X), -1)
    np.testing.assert_allclose(v.T @ v / len(X), np.kron(V, U), atol=0.02)


def test_kron_eigenvalues():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((3, 3))
    B = rng.standard_normal((2, 2))
    U, V = A @ A.T + np.eye(3), B @ B.T + np.eye(2)
    np.testing.assert_allclose(np.sort(kron_eigenvalues(V, U)),
                               np.linalg.eigvalsh(np.kron(V, U)), rtol=1e-10)


def test_square_roots():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((4, 4))
    S = A @ A.T + 0.1 * np.eye(4)
    R = sqrt_psd(S)
    np.testing.assert_allclose(R, R.T, atol=1e-12)
    np.testing.assert_allclose(R @ R, S, atol=1e-10)
    Ri = inv_sqrt_pd(S)
    np.testing.assert_allclose(Ri @ S @ Ri, np.eye(4), atol=1e-9)
    with pytest.raises(ValueError):
        sqrt_psd(A)


def test_forecast_state_is_next_filter_step():
    rng = np.random.default_rng(4)
    theta = random_theta(rng, 2, 2)
    X = rng.standard_normal((30, 2, 2))
    U, V, y = forecast_state(X[:29], theta)
    state = filter_path(X, theta)
    np.testing.assert_allclose(U, state.U[29], rtol=1e-12)
    np.testing.assert_allclose(V, state.V[29], rtol=1e-12)
    assert y == pytest.approx(state.y[29], rel=1e-12)


def test_canonical_flip_preserves_state():
    rng = np.random.default_rng(5)
    theta = random_theta(rng, 2, 2, "full")
    r = theta.row
    flipped = Theta(theta.trace, SideParams(r.A0, -r.arch, -r.garch, "full"), theta.col)
    X = rng.standard_normal((25, 2, 2))
    np.testing.assert_allclose(filter_path(X, flipped).U, filter_path(X, theta).U, rtol=1e-12)
    np.testing.assert_allclose(flipped.canonical().to_vector(), theta.canonical().to_vector())


def test_dimension_mismatch():
    theta = random_theta(np.random.default_rng(6), 2, 2)
    with pytest.raises(DimensionError):
        filter_path(np.zeros((5, 3, 2)), theta)


def test_dict_roundtrip():
    theta = random_theta(np.random.default_rng(7), 3, 2, "full", (2, 2))
    back = Theta.from_dict(theta.to_dict())
    np.testing.assert_array_equal(back.to_vector(), theta.to_vector())
    assert back.order == (2, 2) and back.structure == "full"


@pytest.mark.skipif(compiled_kernels is None, reason="compiled kernels not built")
@pytest.mark.parametrize("structure,order", [("diagonal", (1, 1)), ("full", (2, 2))])
def test_backends_agree(structure, order):
    rng = np.random.default_rng(8)
    theta = random_theta(rng, 3, 2, structure, order)
    X = np.ascontiguousarray(rng.standard_normal((60, 3, 2)))
    args = theta.kernel_args()
    for a, b in zip(compiled_kernels.filter_states(X, *args), python_kernels.filter_states(X, *args)):
        np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-13)
    lc, qc, okc = compiled_kernels.loglik_terms(X, *args)
    lp, qp, okp = python_kernels.loglik_terms(X, *args)
    assert okc and okp
    np.testing.assert_allclose(lc, lp, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(qc, qp, rtol=1e-10, atol=1e-12)
    tc, gc, _ = compiled_kernels.loglik_grad(X, *args)
    tp, gp, _ = python_kernels.loglik_grad(X, *args)
    assert tc == pytest.approx(tp, rel=1e-10)
    for key in gc:
        np.testing.assert_allclose(gc[key], gp[key], rtol=1e-8, atol=1e-10)
