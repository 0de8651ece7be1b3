import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matgarch.portfolio import (PortfolioError, cumulative_returns, kkt_residual, mvp_constrained,
                                mvp_unconstrained, performance, rolling_backtest)
from matgarch.simulate import design_theta, simulate


def random_spd(rng, d):
    A = rng.standard_normal((d, d))
    return A @ A.T / d + 0.05 * np.eye(d)


def test_unconstrained_closed_form():
    rng = np.random.default_rng(0)
    S = random_spd(rng, 6)
    inv = np.linalg.inv(S)
    expected = inv @ np.ones(6) / (np.ones(6) @ inv @ np.ones(6))
    np.testing.assert_allclose(mvp_unconstrained(S), expected, atol=1e-12)


def test_diagonal_weights_inverse_variance():
    w = mvp_unconstrained(np.diag([1.0, 2.0, 4.0]))
    np.testing.assert_allclose(w, np.array([4.0, 2.0, 1.0]) / 7.0)


def test_not_pd_raises():
    with pytest.raises(PortfolioError):
        mvp_unconstrained(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_two_asset_corner():
    # the second asset has higher variance and strong positive correlation,
    # so the unconstrained solution shorts it and the long-only one is a corner
    S = np.array([[1.0, 1.8], [1.8, 4.0]])
    assert mvp_unconstrained(S)[1] < 0
    np.testing.assert_allclose(mvp_constrained(S), [1.0, 0.0], atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(2, 12))
def test_constrained_kkt(seed, d):
    S = random_spd(np.random.default_rng(seed), d)
    w = mvp_constrained(S)
    assert kkt_residual(S, w) < 1e-6
    assert np.all(w >= 0) and w.sum() == pytest.approx(1.0)
    # no worse than the equal-weight portfolio or any single asset
    v = w @ S @ w
    assert v <= np.full(d, 1 / d) @ S @ np.full(d, 1 / d) + 1e-12
    assert v <= np.min(np.diag(S)) + 1e-12


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.floats(1e-3, 1e3))
def test_scale_equivariance(seed, c):
    S = random_spd(np.random.default_rng(seed), 5)
    np.testing.assert_allclose(mvp_unconstrained(c * S), mvp_unconstrained(S), atol=1e-9)
    np.testing.assert_allclose(mvp_constrained(c * S), mvp_constrained(S), atol=1e-6)


def test_cumulative_and_performance():
    r = np.array([1.0, -1.0, 2.0])
    np.testing.assert_allclose(cumulative_returns(r), [0.01, 1.01 * 0.99 - 1, 1.01 * 0.99 * 1.02 - 1])
    AV, SD, IR = performance(r, periods_per_year=4)
    assert AV == pytest.approx(np.mean(r) * 4)
    assert SD == pytest.approx(np.std(r, ddof=1) * 2)
    assert IR == pytest.approx(AV / SD)


def test_equal_weights_backtest():
    panel = simulate(design_theta(), 150, seed=1)
    res = rolling_backtest(panel, "equal_weights", T_train=100, T_test=50)
    np.testing.assert_allclose(res.weights, 1 / 9)
    np.testing.assert_allclose(res.returns, panel.data[100:].mean(axis=(1, 2)))


@pytest.mark.parametrize("engine", ["sample", "riskmetrics", "matrix_garch", "diag_bekk_vt"])
def test_engines_run(engine):
    panel = simulate(design_theta(), 330, seed=2)
    res = rolling_backtest(panel, engine, T_train=300, T_test=30, refit_every=15)
    assert res.weights.shape == (30, 9)
    np.testing.assert_allclose(res.weights.sum(axis=1), 1.0)
    assert np.isfinite(res.SD) and not res.failed_windows


def test_constrained_backtest_long_only():
    panel = simulate(design_theta(), 230, seed=3)
    res = rolling_backtest(panel, "sample", T_train=200, T_test=30, constrained=True)
    assert np.all(res.weights >= 0)


def test_backtest_validation():
    panel = simulate(design_theta(), 50, seed=4)
    with pytest.raises(ValueError, match="exceeds"):
        rolling_backtest(panel, "sample", T_train=40, T_test=20)
    with pytest.raises(ValueError, match="unknown engine"):
        rolling_backtest(panel, "oracle", T_train=20, T_test=20)
