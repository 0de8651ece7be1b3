import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matgarch.core import Theta
from matgarch.simulate import (InnovationLaw, NonStationaryWarning, design_theta, draw_innovations,
                               null_theta, power_theta, simulate)


@pytest.mark.parametrize("law", [InnovationLaw.normal(3, 3), InnovationLaw.t(3, 3, 15.0)])
def test_innovation_moments(law):
    Z = draw_innovations(law, 100000, 0).reshape(100000, -1)
    np.testing.assert_allclose(Z.mean(axis=0), 0.0, atol=0.02)
    np.testing.assert_allclose(np.cov(Z.T), np.eye(9), atol=0.03)


def test_t_kurtosis():
    law = InnovationLaw.t(3, 3, 15.0)
    assert law.entry_kurtosis == pytest.approx(3 * 13 / 11)
    Z = draw_innovations(law, 400000, 1).ravel()
    assert np.mean(Z ** 4) / np.mean(Z ** 2) ** 2 == pytest.approx(3.545, abs=0.05)


def test_t_shares_gaussian_draws():
    a = draw_innovations(InnovationLaw.normal(2, 2), 50, 5)
    b = draw_innovations(InnovationLaw.t(2, 2, 25.0), 50, 5)
    ratio = b / a
    # one common scale per matrix
    np.testing.assert_allclose(ratio, ratio[:, :1, :1] * np.ones_like(ratio), rtol=1e-12)


def test_law_validation():
    with pytest.raises(ValueError, match="dof > 2"):
        InnovationLaw.t(2, 2, 2.0)
    with pytest.warns(UserWarning, match="fourth moments"):
        InnovationLaw.t(2, 2, 3.5)


def test_simulate_is_deterministic():
    th = design_theta()
    a = simulate(th, 200, seed=42).data
    b = simulate(th, 200, seed=42).data
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, simulate(th, 200, seed=43).data)


def test_simulate_iid_collapse():
    # with no dynamics and identity intercepts X_t = sqrt(w/mn) Z_t
    m, n = 2, 3
    theta = Theta.build(6.0, 0.0, 0.0, np.eye(m), np.zeros((m, m)), np.zeros((m, m)),
                        np.eye(n), np.zeros((n, n)), np.zeros((n, n)))
    X = simulate(theta, 100, burn_in=7, seed=9).data
    Z = draw_innovations(InnovationLaw.normal(m, n), 107, 9)[7:]
    np.testing.assert_allclose(X, Z, atol=1e-12)


def test_unconditional_trace_level():
    th = design_theta()
    X = simulate(th, 20000, seed=1).data
    # E y_t = w / (1 - alpha - beta)
    assert np.mean(np.sum(X ** 2, axis=(1, 2))) == pytest.approx(4.0, rel=0.1)


def test_nonstationary_warning():
    I = np.eye(2)
    th = Theta.build(0.4, 0.6, 0.5, I, I, 0.5 * I, I, 0.3 * I, 0.6 * I)
    with pytest.warns(NonStationaryWarning):
        try:
            simulate(th, 50, burn_in=0, seed=0)
        except FloatingPointError:
            pass


def test_design_is_stationary():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        simulate(design_theta(), 10, seed=0)


def test_power_design():
    th = power_theta(10, case=1)
    assert th.order == (2, 2)
    assert th.trace.alpha[1] == pytest.approx(0.38)
    assert th.trace.beta[1] == 0.0
    np.testing.assert_allclose(th.row.arch[1], 0.38 * np.eye(3))
    th2 = power_theta(5, case=2)
    assert th2.trace.beta[1] == pytest.approx(0.19) and th2.trace.alpha[1] == 0.0
    np.testing.assert_allclose(power_theta(0).to_vector()[[0, 1, 3]], null_theta().to_vector()[:3])


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), T=st.integers(1, 30))
def test_simulated_panel_shape(seed, T):
    X = simulate(design_theta(), T, burn_in=5, seed=seed)
    assert X.data.shape == (T, 3, 3) and np.all(np.isfinite(X.data))
