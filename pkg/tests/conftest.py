import numpy as np
import pytest

from matgarch.core import ParamLayout, SideParams, Theta, TraceParams
from matgarch.simulate import design_theta, simulate


def random_theta(rng, m=3, n=3, structure="diagonal", order=(1, 1), scale=0.3):
    """Stationary random parameters near a mild design, built on the unconstrained scale."""
    layout = ParamLayout(m, n, structure, order)
    q1, q2 = order
    I_m, I_n = np.eye(m), np.eye(n)

    def side(d):
        A0 = np.tril(rng.uniform(0.1, 0.5, (d, d)))
        A0[np.diag_indices(d)] = rng.uniform(0.3, 0.8, d)
        A0[0, 0] = 1.0
        arch = [rng.uniform(0.15, 0.4) * np.eye(d) for _ in range(q1)]
        garch = [rng.uniform(0.3, 0.6) * np.eye(d) for _ in range(q2)]
        if structure == "full":
            arch = [a + 0.05 * rng.standard_normal((d, d)) for a in arch]
            garch = [g + 0.05 * rng.standard_normal((d, d)) for g in garch]
        return A0, arch, garch

    A0, Aa, Ag = side(m)
    B0, Ba, Bg = side(n)
    a = rng.uniform(0.05, 0.25, q1)
    b = rng.uniform(0.3, 0.6, q2)
    shrink = min(1.0, 0.9 / (a.sum() + b.sum()))
    a, b = a * shrink, b * shrink
    theta = Theta(TraceParams(rng.uniform(0.2, 1.0), a, b),
                  SideParams(A0, Aa, Ag, structure), SideParams(B0, Ba, Bg, structure))
    assert theta.layout == layout
    return theta


@pytest.fixture(scope="session")
def design():
    return design_theta()


@pytest.fixture(scope="session")
def design_panel(design):
    return simulate(design, 1500, seed=11)
