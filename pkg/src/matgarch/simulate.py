"""Innovation laws and matrix GARCH panel simulation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import MatrixPanel, Theta, sqrt_psd

KINDS = ("matrix_normal", "standardized_matrix_t")


class NonStationaryWarning(UserWarning):
    pass


@dataclass(frozen=True)
class InnovationLaw:
    """Law of Z_t with E vec(Z) = 0 and E vec(Z) vec(Z)' = I."""

    kind: str
    dims: tuple[int, int]
    dof: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        m, n = self.dims
        if m < 1 or n < 1:
            raise ValueError(f"dims must be positive, got {self.dims}")
        object.__setattr__(self, "dims", (int(m), int(n)))
        if self.kind == "standardized_matrix_t":
            if self.dof is None or not self.dof > 2:
                raise ValueError("standardized matrix t requires dof > 2 (finite variance)")
            if self.dof <= 4:
                warnings.warn("dof <= 4: fourth moments are infinite, the portmanteau "
                              "and sandwich theory do not apply", stacklevel=2)

    @classmethod
    def normal(cls, m: int, n: int) -> InnovationLaw:
        return cls("matrix_normal", (m, n))

    @classmethod
    def t(cls, m: int, n: int, dof: float) -> InnovationLaw:
        return cls("standardized_matrix_t", (m, n), float(dof))

    @property
    def entry_kurtosis(self) -> float:
        if self.kind == "matrix_normal":
            return 3.0
        nu = self.dof
        return 3.0 * (nu - 2.0) / (nu - 4.0) if nu > 4 else np.inf


def draw_innovations(law: InnovationLaw, size: int, rng) -> np.ndarray:
    """Draw ``size`` i.i.d. innovation matrices, shape (size, m, n).

    All Gaussian draws are taken before the chi-square mixing draws, so the
    normal and matrix-t laws share their Gaussian component under a common
    seed.
    """
    rng = np.random.default_rng(rng)
    m, n = law.dims
    W = rng.standard_normal((size, m, n))
    if law.kind == "matrix_normal":
        return W
    nu = law.dof
    s = rng.chisquare(nu, size) / nu
    return np.sqrt((nu - 2.0) / nu) * W / np.sqrt(s)[:, None, None]


def draw_innovation(law: InnovationLaw, rng) -> np.ndarray:
    return draw_innovations(law, 1, rng)[0]


def simulate(theta: Theta, T: int, burn_in: int = 500, law: InnovationLaw | None = None,
             order=None, seed=None) -> MatrixPanel:
    """Generate X_t = U_t^{1/2} Z_t V_t^{1/2} along the matrix GARCH recursion.

    The recursion starts from zero lagged values; the first ``burn_in``
    observations are discarded. Symmetric square roots are used.
    """
    if T < 1 or burn_in < 0:
        raise ValueError("T must be positive and burn_in nonnegative")
    if order is not None and tuple(order) != theta.order:
        raise ValueError(f"order {tuple(order)} does not match theta order {theta.order}")
    m, n = theta.m, theta.n
    if law is None:
        law = InnovationLaw.normal(m, n)
    if law.dims != (m, n):
        raise ValueError(f"law dims {law.dims} differ from theta dims {(m, n)}")
    if not theta.is_stationary(1.0):
        warnings.warn("theta violates the stationarity conditions; the simulated "
                      "panel may explode", NonStationaryWarning, stacklevel=2)

    total = T + burn_in
    Z = draw_innovations(law, total, seed)
    r, c, g = theta.row, theta.col, theta.trace
    C1 = r.A0 @ r.A0.T
    C2 = c.A0 @ c.A0.T
    q1, q2 = theta.order
    X = np.zeros((total, m, n))
    S1 = np.zeros((total, m, m))
    S2 = np.zeros((total, n, n))
    y = np.zeros(total)
    sq = np.zeros(total)
    for t in range(total):
        s1, s2, yt = C1.copy(), C2.copy(), g.w
        for k in range(q1):
            if t - k - 1 >= 0:
                x = X[t - k - 1]
                P = r.arch[k] @ x
                s1 += P @ P.T
                P = c.arch[k] @ x.T
                s2 += P @ P.T
                yt += g.alpha[k] * sq[t - k - 1]
        for k in range(q2):
            if t - k - 1 >= 0:
                s1 += r.garch[k] @ S1[t - k - 1] @ r.garch[k].T
                s2 += c.garch[k] @ S2[t - k - 1] @ c.garch[k].T
                yt += g.beta[k] * y[t - k - 1]
        S1[t], S2[t], y[t] = s1, s2, yt
        U = yt * s1 / np.trace(s1)
        V = s2 / np.trace(s2)
        X[t] = sqrt_psd(U) @ Z[t] @ sqrt_psd(V)
        sq[t] = float(np.sum(X[t] * X[t]))
        if not np.isfinite(sq[t]):
            raise FloatingPointError(f"simulation diverged at t={t}")
    return MatrixPanel(X[burn_in:])


# ---------------------------------------------------------------------------
# Designs used in the simulation studies
# ---------------------------------------------------------------------------

A0_DESIGN = np.array([[1.0, 0.0, 0.0], [0.4, 0.4, 0.0], [0.4, 0.4, 0.4]])


def design_theta() -> Theta:
    """3x3 diagonal first-order design: w=0.4, alpha=0.3, beta=0.6,
    A1=B1=0.3 I, A2=B2=0.6 I."""
    I = np.eye(3)
    return Theta.build(0.4, 0.3, 0.6, A0_DESIGN, 0.3 * I, 0.6 * I,
                       A0_DESIGN, 0.3 * I, 0.6 * I, structure="diagonal")


POWER_STEP = 0.038


def power_theta(d: float, case: int = 1) -> Theta:
    """Second-order alternative indexed by d.

    Case 1 adds a second ARCH lag of size 0.038 d, case 2 a second GARCH lag.
    d = 0 is the first-order null with w=0.4, alpha=beta=0.3 and all lag
    matrices 0.3 I.
    """
    if case not in (1, 2):
        raise ValueError("case must be 1 or 2")
    delta = POWER_STEP * d
    d1, d2 = (delta, 0.0) if case == 1 else (0.0, delta)
    I = np.eye(3)
    return Theta.build(0.4, 0.3, 0.3, A0_DESIGN, 0.3 * I, 0.3 * I,
                       A0_DESIGN, 0.3 * I, 0.3 * I, structure="diagonal",
                       A3=d1 * I, A4=d2 * I, B3=d1 * I, B4=d2 * I,
                       alpha2=d1, beta2=d2)


def null_theta() -> Theta:
    """First-order null used for the size study (d = 0)."""
    I = np.eye(3)
    return Theta.build(0.4, 0.3, 0.3, A0_DESIGN, 0.3 * I, 0.3 * I,
                       A0_DESIGN, 0.3 * I, 0.3 * I, structure="diagonal")
