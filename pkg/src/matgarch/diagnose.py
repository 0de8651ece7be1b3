"""Residuals and the portmanteau test for fitted matrix GARCH models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from ._backend import kernels
from .core import MatrixPanel, Theta, as_panel, filter_path, inv_sqrt_pd
from .estimate import FitResult

DEFAULT_LAGS = (2, 4, 6, 8)


class DiagnosticError(RuntimeError):
    pass


@dataclass(frozen=True)
class DiagnosticReport:
    L: int
    R_hat: np.ndarray
    Omega_hat: np.ndarray
    Q: float
    p_value: float
    kappa_hat: float
    eta_hat: np.ndarray
    T: int

    def reject(self, level: float = 0.05) -> bool:
        return self.p_value < level

    def to_dict(self) -> dict:
        return {"L": self.L, "Q": self.Q, "p_value": self.p_value,
                "R_hat": self.R_hat.tolist(), "Omega_hat": self.Omega_hat.tolist(),
                "kappa_hat": self.kappa_hat, "eta_hat": self.eta_hat.tolist(), "T": self.T}


def residuals(panel, theta: Theta) -> MatrixPanel:
    """Z_t = U_t^{-1/2} X_t V_t^{-1/2} with symmetric inverse square roots."""
    panel = as_panel(panel)
    state = filter_path(panel, theta)
    U, V = state.U, state.V
    Z = np.empty_like(panel.data)
    for t in range(panel.T):
        try:
            Z[t] = inv_sqrt_pd(U[t]) @ panel.data[t] @ inv_sqrt_pd(V[t])
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise DiagnosticError(f"U_t or V_t not positive definite at t={t}") from exc
    return MatrixPanel(Z, panel.time_labels)


def quadratic_forms(panel, theta: Theta) -> np.ndarray:
    """vec(X_t)' Sigma_t^{-1} vec(X_t) for every t."""
    panel = as_panel(panel)
    _, quad, ok = kernels.loglik_terms(panel.data, *theta.kernel_args())
    if not ok:
        raise DiagnosticError("U_t or V_t not positive definite")
    return quad


def _autocorr(c: np.ndarray, L: int) -> np.ndarray:
    denom = float(np.sum(c * c))
    if denom <= 0.0 or not np.isfinite(denom):
        raise DiagnosticError("quadratic-form series is constant; autocorrelation undefined")
    return np.array([np.dot(c[l:], c[:-l]) for l in range(1, L + 1)]) / denom


def residual_autocorr(panel, theta: Theta, L: int) -> np.ndarray:
    """R_l, l = 1..L, of the centred series vec(X_t)' Sigma_t^{-1} vec(X_t) - mn."""
    panel = as_panel(panel)
    if L < 1 or L >= panel.T:
        raise ValueError(f"need 1 <= L < T, got L={L}, T={panel.T}")
    c = quadratic_forms(panel, theta) - panel.m * panel.n
    return _autocorr(c, L)


def _term_derivatives(panel: MatrixPanel, theta: Theta, idx):
    """Central differences of log|Sigma_t| and the quadratic form, shape (T, k)."""
    layout = theta.layout
    x = theta.to_vector()
    T = panel.T
    dld = np.empty((T, len(idx)))
    dq = np.empty((T, len(idx)))
    for a, i in enumerate(idx):
        h = max(1e-5, 1e-7 * abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        lp, qp, okp = kernels.loglik_terms(panel.data, *layout.kernel_args(xp))
        lm, qm, okm = kernels.loglik_terms(panel.data, *layout.kernel_args(xm))
        if not (okp and okm):
            raise DiagnosticError("objective not finite around the estimate")
        dld[:, a] = (lp - lm) / (2.0 * h)
        dq[:, a] = (qp - qm) / (2.0 * h)
    return dld, dq


def _moments(panel: MatrixPanel, theta: Theta):
    Z = residuals(panel, theta).data
    mn = panel.m * panel.n
    sq = np.einsum("tij,tij->t", Z, Z)
    kappa = float(np.mean(sq ** 2) - mn ** 2)
    eta = (np.mean(Z ** 4, axis=0) - 1.0).reshape(-1, order="F")
    return kappa, eta


def omega_hat(panel, fit: FitResult, L: int, leading_term: str = "eta",
              estimation_effect: bool = True) -> np.ndarray:
    """Sample counterpart of the asymptotic covariance of sqrt(T) R.

    Omega = ((1'eta)^2 I - (N C0^{-1} M'/2 + M C0^{-1} N'/2
             - M C0^{-1} C1 C0^{-1} M')) / kappa^2

    with M_l = mean_t[d log|Sigma_t|/dtheta' c_{t-l}] and
    N_l = -mean_t[d q_t/dtheta' c_t c_{t-l}], where q_t is the quadratic
    form and c_t = q_t - mn. ``leading_term="kappa"`` replaces (1'eta)^2 by
    kappa^2, the variance of c_t c_{t-l} under any innovation law; the two
    coincide for Gaussian innovations.
    """
    omega, _, _ = _omega_parts(as_panel(panel), fit, L, leading_term, estimation_effect)
    return omega


def _omega_parts(panel: MatrixPanel, fit: FitResult, L: int, leading_term: str,
                 estimation_effect: bool):
    if leading_term not in ("eta", "kappa"):
        raise ValueError("leading_term must be 'eta' or 'kappa'")
    theta = fit.theta_hat
    kappa, eta = _moments(panel, theta)
    if not kappa > 0:
        raise DiagnosticError("kappa_hat is not positive")
    lead = float(np.sum(eta)) ** 2 if leading_term == "eta" else kappa ** 2
    omega = lead * np.eye(L)
    if estimation_effect:
        idx = np.flatnonzero(~theta.layout.inert_mask())
        C0 = fit.C0_hat[np.ix_(idx, idx)]
        C1 = fit.C1_hat[np.ix_(idx, idx)]
        if not (np.all(np.isfinite(C0)) and np.all(np.isfinite(C1))):
            raise DiagnosticError("fit carries no sandwich matrices; refit with compute_sandwich=True")
        T = panel.T
        c = quadratic_forms(panel, theta) - panel.m * panel.n
        dld, dq = _term_derivatives(panel, theta, idx)
        M = np.empty((L, len(idx)))
        N = np.empty((L, len(idx)))
        for l in range(1, L + 1):
            M[l - 1] = dld[l:].T @ c[:-l] / T
            N[l - 1] = -(dq[l:].T @ (c[l:] * c[:-l])) / T
        C0inv = np.linalg.inv(C0)
        A = N @ C0inv @ M.T
        omega = omega - (0.5 * A + 0.5 * A.T - M @ C0inv @ C1 @ C0inv @ M.T)
    omega = omega / kappa ** 2
    omega = 0.5 * (omega + omega.T)
    if np.min(np.linalg.eigvalsh(omega)) <= 0:
        raise DiagnosticError("Omega_hat is not positive definite; use a larger T or smaller L")
    return omega, kappa, eta


def portmanteau(panel, fit: FitResult, L: int, leading_term: str = "eta",
                estimation_effect: bool = True) -> DiagnosticReport:
    """Q_T(L) = T R' Omega^{-1} R with a chi-square(L) p-value."""
    panel = as_panel(panel)
    if L < 1:
        raise ValueError("L must be at least 1")
    R = residual_autocorr(panel, fit.theta_hat, L)
    omega, kappa, eta = _omega_parts(panel, fit, L, leading_term, estimation_effect)
    Q = float(panel.T * R @ np.linalg.solve(omega, R))
    Q = max(Q, 0.0)
    p = float(stats.chi2.sf(Q, L))
    return DiagnosticReport(L, R, omega, Q, p, kappa, eta, panel.T)


def portmanteau_lags(panel, fit: FitResult, lags=DEFAULT_LAGS, **kw) -> dict[int, DiagnosticReport]:
    """Run the test at several lags; the derivative work is shared."""
    panel = as_panel(panel)
    Lmax = max(lags)
    full = portmanteau(panel, fit, Lmax, **kw)
    out = {}
    for L in lags:
        R = full.R_hat[:L]
        om = full.Omega_hat[:L, :L]
        Q = max(float(panel.T * R @ np.linalg.solve(om, R)), 0.0)
        out[L] = DiagnosticReport(L, R, om, Q, float(stats.chi2.sf(Q, L)),
                                  full.kappa_hat, full.eta_hat, panel.T)
    return out
