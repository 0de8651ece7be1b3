"""Quasi maximum likelihood estimation with sandwich standard errors."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from ._backend import kernels
from .core import (DEFAULT_RHO_BAR, ParamLayout, SideParams, Theta, TraceParams, as_panel)

logger = logging.getLogger(__name__)

PENALTY = 1e10


class EstimationError(RuntimeError):
    """Raised when no start converges or the sandwich cannot be formed."""


@dataclass
class FitResult:
    theta_hat: Theta
    neg_loglik: float
    C0_hat: np.ndarray
    C1_hat: np.ndarray
    avar: np.ndarray
    std_errors: np.ndarray
    converged: bool
    iterations: int
    multistart_best_of: int
    grad_norm: float = np.nan
    at_boundary: bool = False
    stationary: bool = True
    nobs: int = 0
    param_names: list = field(default_factory=list)
    message: str = ""

    @property
    def params(self) -> np.ndarray:
        return self.theta_hat.to_vector()

    def summary(self) -> str:
        lines = [f"{'param':<12}{'estimate':>12}{'std.err':>12}"]
        for name, est, se in zip(self.param_names, self.params, self.std_errors):
            lines.append(f"{name:<12}{est:>12.4f}{se:>12.4f}")
        lines.append(f"neg. quasi log-likelihood (per obs): {self.neg_loglik:.6f}")
        lines.append(f"converged: {self.converged}  iterations: {self.iterations}  "
                     f"|grad|_inf: {self.grad_norm:.2e}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "theta": self.theta_hat.to_dict(),
            "param_names": self.param_names,
            "params": self.params.tolist(),
            "std_errors": [None if not np.isfinite(s) else float(s) for s in self.std_errors],
            "neg_loglik": self.neg_loglik,
            "C0_hat": np.nan_to_num(self.C0_hat).tolist(),
            "C1_hat": np.nan_to_num(self.C1_hat).tolist(),
            "avar": np.nan_to_num(self.avar).tolist(),
            "converged": self.converged,
            "iterations": self.iterations,
            "multistart_best_of": self.multistart_best_of,
            "grad_norm": self.grad_norm,
            "at_boundary": self.at_boundary,
            "stationary": self.stationary,
            "nobs": self.nobs,
        }


# ---------------------------------------------------------------------------
# Objective
# ---------------------------------------------------------------------------


def _terms(layout: ParamLayout, x: np.ndarray, data: np.ndarray):
    logdet, quad, ok = kernels.loglik_terms(data, *layout.kernel_args(x))
    if not ok or not (np.all(np.isfinite(logdet)) and np.all(np.isfinite(quad))):
        return None
    return logdet, quad


def loglik_contributions(theta: Theta, panel) -> np.ndarray:
    """Per-observation l_t = (log|Sigma_t| + vec(X_t)' Sigma_t^{-1} vec(X_t)) / 2."""
    panel = as_panel(panel)
    res = _terms(theta.layout, theta.to_vector(), panel.data)
    if res is None:
        raise FloatingPointError("conditional covariance is singular for these parameters")
    return 0.5 * (res[0] + res[1])


def _objective_x(layout, x, data) -> float:
    res = _terms(layout, x, data)
    if res is None:
        return PENALTY
    return 0.5 * float(np.mean(res[0] + res[1]))


def neg_loglik(theta: Theta, panel) -> float:
    """Feasible quasi negative log-likelihood per observation (constants dropped).

    Returns a large penalty instead of raising when the parameters make some
    U_t or V_t singular.
    """
    panel = as_panel(panel)
    if panel.dims != (theta.m, theta.n):
        raise ValueError(f"panel dims {panel.dims} do not match theta dims {(theta.m, theta.n)}")
    return _objective_x(theta.layout, theta.to_vector(), panel.data)


def _natural_grad(layout, x, data):
    total, grads, ok = kernels.loglik_grad(data, *layout.kernel_args(x))
    if not ok or not np.isfinite(total):
        return PENALTY, None
    T = data.shape[0]
    return total / T, layout.grads_to_vector(grads) / T


def score(theta: Theta, panel) -> np.ndarray:
    """Gradient of the per-observation objective in natural coordinates (adjoint pass)."""
    panel = as_panel(panel)
    val, g = _natural_grad(theta.layout, theta.to_vector(), panel.data)
    if g is None:
        raise FloatingPointError("conditional covariance is singular for these parameters")
    return g


def _fd_step(v: np.ndarray) -> np.ndarray:
    return np.maximum(1e-5, 1e-7 * np.abs(v))


def gradient(theta: Theta, panel, rho_bar: float = DEFAULT_RHO_BAR,
             step_scale: float = 1.0) -> np.ndarray:
    """Central finite-difference gradient on the unconstrained parameterisation.

    Step h_i = max(1e-5, 1e-7 |v_i|), multiplied by ``step_scale``.
    """
    panel = as_panel(panel)
    layout = theta.layout
    v = layout.pack(theta, rho_bar)
    h = _fd_step(v) * step_scale
    g = np.empty(layout.p)
    for i in range(layout.p):
        e = np.zeros(layout.p)
        e[i] = h[i]
        fp = _objective_x(layout, layout.unpack_vector(v + e, rho_bar), panel.data)
        fm = _objective_x(layout, layout.unpack_vector(v - e, rho_bar), panel.data)
        if fp >= PENALTY or fm >= PENALTY:
            raise FloatingPointError(f"objective not finite near coordinate {i}")
        g[i] = (fp - fm) / (2.0 * h[i])
    return g


def unconstrained_score(theta: Theta, panel, rho_bar: float = DEFAULT_RHO_BAR) -> np.ndarray:
    """Analytic gradient on the unconstrained parameterisation (chain rule)."""
    layout = theta.layout
    v = layout.pack(theta, rho_bar)
    return layout.jacobian(v, rho_bar).T @ score(theta, panel)


# ---------------------------------------------------------------------------
# Starting values and optimisation
# ---------------------------------------------------------------------------


def _normalized_chol(M: np.ndarray) -> np.ndarray:
    d = M.shape[0]
    M = 0.5 * (M + M.T) + 1e-8 * np.trace(M) / d * np.eye(d)
    L = np.linalg.cholesky(M)
    return L / L[0, 0]


def start_theta(panel, structure: str = "diagonal", order=(1, 1)) -> Theta:
    """Moment-matched starting point.

    alpha=0.1, beta=0.8, w=(1-alpha-beta) mean ||X_t||^2, A0/B0 from the
    Cholesky factor of the sample row/column second moment scaled so that
    A0[0,0]=1, ARCH matrices 0.3 I and GARCH matrices 0.6 I. Second lags,
    when present, start small.
    """
    panel = as_panel(panel)
    X = panel.data
    m, n = panel.dims
    q1, q2 = order
    a = [0.1] + [0.02] * (q1 - 1)
    b = [0.8] + [0.02] * (q2 - 1)
    w = (1.0 - sum(a) - sum(b)) * float(np.mean(np.einsum("tij,tij->t", X, X)))
    row_m = np.einsum("tij,tkj->ik", X, X) / panel.T
    col_m = np.einsum("tji,tjk->ik", X, X) / panel.T

    def side(M, d):
        arch = [0.3 * np.eye(d)] + [0.1 * np.eye(d)] * (q1 - 1)
        garch = [0.6 * np.eye(d)] + [0.1 * np.eye(d)] * (q2 - 1)
        return SideParams(_normalized_chol(M), arch, garch, structure)

    return Theta(TraceParams(max(w, 1e-8), a, b), side(row_m, m), side(col_m, n))


def _optimize(layout, data, v0, free, rho_bar, max_iter, tol):
    """BFGS over the free unconstrained coordinates; inert ones stay at v0."""

    def full(u):
        v = v0.copy()
        v[free] = u
        return v

    def fun(u):
        v = full(u)
        x = layout.unpack_vector(v, rho_bar)
        val, g = _natural_grad(layout, x, data)
        if g is None:
            return PENALTY, np.zeros(free.sum())
        gv = layout.jacobian(v, rho_bar).T @ g
        return val, gv[free]

    # penalty values make the line search divide by zero; it recovers by backtracking
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        res = optimize.minimize(fun, v0[free], jac=True, method="BFGS",
                                options={"maxiter": max_iter, "gtol": tol})
    return full(res.x), res


def fit(panel, structure: str = "diagonal", order=(1, 1), multistarts: int = 5,
        max_iter: int = 1000, tol: float = 1e-6, seed: int | None = 0,
        rho_bar: float = DEFAULT_RHO_BAR, start: Theta | None = None,
        compute_sandwich: bool = True) -> FitResult:
    """Quasi maximum likelihood fit of the matrix GARCH model.

    The first start is ``start`` (or the moment-matched default); the other
    ``multistarts - 1`` starts perturb it by N(0, 0.3^2) on the unconstrained
    scale. The best local optimum is kept.
    """
    panel = as_panel(panel)
    order = tuple(order)
    layout = ParamLayout(panel.m, panel.n, structure, order)
    inert = layout.inert_mask()
    free = ~inert
    if panel.T <= free.sum():
        raise EstimationError(f"T={panel.T} must exceed the number of free parameters {free.sum()}")
    theta0 = start if start is not None else start_theta(panel, structure, order)
    if theta0.layout != layout:
        raise ValueError("start does not match the requested dims/structure/order")
    x0 = theta0.to_vector()
    x0[inert] = 0.0
    v0 = layout.pack(x0, rho_bar)
    rng = np.random.default_rng(seed)
    starts = [v0]
    for _ in range(max(multistarts, 1) - 1):
        v = v0.copy()
        v[free] += rng.normal(0.0, 0.3, free.sum())
        starts.append(v)

    best = None
    for k, vs in enumerate(starts):
        try:
            v_hat, res = _optimize(layout, panel.data, vs, free, rho_bar, max_iter, tol)
        except (FloatingPointError, np.linalg.LinAlgError, ValueError) as exc:
            logger.debug("start %d failed: %s", k, exc)
            continue
        if not np.isfinite(res.fun) or res.fun >= PENALTY:
            continue
        if best is None or res.fun < best[1].fun:
            best = (v_hat, res)
    if best is None:
        raise EstimationError("all starting points failed")
    v_hat, res = best
    x_hat = layout.unpack_vector(v_hat, rho_bar)
    theta_hat = layout.from_vector(x_hat).canonical()
    g_unc = layout.jacobian(v_hat, rho_bar).T @ _natural_grad(layout, x_hat, panel.data)[1]
    grad_norm = float(np.max(np.abs(g_unc[free]))) if free.any() else 0.0
    converged = bool(res.success or grad_norm < max(tol, 1e-4))

    gamma = x_hat[1:layout.n_gamma]
    dvals = x_hat[layout.diag_a0_mask() & free]
    at_boundary = bool(np.any(gamma < 1e-6) or gamma.sum() > rho_bar - 1e-6
                       or np.any(dvals < 1e-6))

    p = layout.p
    C0 = C1 = avar = np.full((p, p), np.nan)
    se = np.full(p, np.nan)
    if compute_sandwich:
        C0, C1, avar, se = sandwich(theta_hat, panel)
    return FitResult(
        theta_hat=theta_hat, neg_loglik=float(res.fun), C0_hat=C0, C1_hat=C1, avar=avar,
        std_errors=se, converged=converged, iterations=int(res.nit),
        multistart_best_of=len(starts), grad_norm=grad_norm, at_boundary=at_boundary,
        stationary=theta_hat.is_stationary(rho_bar), nobs=panel.T,
        param_names=layout.names(), message=str(res.message),
    )


# ---------------------------------------------------------------------------
# Sandwich covariance
# ---------------------------------------------------------------------------


def _hessian_fd(layout, x, data, idx):
    k = len(idx)
    H = np.zeros((k, k))
    for a, i in enumerate(idx):
        h = max(1e-5, 1e-5 * abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        gp = _natural_grad(layout, xp, data)[1]
        gm = _natural_grad(layout, xm, data)[1]
        if gp is None or gm is None:
            raise EstimationError("objective not finite around the estimate")
        H[:, a] = (gp[idx] - gm[idx]) / (2.0 * h)
    return 0.5 * (H + H.T)


def per_observation_scores(theta: Theta, panel, idx=None) -> np.ndarray:
    """Central finite-difference scores dl_t/dtheta, shape (T, len(idx))."""
    panel = as_panel(panel)
    layout = theta.layout
    x = theta.to_vector()
    if idx is None:
        idx = np.arange(layout.p)
    out = np.empty((panel.T, len(idx)))
    for a, i in enumerate(idx):
        h = max(1e-5, 1e-7 * abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        rp = _terms(layout, xp, panel.data)
        rm = _terms(layout, xm, panel.data)
        if rp is None or rm is None:
            raise EstimationError("objective not finite around the estimate")
        out[:, a] = 0.5 * ((rp[0] + rp[1]) - (rm[0] + rm[1])) / (2.0 * h)
    return out


def sandwich(theta: Theta, panel, max_cond: float = 1e12):
    """Return (C0_hat, C1_hat, avar, std_errors) at ``theta``.

    C0_hat is the finite-difference Hessian of the average l_t, C1_hat the
    average outer product of per-observation scores and
    avar = C0^{-1} C1 C0^{-1} / T. Coordinates that cannot move the
    likelihood are reported as NaN.
    """
    panel = as_panel(panel)
    layout = theta.layout
    x = theta.to_vector()
    idx = np.flatnonzero(~layout.inert_mask())
    p = layout.p
    H = _hessian_fd(layout, x, panel.data, idx)
    cond = np.linalg.cond(H)
    if not np.isfinite(cond) or cond > max_cond:
        raise EstimationError(f"Hessian condition number {cond:.3e} exceeds {max_cond:.0e}; "
                              "consider a smaller model")
    S = per_observation_scores(theta, panel, idx)
    C1s = S.T @ S / panel.T
    Hinv = np.linalg.inv(H)
    av = Hinv @ C1s @ Hinv / panel.T
    av = 0.5 * (av + av.T)
    C0 = np.full((p, p), np.nan)
    C1 = np.full((p, p), np.nan)
    avar = np.full((p, p), np.nan)
    ix = np.ix_(idx, idx)
    C0[ix], C1[ix], avar[ix] = H, C1s, av
    se = np.full(p, np.nan)
    se[idx] = np.sqrt(np.clip(np.diag(av), 0.0, None))
    return C0, C1, avar, se
