"""Minimum-variance portfolios and rolling backtests."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import as_panel, forecast_state
from .estimate import EstimationError, fit
from .evaluate import RISKMETRICS_LAMBDA, fit_vt_bekk, riskmetrics_path
from .factor import (FactorError, estimate_loadings, extract_factors, factor_covariance,
                     idiosyncratic_cov, varimax)

logger = logging.getLogger(__name__)

ENGINES = ("mf_garch", "matrix_garch", "riskmetrics", "diag_bekk_vt", "sample", "equal_weights")


class PortfolioError(RuntimeError):
    pass


def mvp_unconstrained(Sigma: np.ndarray) -> np.ndarray:
    """Sigma^{-1} 1 / (1' Sigma^{-1} 1)."""
    S = np.asarray(Sigma, dtype=float)
    try:
        L = np.linalg.cholesky(0.5 * (S + S.T))
    except np.linalg.LinAlgError as exc:
        raise PortfolioError("covariance matrix is not positive definite") from exc
    ones = np.ones(S.shape[0])
    z = np.linalg.solve(L.T, np.linalg.solve(L, ones))
    return z / z.sum()


def _project_simplex(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1.0), 0.0)


def kkt_residual(Sigma: np.ndarray, w: np.ndarray) -> float:
    """Max violation of the long-only MVP optimality conditions.

    With g = 2 Sigma w and mu the multiplier of the budget, stationarity on
    the support, dual feasibility off it, complementarity and primal
    feasibility are combined relative to the scale of g.
    """
    g = 2.0 * Sigma @ w
    supp = w > 1e-12
    mu = float(np.mean(g[supp])) if supp.any() else float(np.min(g))
    lam = g - mu
    scale = max(1.0, float(np.max(np.abs(g))))
    return max(
        float(np.max(np.abs(lam[supp]))) / scale if supp.any() else 0.0,
        float(np.max(np.maximum(-lam, 0.0))) / scale,
        float(np.max(np.abs(lam * w))) / scale,
        abs(float(w.sum()) - 1.0),
        float(np.max(np.maximum(-w, 0.0))),
    )


def _polish(S: np.ndarray, supp: np.ndarray):
    """Equality-constrained MVP on a support set."""
    idx = np.flatnonzero(supp)
    sub = S[np.ix_(idx, idx)]
    try:
        z = np.linalg.solve(sub, np.ones(idx.size))
    except np.linalg.LinAlgError:
        return None
    if z.sum() <= 0:
        return None
    w = np.zeros(S.shape[0])
    w[idx] = z / z.sum()
    return w


def mvp_constrained(Sigma: np.ndarray, tol: float = 1e-9, max_iter: int = 20000) -> np.ndarray:
    """Long-only minimum-variance weights.

    Projected gradient on the simplex with Armijo backtracking; once the
    active set settles the solution is polished by an exact solve on the
    support. Stops when the KKT residual is below ``tol``.
    """
    S = np.asarray(Sigma, dtype=float)
    S = 0.5 * (S + S.T)
    d = S.shape[0]
    try:
        w = mvp_unconstrained(S)
    except PortfolioError:
        w = np.full(d, 1.0 / d)
    if np.all(w >= 0):
        return w
    w = _project_simplex(w)
    step = 1.0 / max(np.linalg.eigvalsh(S)[-1], 1e-300)
    f = w @ S @ w
    last_supp = None
    for it in range(max_iter):
        g = 2.0 * S @ w
        while True:
            w_new = _project_simplex(w - step * g)
            f_new = w_new @ S @ w_new
            if f_new <= f + g @ (w_new - w) + 0.5 / step * np.sum((w_new - w) ** 2) or step < 1e-20:
                break
            step *= 0.5
        w, f = w_new, f_new
        step *= 1.5
        supp = w > 0
        if last_supp is not None and np.array_equal(supp, last_supp) and it % 10 == 0:
            wp = _polish(S, supp)
            if wp is not None and np.all(wp >= 0) and kkt_residual(S, wp) < tol:
                return wp
        last_supp = supp
        if kkt_residual(S, w) < tol:
            return w
    res = kkt_residual(S, w)
    if res > 1e-6:
        raise PortfolioError(f"projected gradient did not converge (KKT residual {res:.2e})")
    return w


def cumulative_returns(returns) -> np.ndarray:
    """prod(1 + r_t/100) - 1 for percentage returns."""
    return np.cumprod(1.0 + np.asarray(returns, dtype=float) / 100.0) - 1.0


def performance(returns, periods_per_year: int = 252) -> tuple[float, float, float]:
    """Annualised AV, SD and IR of a return series."""
    r = np.asarray(returns, dtype=float)
    av = float(np.mean(r))
    var = float(np.sum((r - av) ** 2) / (r.size - 1))
    AV = av * periods_per_year
    SD = np.sqrt(var) * np.sqrt(periods_per_year)
    return AV, SD, AV / SD if SD > 0 else np.nan


@dataclass
class BacktestResult:
    weights: np.ndarray
    returns: np.ndarray
    AV: float
    SD: float
    IR: float
    constrained: bool
    engine: str = ""
    failed_windows: list = field(default_factory=list)

    @property
    def cumulative(self) -> np.ndarray:
        return cumulative_returns(self.returns)

    def to_dict(self) -> dict:
        return {"engine": self.engine, "constrained": self.constrained, "AV": self.AV,
                "SD": self.SD, "IR": self.IR, "failed_windows": self.failed_windows,
                "returns": self.returns.tolist()}


class _MFGarchEngine:
    """Factor GARCH forecaster; loadings and parameters are refreshed at refits."""

    def __init__(self, k1, k2, rotate=True, multistarts=1):
        self.k1, self.k2, self.rotate, self.multistarts = k1, k2, rotate, multistarts
        self.state = None

    def refit(self, window):
        R, C = estimate_loadings(window, self.k1, self.k2)
        if self.rotate:
            R, _ = varimax(R)
            C, _ = varimax(C)
        start = self.state[2] if self.state is not None else None
        F = extract_factors(window, R, C)
        res = fit(F, multistarts=self.multistarts, compute_sandwich=False, start=start)
        self.state = (R, C, res.theta_hat)

    def forecast(self, window):
        R, C, theta = self.state
        F = extract_factors(window, R, C)
        U, V, _ = forecast_state(F, theta)
        sigma_e, diag = idiosyncratic_cov(window, R, C, F)
        return factor_covariance(R, C, U, V, sigma_e, diag)


class _MatrixGarchEngine:
    def __init__(self, multistarts=1):
        self.multistarts = multistarts
        self.theta = None

    def refit(self, window):
        self.theta = fit(window, multistarts=self.multistarts, compute_sandwich=False,
                         start=self.theta).theta_hat

    def forecast(self, window):
        U, V, _ = forecast_state(window, self.theta)
        return np.kron(V, U)


class _BekkEngine:
    def __init__(self):
        self.model = None

    def refit(self, window):
        self.model = fit_vt_bekk(window.vec())

    def forecast(self, window):
        return self.model.path(window.vec())[-1]


class _SimpleEngine:
    def __init__(self, kind, lam=RISKMETRICS_LAMBDA):
        self.kind, self.lam = kind, lam

    def refit(self, window):
        pass

    def forecast(self, window):
        x = window.vec()
        if self.kind == "riskmetrics":
            return riskmetrics_path(x, self.lam)[-1]
        return x.T @ x / x.shape[0]


def _make_engine(engine: str, k1, k2, multistarts):
    if engine == "mf_garch":
        return _MFGarchEngine(k1, k2, multistarts=multistarts)
    if engine == "matrix_garch":
        return _MatrixGarchEngine(multistarts)
    if engine == "diag_bekk_vt":
        return _BekkEngine()
    if engine in ("riskmetrics", "sample"):
        return _SimpleEngine(engine)
    raise ValueError(f"unknown engine {engine!r}; choose from {ENGINES}")


def rolling_backtest(panel, engine: str = "mf_garch", T_train: int = 600, T_test: int = 100,
                     constrained: bool = False, periods_per_year: int = 252,
                     refit_every: int = 1, k1: int = 3, k2: int = 3,
                     multistarts: int = 1) -> BacktestResult:
    """Minimum-variance backtest over the last ``T_test`` observations.

    At each test time t0 the engine forecasts the covariance of vec(X_t0)
    from the preceding ``T_train`` observations. Parameters (and loadings)
    are re-estimated every ``refit_every`` steps and held fixed in between,
    while the filter always runs through the latest window. A failed refit
    keeps the previous weights and records the window index.
    """
    panel = as_panel(panel)
    if engine not in ENGINES:
        raise ValueError(f"unknown engine {engine!r}; choose from {ENGINES}")
    if T_train + T_test > panel.T:
        raise ValueError(f"T_train + T_test = {T_train + T_test} exceeds T = {panel.T}")
    if refit_every < 1:
        raise ValueError("refit_every must be positive")
    mn = panel.m * panel.n
    start = panel.T - T_test
    weights = np.zeros((T_test, mn))
    returns = np.zeros(T_test)
    failed = []
    eng = None if engine == "equal_weights" else _make_engine(engine, k1, k2, multistarts)
    w_prev = np.full(mn, 1.0 / mn)
    fitted = False
    for h in range(T_test):
        t0 = start + h
        if eng is None:
            w = w_prev
        else:
            window = panel[t0 - T_train:t0]
            try:
                if h % refit_every == 0 or not fitted:
                    eng.refit(window)
                    fitted = True
                S = eng.forecast(window)
                w = mvp_constrained(S) if constrained else mvp_unconstrained(S)
            except (EstimationError, FactorError, PortfolioError, FloatingPointError,
                    np.linalg.LinAlgError) as exc:
                logger.warning("window %d failed (%s); keeping previous weights", h, exc)
                failed.append(h)
                w = w_prev
        weights[h] = w
        returns[h] = float(w @ panel.data[t0].reshape(-1, order="F"))
        w_prev = w
    AV, SD, IR = performance(returns, periods_per_year)
    return BacktestResult(weights, returns, AV, SD, IR, constrained, engine, failed)
