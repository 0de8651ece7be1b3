"""Volatility forecast losses, the Diebold-Mariano test and baseline models."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, signal, stats

from .core import MatrixPanel, as_panel, filter_path
from .estimate import EstimationError, fit

logger = logging.getLogger(__name__)

BASELINES = ("univariate_garch", "diag_bekk_vt_column", "diag_bekk_vt_row",
             "diag_bekk_vt_full", "riskmetrics", "equal_sample")
RISKMETRICS_LAMBDA = 0.94
FULL_BEKK_LIMIT = 16
PENALTY = 1e10


# ---------------------------------------------------------------------------
# Losses and the DM test
# ---------------------------------------------------------------------------


def loss_series(forecast_var, realized) -> dict[str, np.ndarray]:
    """Per-time losses summed over entries, keyed MSE/MAE/QLIKE."""
    f = np.asarray(forecast_var, dtype=float)
    r2 = np.asarray(realized, dtype=float) ** 2
    if f.shape != r2.shape:
        raise ValueError(f"forecast shape {f.shape} differs from realized shape {r2.shape}")
    H = f.shape[0]
    f2, r2 = f.reshape(H, -1), r2.reshape(H, -1)
    out = {"MSE": np.sum((f2 - r2) ** 2, axis=1), "MAE": np.sum(np.abs(f2 - r2), axis=1)}
    if np.all(f2 > 0):
        out["QLIKE"] = np.sum(np.log(f2) + r2 / f2, axis=1)
    else:
        out["QLIKE"] = np.full(H, np.nan)
    return out


def entry_losses(forecast_var, realized) -> dict[str, float]:
    """MSE, MAE and QLIKE between variance forecasts and squared returns.

    ``forecast_var`` and ``realized`` have shape (H, m, n) (or any common
    shape with time first); ``realized`` holds returns, whose squares are the
    volatility proxy. Keys without suffix are means over entries and times;
    ``*_sum`` keys sum over entries and average over times. QLIKE is NaN when
    some forecast is not positive.
    """
    series = loss_series(forecast_var, realized)
    k = int(np.prod(np.shape(forecast_var)[1:])) or 1
    out = {}
    for name, s in series.items():
        out[name + "_sum"] = float(np.mean(s))
        out[name] = float(np.mean(s)) / k
    return out


@dataclass(frozen=True)
class DMResult:
    stat: float
    p_value: float
    defined: bool = True

    def stars(self) -> str:
        """Stars when the first loss series is significantly larger."""
        if not self.defined or self.stat <= 0:
            return ""
        for level, mark in ((0.01, "***"), (0.05, "**"), (0.10, "*")):
            if self.p_value < level:
                return mark
        return ""


def dm_test(loss_a, loss_b) -> DMResult:
    """Diebold-Mariano test on d_t = loss_a - loss_b.

    Bartlett long-run variance with floor(H^{1/3}) lags, two-sided normal
    p-value. A positive statistic means ``loss_a`` is larger on average.
    """
    a = np.asarray(loss_a, dtype=float)
    b = np.asarray(loss_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("loss series must be aligned 1-D arrays")
    H = a.shape[0]
    if H < 10:
        raise ValueError(f"DM test needs at least 10 observations, got {H}")
    d = a - b
    if np.all(d == 0):
        return DMResult(np.nan, np.nan, defined=False)
    K = int(np.floor(H ** (1.0 / 3.0)))
    dc = d - d.mean()
    lrv = np.dot(dc, dc) / H
    for k in range(1, K + 1):
        lrv += 2.0 * (1.0 - k / (K + 1.0)) * np.dot(dc[k:], dc[:-k]) / H
    if not lrv > 0:
        return DMResult(np.nan, np.nan, defined=False)
    stat = float(d.mean() / np.sqrt(lrv / H))
    return DMResult(stat, float(2.0 * stats.norm.sf(abs(stat))))


@dataclass
class LossTable:
    """Losses per model plus DM comparisons of each model against ``reference``."""

    reference: str
    losses: dict = field(default_factory=dict)
    dm: dict = field(default_factory=dict)

    def to_rows(self) -> list[dict]:
        rows = []
        for model, vals in self.losses.items():
            row = {"model": model, **vals}
            for crit in ("MSE", "MAE", "QLIKE"):
                res = self.dm.get((model, crit))
                if res is not None:
                    row[f"{crit}_dm_stat"] = res.stat
                    row[f"{crit}_dm_p"] = res.p_value
                    row[f"{crit}_stars"] = res.stars()
            rows.append(row)
        return rows

    def format(self) -> str:
        models = list(self.losses)
        head = f"{'':<8}" + "".join(f"{m:>22}" for m in models)
        lines = [head]
        for crit in ("MSE", "MAE", "QLIKE"):
            cells = []
            for m in models:
                res = self.dm.get((m, crit))
                mark = res.stars() if res is not None else ""
                cells.append(f"{self.losses[m][crit]:>19.4f}{mark:<3}")
            lines.append(f"{crit:<8}" + "".join(cells))
        return "\n".join(lines)


def loss_table(forecasts: dict[str, np.ndarray], realized, reference: str) -> LossTable:
    """Compare per-entry variance forecasts; DM tests use entry-summed per-time losses."""
    if reference not in forecasts:
        raise KeyError(f"reference model {reference!r} missing")
    table = LossTable(reference)
    series = {k: loss_series(v, realized) for k, v in forecasts.items()}
    for model, f in forecasts.items():
        table.losses[model] = entry_losses(f, realized)
        if model == reference:
            continue
        for crit in ("MSE", "MAE", "QLIKE"):
            a, b = series[model][crit], series[reference][crit]
            if np.all(np.isfinite(a)) and np.all(np.isfinite(b)):
                table.dm[(model, crit)] = dm_test(a, b)
    return table


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------


def _vt_bekk_path(x: np.ndarray, a: np.ndarray, b: np.ndarray, S_bar: np.ndarray):
    """Sigma_t = Cbar + (aa')o(x_{t-1}x_{t-1}') + (bb')o Sigma_{t-1}, Sigma_0 = S_bar.

    Returns the (T+1, d, d) path; entry t is the forecast for x_t and the
    last entry the forecast beyond the sample.
    """
    T, d = x.shape
    aa = np.outer(a, a)
    bb = np.outer(b, b)
    C = (1.0 - aa - bb) * S_bar
    out = np.empty((T + 1, d, d))
    out[0] = S_bar
    for i in range(d):
        for j in range(i, d):
            u = C[i, j] + aa[i, j] * x[:, i] * x[:, j]
            zi = [bb[i, j] * S_bar[i, j]]
            path, _ = signal.lfilter([1.0], [1.0, -bb[i, j]], u, zi=zi)
            out[1:, i, j] = path
            out[1:, j, i] = path
    return out


def _gauss_nll(x: np.ndarray, S: np.ndarray) -> float:
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        return np.inf
    z = np.linalg.solve(L, x[..., None])[..., 0]
    ld = 2.0 * np.sum(np.log(np.diagonal(L, axis1=1, axis2=2)), axis=1)
    return 0.5 * float(np.mean(ld + np.sum(z * z, axis=1)))


@dataclass(frozen=True)
class VTBekk:
    a: np.ndarray
    b: np.ndarray
    S_bar: np.ndarray
    neg_loglik: float
    converged: bool

    def path(self, x: np.ndarray) -> np.ndarray:
        return _vt_bekk_path(np.asarray(x, dtype=float), self.a, self.b, self.S_bar)


def fit_vt_bekk(x, a0: float = 0.3, b0: float = 0.9, max_iter: int = 500) -> VTBekk:
    """Variance-targeted diagonal BEKK(1,1) by Gaussian QMLE on a (T, d) sample.

    L-BFGS-B first; when it stops on an infeasible point (Cbar not positive
    definite) or fails, Nelder-Mead restarts from the best feasible point seen.
    """
    x = np.asarray(x, dtype=float)
    T, d = x.shape
    S_bar = x.T @ x / T
    best = [np.inf, None]

    def obj(v):
        a, b = v[:d], v[d:]
        if np.any(v < 0) or np.any(a * a + b * b >= 0.999):
            return PENALTY
        C = (1.0 - np.outer(a, a) - np.outer(b, b)) * S_bar
        if np.min(np.linalg.eigvalsh(C)) <= 1e-12 * np.trace(S_bar):
            return PENALTY
        val = _gauss_nll(x, _vt_bekk_path(x, a, b, S_bar)[:-1])
        if not np.isfinite(val):
            return PENALTY
        if val < best[0]:
            best[0], best[1] = val, v.copy()
        return val

    v0 = np.r_[np.full(d, a0), np.full(d, b0)]
    res = optimize.minimize(obj, v0, method="L-BFGS-B", bounds=[(0.0, 0.999)] * (2 * d),
                            options={"maxiter": max_iter})
    converged = bool(res.success) and res.fun < PENALTY
    if not converged and best[1] is not None:
        res = optimize.minimize(obj, best[1], method="Nelder-Mead",
                                options={"maxiter": 400 * d, "xatol": 1e-6, "fatol": 1e-10})
        converged = bool(res.success)
    if best[1] is None:
        raise EstimationError("VT-BEKK: no feasible parameter found")
    v = best[1]
    return VTBekk(v[:d].copy(), v[d:].copy(), S_bar, float(best[0]), converged)


def riskmetrics_path(x, lam: float = RISKMETRICS_LAMBDA, init=None) -> np.ndarray:
    """EWMA Sigma_t = (1-lam) x_{t-1}x_{t-1}' + lam Sigma_{t-1}; (T+1, d, d)."""
    x = np.asarray(x, dtype=float)
    T, d = x.shape
    S0 = x.T @ x / T if init is None else np.asarray(init, dtype=float)
    out = np.empty((T + 1, d, d))
    out[0] = S0
    outer = np.einsum("ti,tj->tij", x, x)
    for t in range(T):
        out[t + 1] = (1.0 - lam) * outer[t] + lam * out[t]
    return out


def _block_forecasts(X: np.ndarray, T_train: int, groups: list[np.ndarray], mn: int):
    """Fit a VT-BEKK per index group on the training part and filter through."""
    out = np.zeros((X.shape[0] - T_train, mn, mn))
    for g in groups:
        model = fit_vt_bekk(X[:T_train, g])
        if not model.converged:
            logger.warning("VT-BEKK fit for group %s did not converge", g.tolist())
        path = model.path(X[:, g])[T_train:-1]
        out[:, g[:, None], g[None, :]] = path
    return out


def baseline_forecasts(panel, model: str, T_train: int, lam: float = RISKMETRICS_LAMBDA,
                       multistarts: int = 1) -> np.ndarray:
    """One-step covariance forecasts of vec(X_t) for t = T_train..T-1.

    Parameters are estimated on the first ``T_train`` observations and held
    fixed while filtering through the rest. Output shape (T - T_train, mn, mn)
    with vec taken column by column.
    """
    panel = as_panel(panel)
    if model not in BASELINES:
        raise ValueError(f"unknown baseline {model!r}; choose from {BASELINES}")
    T, (m, n) = panel.T, panel.dims
    if not 1 <= T_train < T:
        raise ValueError("need 1 <= T_train < T")
    mn = m * n
    X = panel.vec()
    H = T - T_train
    if model == "univariate_garch":
        out = np.zeros((H, mn, mn))
        for k in range(mn):
            series = MatrixPanel(X[:, k].reshape(T, 1, 1))
            try:
                res = fit(series[:T_train], multistarts=multistarts, compute_sandwich=False)
                y = filter_path(series, res.theta_hat).y
                out[:, k, k] = y[T_train:]
            except (EstimationError, FloatingPointError) as exc:
                logger.warning("univariate fit for entry %d failed (%s); using sample variance",
                               k, exc)
                out[:, k, k] = np.mean(X[:T_train, k] ** 2)
        return out
    if model == "diag_bekk_vt_full":
        if mn > FULL_BEKK_LIMIT:
            raise ValueError(f"full diagonal BEKK limited to mn <= {FULL_BEKK_LIMIT}")
        return _block_forecasts(X, T_train, [np.arange(mn)], mn)
    if model == "diag_bekk_vt_column":
        # each column of X_t is a block of m consecutive vec entries
        return _block_forecasts(X, T_train, [np.arange(j * m, (j + 1) * m) for j in range(n)], mn)
    if model == "diag_bekk_vt_row":
        return _block_forecasts(X, T_train, [np.arange(i, mn, m) for i in range(m)], mn)
    if model == "riskmetrics":
        S0 = X[:T_train].T @ X[:T_train] / T_train
        return riskmetrics_path(X, lam, init=S0)[T_train:-1]
    S0 = X[:T_train].T @ X[:T_train] / T_train
    return np.broadcast_to(S0, (H, mn, mn)).copy()


def matrix_garch_forecasts(panel, T_train: int, structure: str = "diagonal",
                           multistarts: int = 1, seed: int | None = 0) -> np.ndarray:
    """One-step forecasts V_t (x) U_t from a matrix GARCH fitted on the training part."""
    panel = as_panel(panel)
    res = fit(panel[:T_train], structure=structure, multistarts=multistarts, seed=seed,
              compute_sandwich=False)
    state = filter_path(panel, res.theta_hat)
    return np.stack([np.kron(state.V[t], state.U[t]) for t in range(T_train, panel.T)])


def variance_forecasts(cov_forecasts: np.ndarray, m: int, n: int) -> np.ndarray:
    """Entry variances (H, m, n) from vec covariance forecasts (H, mn, mn)."""
    diag = np.diagonal(cov_forecasts, axis1=1, axis2=2)
    return diag.reshape(-1, n, m).transpose(0, 2, 1)
