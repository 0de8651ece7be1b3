"""Monte Carlo studies: estimation tables, portmanteau size/power, factor
recovery, forecast comparison and portfolio backtests.

Every study takes a master seed; replication r uses the r-th child of
``numpy.random.SeedSequence(seed)``, so results do not depend on the number
of workers.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .core import Theta
from .diagnose import DiagnosticError, portmanteau_lags
from .estimate import EstimationError, fit
from .evaluate import baseline_forecasts, entry_losses, matrix_garch_forecasts, variance_forecasts
from .factor import (eigenvalue_ratio, estimate_loadings, random_loading, simulate_factor_panel,
                     subspace_distance)
from .portfolio import rolling_backtest
from .simulate import InnovationLaw, design_theta, power_theta, simulate

logger = logging.getLogger(__name__)


def child_seeds(seed: int, reps: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(reps)


def run_replications(func, seed: int, reps: int, workers: int = 1) -> list:
    seeds = child_seeds(seed, reps)
    if workers <= 1:
        return [func(s) for s in seeds]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(func, seeds, chunksize=max(1, reps // (4 * workers))))


# ---------------------------------------------------------------------------
# Estimation tables
# ---------------------------------------------------------------------------


@dataclass
class EstimationStudy:
    names: list
    truth: np.ndarray
    estimates: np.ndarray     # (reps, p)
    std_errors: np.ndarray    # (reps, p)
    failures: int = 0

    @property
    def bias(self) -> np.ndarray:
        return np.mean(self.estimates, axis=0) - self.truth

    @property
    def se(self) -> np.ndarray:
        """Sample root mean squared error over replications."""
        return np.sqrt(np.mean((self.estimates - self.truth) ** 2, axis=0))

    @property
    def sd(self) -> np.ndarray:
        return np.std(self.estimates, axis=0, ddof=1)

    @property
    def ae(self) -> np.ndarray:
        """Average asymptotic standard error."""
        return np.nanmean(self.std_errors, axis=0)

    def coverage(self, z: float = 1.959964) -> np.ndarray:
        hit = np.abs(self.estimates - self.truth) <= z * self.std_errors
        return np.mean(hit, axis=0)

    def rows(self) -> list[dict]:
        return [{"param": n, "truth": float(t), "bias": float(b), "SE": float(s), "AE": float(a)}
                for n, t, b, s, a in zip(self.names, self.truth, self.bias, self.se, self.ae)]

    def format(self) -> str:
        width = max(len(n) for n in self.names) + 2
        lines = [" " * 6 + "".join(f"{n:>{width}}" for n in self.names)]
        for label, vals in (("Bias", self.bias), ("SE", self.se), ("AE", self.ae)):
            lines.append(f"{label:<6}" + "".join(f"{v:>{width}.3f}" for v in vals))
        return "\n".join(lines)


def _estimation_rep(ss, theta: Theta, T: int, law: InnovationLaw, burn_in: int,
                    multistarts: int):
    panel = simulate(theta, T, burn_in=burn_in, law=law, seed=ss)
    try:
        res = fit(panel, structure=theta.structure, order=theta.order,
                  multistarts=multistarts, seed=int(ss.generate_state(1)[0]))
    except (EstimationError, FloatingPointError, np.linalg.LinAlgError) as exc:
        logger.warning("replication failed: %s", exc)
        return None
    return res.params, res.std_errors


def estimation_study(theta: Theta | None = None, T: int = 2000, reps: int = 200,
                     law: InnovationLaw | None = None, seed: int = 0, burn_in: int = 500,
                     multistarts: int = 1, workers: int = 1) -> EstimationStudy:
    """Bias, root mean squared error and average asymptotic standard error of the QMLE."""
    theta = design_theta() if theta is None else theta
    law = InnovationLaw.normal(theta.m, theta.n) if law is None else law
    func = partial(_estimation_rep, theta=theta, T=T, law=law, burn_in=burn_in,
                   multistarts=multistarts)
    out = run_replications(func, seed, reps, workers)
    ok = [o for o in out if o is not None]
    if not ok:
        raise EstimationError("every replication failed")
    est = np.array([o[0] for o in ok])
    se = np.array([o[1] for o in ok])
    return EstimationStudy(theta.layout.names(), theta.to_vector(), est, se, reps - len(ok))


# ---------------------------------------------------------------------------
# Portmanteau size and power
# ---------------------------------------------------------------------------


@dataclass
class PowerStudy:
    lags: tuple
    d_values: list
    case: int
    T: int
    rejections: dict = field(default_factory=dict)   # d -> {L: rate}
    p_values: dict = field(default_factory=dict)     # d -> (reps, len(lags))
    failures: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        return [{"case": self.case, "T": self.T, "d": d, "L": L, "rejection_rate": r}
                for d in self.d_values for L, r in self.rejections[d].items()]


def _power_rep(ss, theta_true: Theta, T: int, lags, burn_in: int, leading_term: str):
    panel = simulate(theta_true, T, burn_in=burn_in, seed=ss)
    try:
        res = fit(panel, structure="diagonal", order=(1, 1), multistarts=1)
        reps = portmanteau_lags(panel, res, lags, leading_term=leading_term)
    except (EstimationError, DiagnosticError, FloatingPointError, np.linalg.LinAlgError) as exc:
        logger.warning("replication failed: %s", exc)
        return None
    return [reps[L].p_value for L in lags]


def power_study(d_values=(0,), case: int = 1, T: int = 4000, reps: int = 500,
                lags=(2, 4, 6, 8), level: float = 0.05, seed: int = 0, burn_in: int = 500,
                leading_term: str = "eta", workers: int = 1) -> PowerStudy:
    """Rejection rates of Q_T(L) when a first-order model is fitted to data
    from the second-order design indexed by d (d = 0 is the null)."""
    lags = tuple(lags)
    study = PowerStudy(lags, list(d_values), case, T)
    for i, d in enumerate(d_values):
        func = partial(_power_rep, theta_true=power_theta(d, case), T=T, lags=lags,
                       burn_in=burn_in, leading_term=leading_term)
        out = run_replications(func, seed + 7919 * i, reps, workers)
        p = np.array([o for o in out if o is not None])
        study.p_values[d] = p
        study.failures[d] = reps - len(p)
        study.rejections[d] = {L: float(np.mean(p[:, j] < level)) for j, L in enumerate(lags)}
    return study


# ---------------------------------------------------------------------------
# Factor recovery
# ---------------------------------------------------------------------------


def factor_design_theta(scale: float = 20.0) -> Theta:
    """3x3 factor GARCH with identity intercept factors and E y_t = 10 scale."""
    I = np.eye(3)
    return Theta.build(scale, 0.3, 0.6, I, 0.3 * I, 0.6 * I, I, 0.3 * I, 0.6 * I)


def _factor_data(ss, m, n, T, theta_f):
    rng = np.random.default_rng(ss)
    R = random_loading(m, 3, rng)
    C = random_loading(n, 3, rng)
    noise = rng.uniform(0.5, 1.5, (m, n))
    X, _ = simulate_factor_panel(R, C, theta_f, T, noise_sd=noise, seed=rng.integers(2**63))
    return X, R, C


def _factor_rep(ss, m, n, T_values, k_max, theta_f):
    X, R, C = _factor_data(ss, m, n, max(T_values), theta_f)
    sel = eigenvalue_ratio(X, k_max)
    dist = []
    for T in T_values:
        Rh, Ch = estimate_loadings(X[:T], 3, 3)
        dist.append(subspace_distance(Rh, R) + subspace_distance(Ch, C))
    return sel, dist


@dataclass
class FactorStudy:
    T_values: tuple
    selections: list
    distances: np.ndarray    # (reps, len(T_values))

    @property
    def hit_rate(self) -> float:
        return float(np.mean([s == (3, 3) for s in self.selections]))

    @property
    def mean_distance(self) -> np.ndarray:
        return self.distances.mean(axis=0)


def factor_study(reps: int = 100, m: int = 10, n: int = 10, T_values=(300, 600, 1200),
                 k_max: int = 5, seed: int = 0, workers: int = 1) -> FactorStudy:
    """Eigenvalue-ratio selection (on the longest sample) and loading subspace
    distances on nested samples of increasing length."""
    func = partial(_factor_rep, m=m, n=n, T_values=tuple(T_values), k_max=k_max,
                   theta_f=factor_design_theta())
    out = run_replications(func, seed, reps, workers)
    return FactorStudy(tuple(T_values), [o[0] for o in out], np.array([o[1] for o in out]))


# ---------------------------------------------------------------------------
# Forecast comparison and backtests
# ---------------------------------------------------------------------------

FORECAST_MODELS = ("matrix_garch", "univariate_garch", "diag_bekk_vt_row", "diag_bekk_vt_column")


def _forecast_rep(ss, theta, T_train, T_test, models):
    panel = simulate(theta, T_train + T_test, seed=ss)
    realized = panel.data[T_train:]
    out = {}
    for model in models:
        try:
            if model == "matrix_garch":
                cov = matrix_garch_forecasts(panel, T_train)
            else:
                cov = baseline_forecasts(panel, model, T_train)
        except (EstimationError, FloatingPointError, np.linalg.LinAlgError) as exc:
            logger.warning("%s failed: %s", model, exc)
            return None
        out[model] = entry_losses(variance_forecasts(cov, panel.m, panel.n), realized)
    return out


@dataclass
class ForecastStudy:
    models: tuple
    losses: list    # per replication: {model: {criterion: value}}

    def mean(self, model: str, criterion: str = "MSE") -> float:
        return float(np.mean([rep[model][criterion] for rep in self.losses]))

    def win_rate(self, model: str, against: str, criterion: str = "MSE") -> float:
        return float(np.mean([rep[model][criterion] <= rep[against][criterion]
                              for rep in self.losses]))


def forecast_study(reps: int = 50, T_train: int = 900, T_test: int = 100,
                   models=FORECAST_MODELS, seed: int = 0, theta: Theta | None = None,
                   workers: int = 1) -> ForecastStudy:
    theta = design_theta() if theta is None else theta
    func = partial(_forecast_rep, theta=theta, T_train=T_train, T_test=T_test,
                   models=tuple(models))
    out = [o for o in run_replications(func, seed, reps, workers) if o is not None]
    return ForecastStudy(tuple(models), out)


def _backtest_rep(ss, m, n, T_train, T_test, refit_every, constrained, theta_f):
    X, _, _ = _factor_data(ss, m, n, T_train + T_test, theta_f)
    mf = rolling_backtest(X, "mf_garch", T_train, T_test, constrained=constrained,
                          refit_every=refit_every)
    eq = rolling_backtest(X, "equal_weights", T_train, T_test, constrained=constrained)
    return mf.SD, eq.SD, len(mf.failed_windows)


@dataclass
class BacktestStudy:
    sd_mf: np.ndarray
    sd_equal: np.ndarray
    failed_windows: np.ndarray

    @property
    def win_rate(self) -> float:
        return float(np.mean(self.sd_mf <= self.sd_equal))


def backtest_study(reps: int = 50, m: int = 10, n: int = 10, T_train: int = 600,
                   T_test: int = 100, refit_every: int = 20, constrained: bool = False,
                   seed: int = 0, workers: int = 1) -> BacktestStudy:
    """Annualised SD of MF-GARCH minimum-variance portfolios against equal weights."""
    func = partial(_backtest_rep, m=m, n=n, T_train=T_train, T_test=T_test,
                   refit_every=refit_every, constrained=constrained,
                   theta_f=factor_design_theta())
    out = np.array(run_replications(func, seed, reps, workers))
    return BacktestStudy(out[:, 0], out[:, 1], out[:, 2])
