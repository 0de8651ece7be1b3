"""Matrix GARCH toolkit."""

from ._backend import BACKEND
from .core import (DimensionError, MatrixPanel, ParamLayout, SideParams, StatePath, Theta,
                   TraceParams, conditional_col_cov, conditional_row_cov, filter_path,
                   forecast_state, n_params, pack, sigma, unpack)
from .diagnose import DiagnosticReport, omega_hat, portmanteau, residual_autocorr, residuals
from .estimate import FitResult, fit, gradient, neg_loglik, sandwich
from .evaluate import baseline_forecasts, dm_test, entry_losses
from .factor import (FactorFit, eigenvalue_ratio, estimate_loadings, extract_factors,
                     fit_factor_garch, sigma_x_forecast, varimax)
from .portfolio import BacktestResult, mvp_constrained, mvp_unconstrained, rolling_backtest
from .simulate import InnovationLaw, draw_innovation, simulate

__version__ = "0.1.0"
