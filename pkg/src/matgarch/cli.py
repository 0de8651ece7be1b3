"""Command-line interface: ``matgarch <command> [options]``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import experiments as ex
from .core import Theta
from .diagnose import DEFAULT_LAGS, DiagnosticError, portmanteau_lags
from .estimate import EstimationError, fit
from .evaluate import (BASELINES, baseline_forecasts, loss_table, matrix_garch_forecasts,
                       variance_forecasts)
from .factor import FactorError, fit_factor_garch, sigma_x_forecast
from .io import (PanelFormatError, fit_from_dict, load_config, load_json, load_panel,
                 save_json, save_panel, write_rows)
from .portfolio import ENGINES, PortfolioError, rolling_backtest
from .simulate import InnovationLaw, design_theta, null_theta, power_theta, simulate

logger = logging.getLogger("matgarch")

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

DEFAULTS = {
    "seed": None, "threads": 1, "out_dir": ".", "demean": False, "T": 1000, "burn_in": 500,
    "reps": 200, "law": "normal", "dof": 15.0, "design": "design", "case": 1, "d": 0.0,
    "d_values": [0, 2, 4, 6, 8, 10], "lags": list(DEFAULT_LAGS), "structure": "diagonal",
    "order": [1, 1], "multistarts": 5, "train": None, "test": 100, "periods_per_year": 252,
    "refit_every": 1, "constrained": False, "k1": None, "k2": None, "k_max": None,
    "models": ["matrix_garch", "univariate_garch", "diag_bekk_vt_full",
               "diag_bekk_vt_column", "diag_bekk_vt_row"],
    "engines": ["mf_garch", "riskmetrics", "equal_weights"],
    "fit": None, "theta": None, "input": None,
}
STOCHASTIC = {"simulate", "mc-study", "fit", "factor-fit", "forecast-eval", "backtest"}


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _str_list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master random seed (required for stochastic commands)")
    common.add_argument("--threads", type=int, help="worker processes for Monte Carlo studies")
    common.add_argument("--out-dir", dest="out_dir", help="directory for result files")
    common.add_argument("--config", help="JSON config; command-line flags take precedence")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="matgarch", description="Matrix GARCH toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def data_args(sp):
        sp.add_argument("--input", help="long CSV with header time,row,col,value")
        sp.add_argument("--demean", action="store_true", default=None)

    def model_args(sp):
        sp.add_argument("--structure", choices=["diagonal", "full"])
        sp.add_argument("--order", type=_int_list, help="lag order, e.g. 1,1")
        sp.add_argument("--multistarts", type=int)

    s = sub.add_parser("simulate", parents=[common], help="simulate a matrix GARCH panel")
    s.add_argument("--design", choices=["design", "null", "power"])
    s.add_argument("--theta", help="JSON parameter file (overrides --design)")
    s.add_argument("--T", type=int)
    s.add_argument("--burn-in", dest="burn_in", type=int)
    s.add_argument("--law", choices=["normal", "t"])
    s.add_argument("--dof", type=float)
    s.add_argument("--case", type=int, choices=[1, 2])
    s.add_argument("--d", type=float)

    s = sub.add_parser("fit", parents=[common], help="quasi maximum likelihood fit")
    data_args(s)
    model_args(s)

    s = sub.add_parser("diagnose", parents=[common], help="portmanteau tests on a fitted model")
    data_args(s)
    s.add_argument("--fit", help="fit.json written by the fit command")
    s.add_argument("--lags", type=_int_list)

    s = sub.add_parser("forecast-eval", parents=[common], help="out-of-sample volatility losses")
    data_args(s)
    model_args(s)
    s.add_argument("--train", type=int)
    s.add_argument("--models", type=_str_list)

    s = sub.add_parser("factor-fit", parents=[common], help="matrix factor GARCH fit")
    data_args(s)
    model_args(s)
    s.add_argument("--k1", type=int)
    s.add_argument("--k2", type=int)
    s.add_argument("--k-max", dest="k_max", type=int)

    s = sub.add_parser("backtest", parents=[common], help="rolling minimum-variance backtest")
    data_args(s)
    s.add_argument("--engines", type=_str_list)
    s.add_argument("--train", type=int)
    s.add_argument("--test", type=int)
    s.add_argument("--constrained", action="store_true", default=None)
    s.add_argument("--periods-per-year", dest="periods_per_year", type=int)
    s.add_argument("--refit-every", dest="refit_every", type=int)
    s.add_argument("--k1", type=int)
    s.add_argument("--k2", type=int)

    s = sub.add_parser("mc-study", parents=[common], help="Monte Carlo studies")
    s.add_argument("--design", choices=["table1", "table2", "table3", "power", "factor",
                                        "forecast", "backtest"])
    s.add_argument("--reps", type=int)
    s.add_argument("--T", type=int)
    s.add_argument("--case", type=int, choices=[1, 2])
    s.add_argument("--d-values", dest="d_values", type=_float_list)
    s.add_argument("--lags", type=_int_list)
    s.add_argument("--multistarts", type=int)
    s.add_argument("--refit-every", dest="refit_every", type=int)
    return p


def _resolve(args: argparse.Namespace) -> dict:
    opts = {k: v for k, v in vars(args).items() if v is not None}
    if args.config:
        cfg = load_config(args.config)
        for k, v in cfg.items():
            opts.setdefault(k, v)
    opts["_explicit"] = set(opts)
    for k, v in DEFAULTS.items():
        opts.setdefault(k, v)
    if opts["command"] in STOCHASTIC and opts["seed"] is None:
        raise ValueError(f"--seed is required for {opts['command']}")
    if opts["seed"] is None:
        opts["seed"] = 0
    return opts


def _out(opts, name) -> Path:
    d = Path(opts["out_dir"])
    d.mkdir(parents=True, exist_ok=True)
    return d / name


def _panel(opts):
    if not opts.get("input"):
        raise ValueError("--input is required")
    return load_panel(opts["input"], demean=opts["demean"])


def cmd_simulate(o):
    if o["theta"]:
        theta = Theta.from_dict(load_json(o["theta"]))
    elif o["design"] == "power":
        theta = power_theta(o["d"], o["case"])
    elif o["design"] == "null":
        theta = null_theta()
    else:
        theta = design_theta()
    law = (InnovationLaw.normal(theta.m, theta.n) if o["law"] == "normal"
           else InnovationLaw.t(theta.m, theta.n, o["dof"]))
    panel = simulate(theta, o["T"], burn_in=o["burn_in"], law=law, seed=o["seed"])
    save_panel(panel, _out(o, "panel.csv"))
    save_json(theta.to_dict(), _out(o, "theta.json"))
    print(f"simulated T={panel.T} panel of {panel.m}x{panel.n} matrices -> {_out(o, 'panel.csv')}")


def cmd_fit(o):
    panel = _panel(o)
    res = fit(panel, structure=o["structure"], order=tuple(o["order"]),
              multistarts=o["multistarts"], seed=o["seed"])
    save_json(res.to_dict(), _out(o, "fit.json"))
    write_rows([{"param": n, "estimate": float(e), "std_error": float(s)}
                for n, e, s in zip(res.param_names, res.params, res.std_errors)],
               _out(o, "estimates.csv"))
    print(res.summary())
    if not res.converged:
        logger.warning("optimizer did not report convergence")


def cmd_diagnose(o):
    panel = _panel(o)
    if o["fit"]:
        res = fit_from_dict(load_json(o["fit"]))
    else:
        res = fit(panel, multistarts=o["multistarts"], seed=o["seed"])
    reports = portmanteau_lags(panel, res, tuple(o["lags"]))
    rows = [{"L": L, "Q": r.Q, "p_value": r.p_value} for L, r in reports.items()]
    write_rows(rows, _out(o, "diagnostics.csv"))
    save_json({L: r.to_dict() for L, r in reports.items()}, _out(o, "diagnostics.json"))
    for r in rows:
        print(f"Q_T({r['L']}) = {r['Q']:.3f}   p-value = {r['p_value']:.3f}")


def cmd_forecast_eval(o):
    panel = _panel(o)
    train = o["train"] or int(round(0.9 * panel.T))
    realized = panel.data[train:]
    forecasts = {}
    for model in o["models"]:
        if model == "matrix_garch":
            cov = matrix_garch_forecasts(panel, train, o["structure"], o["multistarts"], o["seed"])
        elif model in BASELINES:
            if model == "diag_bekk_vt_full" and panel.m * panel.n > 16:
                logger.warning("skipping diag_bekk_vt_full for mn > 16")
                continue
            cov = baseline_forecasts(panel, model, train)
        else:
            raise ValueError(f"unknown model {model!r}")
        forecasts[model] = variance_forecasts(cov, panel.m, panel.n)
    ref = "matrix_garch" if "matrix_garch" in forecasts else next(iter(forecasts))
    table = loss_table(forecasts, realized, ref)
    write_rows(table.to_rows(), _out(o, "losses.csv"))
    print(table.format())


def cmd_factor_fit(o):
    panel = _panel(o)
    ff = fit_factor_garch(panel, o["k1"], o["k2"], o["k_max"], structure=o["structure"],
                          order=tuple(o["order"]), multistarts=o["multistarts"], seed=o["seed"])
    save_json({"k1": ff.k1, "k2": ff.k2, "R_load": ff.R_load, "C_load": ff.C_load,
               "sigma_e_diagonal": ff.sigma_e_diagonal, "garch": ff.garch.to_dict()},
              _out(o, "factor_fit.json"))
    save_panel(ff.factors, _out(o, "factors.csv"))
    S = sigma_x_forecast(ff)
    np.savetxt(_out(o, "sigma_x_forecast.csv"), S, delimiter=",", fmt="%.17g")
    print(f"selected (k1, k2) = ({ff.k1}, {ff.k2})")
    print(ff.garch.summary())


def cmd_backtest(o):
    panel = _panel(o)
    train = o["train"] or panel.T - o["test"]
    rows, cum = [], {}
    for engine in o["engines"]:
        if engine not in ENGINES:
            raise ValueError(f"unknown engine {engine!r}; choose from {ENGINES}")
        for constrained in ((False, True) if not o["constrained"] else (True,)):
            r = rolling_backtest(panel, engine, train, o["test"], constrained=constrained,
                                 periods_per_year=o["periods_per_year"],
                                 refit_every=o["refit_every"], k1=o["k1"] or 3, k2=o["k2"] or 3)
            tag = f"{engine}_{'constrained' if constrained else 'unconstrained'}"
            rows.append({"engine": engine, "constrained": constrained, "AV": r.AV, "SD": r.SD,
                         "IR": r.IR, "failed_windows": len(r.failed_windows)})
            cum[tag] = r.cumulative
    write_rows(rows, _out(o, "metrics.csv"))
    labels = panel.time_labels[-o["test"]:] if panel.time_labels else range(o["test"])
    write_rows([{"time": lab, **{k: float(v[i]) for k, v in cum.items()}}
                for i, lab in enumerate(labels)], _out(o, "cumulative_returns.csv"))
    for r in rows:
        kind = "constrained" if r["constrained"] else "unconstrained"
        print(f"{r['engine']:<14}{kind:<15}AV={r['AV']:9.3f}  SD={r['SD']:9.3f}  IR={r['IR']:7.3f}")


def cmd_mc_study(o):
    design = o["design"] if o["design"] != "design" else "table1"
    w, seed, reps = o["threads"], o["seed"], o["reps"]
    if design in ("table1", "table2", "table3"):
        theta = design_theta()
        law = {"table1": InnovationLaw.normal(3, 3), "table2": InnovationLaw.t(3, 3, 15),
               "table3": InnovationLaw.t(3, 3, 25)}[design]
        # single start per replication unless asked otherwise
        ms = o["multistarts"] if "multistarts" in o["_explicit"] else 1
        st = ex.estimation_study(theta, o["T"], reps, law, seed, multistarts=ms, workers=w)
        write_rows(st.rows(), _out(o, f"{design}_T{o['T']}.csv"))
        print(f"T = {o['T']}, {reps - st.failures} successful replications")
        print(st.format())
    elif design == "power":
        st = ex.power_study(o["d_values"], o["case"], o["T"], reps, tuple(o["lags"]),
                            seed=seed, workers=w)
        write_rows(st.rows(), _out(o, f"power_case{o['case']}_T{o['T']}.csv"))
        for d in st.d_values:
            cells = "  ".join(f"L={L}: {r:.3f}" for L, r in st.rejections[d].items())
            print(f"d={d:g}  {cells}")
    elif design == "factor":
        st = ex.factor_study(reps, seed=seed, workers=w)
        write_rows([{"T": T, "mean_subspace_distance": float(d)}
                    for T, d in zip(st.T_values, st.mean_distance)], _out(o, "factor_study.csv"))
        print(f"eigenvalue ratio selects (3,3) in {st.hit_rate:.1%} of replications")
        for T, d in zip(st.T_values, st.mean_distance):
            print(f"T={T}: mean subspace distance {d:.4f}")
    elif design == "forecast":
        st = ex.forecast_study(reps, seed=seed, workers=w)
        rows = [{"model": m, **{c: st.mean(m, c) for c in ("MSE", "MAE", "QLIKE")}}
                for m in st.models]
        write_rows(rows, _out(o, "forecast_study.csv"))
        for r in rows:
            print(f"{r['model']:<22}MSE={r['MSE']:.4f}  MAE={r['MAE']:.4f}  QLIKE={r['QLIKE']:.4f}")
    elif design == "backtest":
        st = ex.backtest_study(reps, refit_every=o["refit_every"], seed=seed, workers=w)
        write_rows([{"rep": i, "SD_mf_garch": float(a), "SD_equal": float(b)}
                    for i, (a, b) in enumerate(zip(st.sd_mf, st.sd_equal))],
                   _out(o, "backtest_study.csv"))
        print(f"MF-GARCH SD <= equal-weights SD in {st.win_rate:.1%} of replications")


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "diagnose": cmd_diagnose,
            "forecast-eval": cmd_forecast_eval, "factor-fit": cmd_factor_fit,
            "backtest": cmd_backtest, "mc-study": cmd_mc_study}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = _resolve(args)
    except (ValueError, FileNotFoundError, jsonschema.ValidationError) as exc:
        print(f"config error: {getattr(exc, 'message', exc)}", file=sys.stderr)
        return EXIT_CONFIG
    if opts["threads"] > 1:
        os.environ.setdefault("OMP_NUM_THREADS", "1")
    try:
        COMMANDS[opts["command"]](opts)
    except (PanelFormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (EstimationError, DiagnosticError, FactorError, PortfolioError,
            FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
