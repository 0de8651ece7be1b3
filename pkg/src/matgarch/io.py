"""Long-format CSV panels, JSON results and config validation."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import jsonschema
import numpy as np

from .core import MatrixPanel, Theta
from .estimate import FitResult

HEADER = ("time", "row", "col", "value")


class PanelFormatError(ValueError):
    pass


def save_panel(panel: MatrixPanel, path) -> None:
    """Write ``time,row,col,value`` rows (0-based row/col) at full precision."""
    labels = panel.time_labels if panel.time_labels is not None else range(panel.T)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HEADER)
        for t, lab in enumerate(labels):
            for i in range(panel.m):
                for j in range(panel.n):
                    w.writerow((lab, i, j, repr(float(panel.data[t, i, j]))))


def _sort_key(label: str):
    try:
        return (0, float(label), label)
    except ValueError:
        return (1, 0.0, label)


def load_panel(path, demean: bool = False) -> MatrixPanel:
    """Read a long CSV into a panel; every time must carry the full m x n grid."""
    cells: dict[tuple[str, int, int], float] = {}
    rows, cols, times = set(), set(), {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip().lower() for h in header) != HEADER:
            raise PanelFormatError(f"{path}: header must be {','.join(HEADER)}, got {header}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 4:
                raise PanelFormatError(f"line {lineno}: expected 4 fields, got {len(rec)}")
            t = rec[0].strip()
            try:
                i, j = int(rec[1]), int(rec[2])
            except ValueError:
                raise PanelFormatError(f"line {lineno}: row/col must be integers") from None
            try:
                v = float(rec[3])
            except ValueError:
                raise PanelFormatError(f"line {lineno}: non-numeric value {rec[3]!r}") from None
            if not np.isfinite(v):
                raise PanelFormatError(f"line {lineno}: non-finite value {rec[3]!r}")
            key = (t, i, j)
            if key in cells:
                raise PanelFormatError(f"line {lineno}: duplicate cell time={t} row={i} col={j}")
            cells[key] = v
            rows.add(i)
            cols.add(j)
            times.setdefault(t, lineno)
    if not cells:
        raise PanelFormatError(f"{path}: no data rows")
    m, n = max(rows) + 1, max(cols) + 1
    if rows != set(range(m)) or cols != set(range(n)):
        raise PanelFormatError("row and column indices must be 0-based and contiguous")
    order = sorted(times, key=_sort_key)
    X = np.empty((len(order), m, n))
    for k, t in enumerate(order):
        for i in range(m):
            for j in range(n):
                try:
                    X[k, i, j] = cells[(t, i, j)]
                except KeyError:
                    raise PanelFormatError(f"missing cell time={t} row={i} col={j}") from None
    panel = MatrixPanel(X, tuple(order))
    return panel.demeaned() if demean else panel


def save_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def fit_from_dict(d: dict) -> FitResult:
    """Rebuild a FitResult saved with ``FitResult.to_dict``."""
    theta = Theta.from_dict(d["theta"])
    p = theta.layout.p

    def mat(key):
        return np.array(d.get(key, np.full((p, p), np.nan)), dtype=float)

    se = np.array([np.nan if s is None else s for s in d["std_errors"]], dtype=float)
    C0, C1, avar = mat("C0_hat"), mat("C1_hat"), mat("avar")
    inert = theta.layout.inert_mask()
    for M in (C0, C1, avar):
        M[inert, :] = np.nan
        M[:, inert] = np.nan
    return FitResult(theta_hat=theta, neg_loglik=d["neg_loglik"], C0_hat=C0, C1_hat=C1,
                     avar=avar, std_errors=se,
                     converged=d["converged"], iterations=d["iterations"],
                     multistart_best_of=d["multistart_best_of"], grad_norm=d.get("grad_norm", np.nan),
                     at_boundary=d.get("at_boundary", False), stationary=d.get("stationary", True),
                     nobs=d.get("nobs", 0), param_names=d["param_names"])


def write_rows(rows: list[dict], path) -> None:
    if not rows:
        Path(path).write_text("")
        return
    keys = list(rows[0])
    for r in rows[1:]:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "threads": {"type": "integer", "minimum": 1},
        "out_dir": {"type": "string"},
        "input": {"type": "string"},
        "demean": {"type": "boolean"},
        "T": {"type": "integer", "minimum": 2},
        "burn_in": {"type": "integer", "minimum": 0},
        "reps": {"type": "integer", "minimum": 1},
        "law": {"enum": ["normal", "t"]},
        "dof": {"type": "number", "exclusiveMinimum": 2},
        "design": {"enum": ["table1", "table2", "table3", "power", "factor", "forecast",
                            "backtest", "design", "null"]},
        "case": {"enum": [1, 2]},
        "d": {"type": "number", "minimum": 0},
        "d_values": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "lags": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "structure": {"enum": ["diagonal", "full"]},
        "order": {"type": "array", "items": {"enum": [1, 2]}, "minItems": 2, "maxItems": 2},
        "multistarts": {"type": "integer", "minimum": 1},
        "train": {"type": "integer", "minimum": 2},
        "test": {"type": "integer", "minimum": 1},
        "periods_per_year": {"type": "integer", "minimum": 1},
        "refit_every": {"type": "integer", "minimum": 1},
        "constrained": {"type": "boolean"},
        "k1": {"type": "integer", "minimum": 1},
        "k2": {"type": "integer", "minimum": 1},
        "k_max": {"type": "integer", "minimum": 1},
        "models": {"type": "array", "items": {"type": "string"}},
        "engines": {"type": "array", "items": {"type": "string"}},
        "fit": {"type": "string"},
        "theta": {"type": "string"},
    },
    "additionalProperties": False,
}


def load_config(path) -> dict:
    """Load and validate a JSON config; referenced files must exist."""
    cfg = load_json(path)
    jsonschema.validate(cfg, CONFIG_SCHEMA)
    for key in ("input", "fit", "theta"):
        if key in cfg and not Path(cfg[key]).exists():
            raise FileNotFoundError(f"config {key!r} points to missing file {cfg[key]}")
    return cfg
