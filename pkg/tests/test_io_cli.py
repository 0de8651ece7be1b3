import json

import numpy as np
import pytest

from matgarch.cli import EXIT_CONFIG, EXIT_DATA, main
from matgarch.core import MatrixPanel
from matgarch.estimate import fit
from matgarch.io import PanelFormatError, fit_from_dict, load_config, load_panel, save_panel
from matgarch.simulate import design_theta, simulate


def write(path, text):
    path.write_text(text)
    return path


def test_panel_roundtrip(tmp_path):
    X = np.random.default_rng(0).standard_normal((5, 2, 3))
    p = MatrixPanel(X, tuple(f"2020-01-0{i + 1}" for i in range(5)))
    save_panel(p, tmp_path / "x.csv")
    back = load_panel(tmp_path / "x.csv")
    np.testing.assert_array_equal(back.data, X)
    assert back.time_labels == p.time_labels


def test_numeric_time_labels_sort_numerically(tmp_path):
    rows = ["time,row,col,value"] + [f"{t},0,0,{t}" for t in (10, 9, 2)]
    back = load_panel(write(tmp_path / "x.csv", "\n".join(rows)))
    np.testing.assert_array_equal(back.data.ravel(), [2, 9, 10])


@pytest.mark.parametrize("body,match", [
    ("0,0,0,1\n0,0,0,2\n", "duplicate"),
    ("0,0,0,abc\n", "non-numeric"),
    ("0,0,0,1\n0,0,1,1\n1,0,0,1\n", "missing cell"),
    ("0,1,0,1\n", "contiguous"),
    ("0,0,0\n", "4 fields"),
])
def test_panel_errors(tmp_path, body, match):
    with pytest.raises(PanelFormatError, match=match):
        load_panel(write(tmp_path / "x.csv", "time,row,col,value\n" + body))


def test_bad_header(tmp_path):
    with pytest.raises(PanelFormatError, match="header"):
        load_panel(write(tmp_path / "x.csv", "t,i,j,v\n0,0,0,1\n"))


def test_fit_dict_roundtrip():
    panel = simulate(design_theta(), 600, seed=1)
    res = fit(panel, multistarts=1)
    back = fit_from_dict(json.loads(json.dumps(res.to_dict())))
    np.testing.assert_array_equal(back.params, res.params)
    np.testing.assert_allclose(back.C0_hat, res.C0_hat)
    np.testing.assert_allclose(back.std_errors, res.std_errors)


def test_config_validation(tmp_path):
    good = write(tmp_path / "c.json", json.dumps({"seed": 1, "T": 100}))
    assert load_config(good)["T"] == 100
    from jsonschema import ValidationError
    with pytest.raises(ValidationError):
        load_config(write(tmp_path / "b.json", json.dumps({"seed": 1, "bogus": 2})))
    with pytest.raises(FileNotFoundError):
        load_config(write(tmp_path / "m.json", json.dumps({"input": str(tmp_path / "none.csv")})))


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["simulate", "--T", "10", "--out-dir", str(tmp_path)]) == EXIT_CONFIG
    assert "seed" in capsys.readouterr().err
    bad = write(tmp_path / "c.json", json.dumps({"nope": 1}))
    assert main(["simulate", "--seed", "1", "--config", str(bad)]) == EXIT_CONFIG
    broken = write(tmp_path / "x.csv", "time,row,col,value\n0,0,0,zz\n")
    assert main(["fit", "--seed", "1", "--input", str(broken), "--out-dir", str(tmp_path)]) == EXIT_DATA


def test_cli_pipeline(tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", "--seed", "3", "--T", "700", "--out-dir", str(out)]) == 0
    panel = out / "panel.csv"
    assert main(["fit", "--seed", "3", "--input", str(panel), "--multistarts", "1",
                 "--out-dir", str(out)]) == 0
    assert (out / "estimates.csv").read_text().startswith("param,estimate,std_error")
    assert main(["diagnose", "--input", str(panel), "--fit", str(out / "fit.json"),
                 "--lags", "2,4", "--out-dir", str(out)]) == 0
    diag = json.loads((out / "diagnostics.json").read_text())
    assert set(diag) == {"2", "4"}
    assert main(["forecast-eval", "--seed", "3", "--input", str(panel), "--train", "600",
                 "--models", "matrix_garch,univariate_garch,diag_bekk_vt_row",
                 "--multistarts", "1", "--out-dir", str(out)]) == 0
    assert "matrix_garch" in (out / "losses.csv").read_text()


def test_cli_config_precedence(tmp_path):
    cfg = write(tmp_path / "c.json", json.dumps({"seed": 1, "T": 30, "burn_in": 10}))
    assert main(["simulate", "--config", str(cfg), "--T", "20", "--out-dir", str(tmp_path)]) == 0
    assert load_panel(tmp_path / "panel.csv").T == 20


def test_cli_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["simulate", "--seed", "9", "--T", "400", "--out-dir", str(tmp_path / name)]) == 0
        assert main(["fit", "--seed", "9", "--input", str(tmp_path / name / "panel.csv"),
                     "--multistarts", "2", "--out-dir", str(tmp_path / name)]) == 0
    for f in ("panel.csv", "fit.json", "estimates.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_cli_factor_and_backtest(tmp_path):
    from matgarch.experiments import factor_design_theta
    from matgarch.factor import random_loading, simulate_factor_panel
    rng = np.random.default_rng(2)
    X, _ = simulate_factor_panel(random_loading(5, 3, rng), random_loading(4, 3, rng),
                                 factor_design_theta(), 320, noise_sd=0.5, seed=4)
    save_panel(X, tmp_path / "x.csv")
    assert main(["factor-fit", "--seed", "1", "--input", str(tmp_path / "x.csv"), "--k1", "3",
                 "--k2", "3", "--multistarts", "1", "--out-dir", str(tmp_path)]) == 0
    S = np.loadtxt(tmp_path / "sigma_x_forecast.csv", delimiter=",")
    assert S.shape == (20, 20)
    assert main(["backtest", "--seed", "1", "--input", str(tmp_path / "x.csv"), "--test", "20",
                 "--engines", "mf_garch,equal_weights", "--refit-every", "10",
                 "--out-dir", str(tmp_path)]) == 0
    lines = (tmp_path / "metrics.csv").read_text().splitlines()
    assert len(lines) == 5
    assert len((tmp_path / "cumulative_returns.csv").read_text().splitlines()) == 21


def test_cli_mc_study_small(tmp_path, capsys):
    assert main(["mc-study", "--seed", "1", "--design", "factor", "--reps", "2",
                 "--out-dir", str(tmp_path)]) == 0
    assert "eigenvalue ratio" in capsys.readouterr().out
