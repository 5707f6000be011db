import csv
import json

import numpy as np
import pytest

from specdeconf.cli import main
from specdeconf.diagnostics import singular_values
from specdeconf.hdam import FittedHDAM, predict
from specdeconf.simgen import SimConfig, gen_dataset


def write_config(path, **kw):
    path.write_text(json.dumps(kw))
    return str(path)


@pytest.fixture
def sim_dir(tmp_path):
    cfg = write_config(tmp_path / "cfg.json", n=60, p=8, q=2, seed=3)
    out = tmp_path / "sim"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    return out


def test_simulate_minimal(tmp_path):
    cfg = write_config(tmp_path / "c.json", n=10, p=4, q=1)
    out = tmp_path / "o"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    X = np.loadtxt(out / "X.csv", delimiter=",")
    Y = np.loadtxt(out / "Y.csv", delimiter=",")
    assert X.shape == (10, 4) and Y.shape == (10,)
    truth = json.loads((out / "truth.json").read_text())
    d = gen_dataset(SimConfig(n=10, p=4, q=1))
    np.testing.assert_array_equal(X, d.X)  # round trip is exact
    np.testing.assert_array_equal(np.array(truth["Psi"]), d.Psi)


def test_simulate_deterministic_bytes(tmp_path):
    cfg = write_config(tmp_path / "c.json", n=12, p=5, q=2, seed=9)
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "b")])
    for f in ("X.csv", "Y.csv", "truth.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_simulate_prop_zero(tmp_path):
    cfg = write_config(tmp_path / "c.json", n=10, p=5, q=2, prop=0.0)
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")])
    assert not np.any(json.loads((tmp_path / "o" / "truth.json").read_text())["Psi"])


def test_simulate_bad_config(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"n": 10,\n "p": }')
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "line 2" in capsys.readouterr().err
    p.write_text('{"n": 10, "bogus": 1}')
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "bogus" in capsys.readouterr().err
    p.write_text('{"n": 10, "influence": "odd"}')
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 2


def test_fit_reload_predict(sim_dir, tmp_path):
    out = tmp_path / "fit"
    rc = main(["fit", "--x", str(sim_dir / "X.csv"), "--y", str(sim_dir / "Y.csv"), "--K", "5", "--lambda", "0.05", "--out", str(out)])
    assert rc == 0
    f = FittedHDAM.from_json((out / "model.json").read_text())
    X = np.loadtxt(sim_dir / "X.csv", delimiter=",")
    from specdeconf.hdam import fit

    Y = np.loadtxt(sim_dir / "Y.csv", delimiter=",")
    direct = fit(X, Y, 5, 0.05)
    np.testing.assert_allclose(predict(f, X), predict(direct, X), atol=1e-8)
    summ = json.loads((out / "summary.json").read_text())
    assert summ["active_size"] == len([c for c in json.loads((out / "model.json").read_text())["covariates"] if c["norm"] > 0])
    assert main(["predict", "--model", str(out / "model.json"), "--x", str(sim_dir / "X.csv"), "--out", str(tmp_path / "p.csv")]) == 0
    np.testing.assert_allclose(np.loadtxt(tmp_path / "p.csv"), predict(direct, X), atol=1e-8)


def test_fit_huge_lambda(sim_dir, tmp_path, capsys):
    rc = main(["fit", "--x", str(sim_dir / "X.csv"), "--y", str(sim_dir / "Y.csv"), "--K", "5", "--lambda", "1e6", "--out", str(tmp_path / "f")])
    assert rc == 0
    assert json.loads(capsys.readouterr().out)["active_size"] == 0


def test_fit_naive_equals_deconfounded_flat_spectrum(tmp_path):
    rng = np.random.default_rng(0)
    n = 30
    X = np.sqrt(n) * np.linalg.qr(rng.standard_normal((n, n)))[0][:, :6]
    Xfull = np.sqrt(n) * np.linalg.qr(rng.standard_normal((n, n)))[0]
    Y = np.sin(Xfull[:, 0]) + 0.1 * rng.standard_normal(n)
    np.savetxt(tmp_path / "X.csv", Xfull, delimiter=",")
    np.savetxt(tmp_path / "Y.csv", Y)
    args = ["--x", str(tmp_path / "X.csv"), "--y", str(tmp_path / "Y.csv"), "--K", "5", "--lambda", "0.02"]
    assert main(["fit", *args, "--method", "naive", "--out", str(tmp_path / "a")]) == 0
    assert main(["fit", *args, "--method", "deconfounded", "--out", str(tmp_path / "b")]) == 0
    a = json.loads((tmp_path / "a" / "model.json").read_text())
    b = json.loads((tmp_path / "b" / "model.json").read_text())
    np.testing.assert_allclose([c["beta"] for c in a["covariates"]], [c["beta"] for c in b["covariates"]], atol=1e-8)
    assert X.shape[1] == 6


def test_fit_shape_error(sim_dir, tmp_path):
    X = np.loadtxt(sim_dir / "X.csv", delimiter=",")
    np.savetxt(tmp_path / "Y.csv", np.ones(X.shape[0] - 3))
    rc = main(["fit", "--x", str(sim_dir / "X.csv"), "--y", str(tmp_path / "Y.csv"), "--K", "5", "--lambda", "0.1", "--out", str(tmp_path / "f")])
    assert rc == 3


def test_fit_not_converged_exit(sim_dir, tmp_path, monkeypatch):
    import specdeconf.cli as cli
    from specdeconf import hdam

    real = hdam.fit
    monkeypatch.setattr(cli, "fit", lambda *a, **k: real(*a, max_iter=1, tol=1e-15, **k))
    args = ["fit", "--x", str(sim_dir / "X.csv"), "--y", str(sim_dir / "Y.csv"), "--K", "5", "--lambda", "0.001"]
    with pytest.warns(Warning):
        assert main([*args, "--out", str(tmp_path / "f")]) == 4
    with pytest.warns(Warning):
        assert main([*args, "--allow-nonconverged", "--out", str(tmp_path / "g")]) == 0


def test_cv_single_cell_and_determinism(sim_dir, tmp_path):
    plan = write_config(tmp_path / "plan.json", K_grid=[5], multipliers=[0.1], fine_count=1, folds=3)
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        rc = main(["cv", "--x", str(sim_dir / "X.csv"), "--y", str(sim_dir / "Y.csv"), "--plan", plan, "--out", str(out)])
        assert rc == 0
        outs.append((out / "cv_report.csv").read_text())
    assert outs[0] == outs[1]
    rows = list(csv.DictReader(outs[0].splitlines()))
    assert len([r for r in rows if r["stage"] == "1"]) == 1
    chosen = [r for r in rows if r["chosen"] == "1"]
    assert len(chosen) == 1
    model = json.loads((tmp_path / "a" / "model.json").read_text())
    assert model["lambda"] == float(chosen[0]["lambda"]) and model["K"] == 5


def test_cv_report_min_row_is_chosen(sim_dir, tmp_path):
    plan = write_config(tmp_path / "plan.json", K_grid=[5, 6], multipliers=[1.0, 0.2, 0.05], fine_count=4, folds=3)
    assert main(["cv", "--x", str(sim_dir / "X.csv"), "--y", str(sim_dir / "Y.csv"), "--plan", plan, "--out", str(tmp_path / "o")]) == 0
    rows = list(csv.DictReader((tmp_path / "o" / "cv_report.csv").read_text().splitlines()))
    stage2 = [r for r in rows if r["stage"] == "2"]
    best = min(stage2, key=lambda r: float(r["mean_err"]))
    assert best["chosen"] == "1"


def test_cv_bad_plan(sim_dir, tmp_path):
    plan = write_config(tmp_path / "plan.json", folds=1)
    assert main(["cv", "--x", str(sim_dir / "X.csv"), "--y", str(sim_dir / "Y.csv"), "--plan", plan, "--out", str(tmp_path / "o")]) == 2


def test_experiment_unknown(tmp_path, capsys):
    assert main(["experiment", "nope", "--out", str(tmp_path / "r.csv")]) == 2
    assert "var-cs" in capsys.readouterr().err


def test_experiment_shape_and_determinism(tmp_path, monkeypatch):
    import specdeconf.experiments as ex

    # shrink the desk grid further so the contract check stays fast
    monkeypatch.setitem(ex.SCENARIOS, "var-cs", {**ex.SCENARIOS["var-cs"], "desk_base": {"n": 60, "p": 20}, "desk_grid": {"cs": (0.0, 2.0)}})
    monkeypatch.setattr(ex, "DESK_PLAN", ex.CVPlan(K_grid=(5,), multipliers=(1.0, 0.1), fine_count=2, folds=3))
    monkeypatch.setattr(ex, "DESK_REPLICATES", 2)
    texts = []
    for name in ("a.csv", "b.csv"):
        assert main(["experiment", "var-cs", "--desk-scale", "--seed", "5", "--out", str(tmp_path / name)]) == 0
        texts.append((tmp_path / name).read_text())
    assert texts[0] == texts[1]
    rows = list(csv.DictReader(texts[0].splitlines()))
    assert list(rows[0]) == ["scenario", "method", "replicate", "metric", "value"]
    keys = {(r["scenario"], r["method"], r["replicate"]) for r in rows}
    assert len(keys) == 2 * 3 * 2
    assert {r["metric"] for r in rows} >= {"mse", "active_size", "screening"}


def test_spectrum(tmp_path):
    np.savetxt(tmp_path / "I.csv", np.eye(4), delimiter=",")
    assert main(["spectrum", "--x", str(tmp_path / "I.csv"), "--out", str(tmp_path / "s.csv")]) == 0
    vals = [float(r["singular_value"]) for r in csv.DictReader((tmp_path / "s.csv").read_text().splitlines())]
    assert vals == [1.0] * 4
    X = np.random.default_rng(0).standard_normal((9, 4)) + 3
    np.savetxt(tmp_path / "X.csv", X, delimiter=",")
    main(["spectrum", "--x", str(tmp_path / "X.csv"), "--out", str(tmp_path / "a.csv")])
    main(["spectrum", "--x", str(tmp_path / "X.csv"), "--center", "--out", str(tmp_path / "b.csv")])
    a = np.loadtxt(tmp_path / "a.csv", delimiter=",", skiprows=1)[:, 1]
    b = np.loadtxt(tmp_path / "b.csv", delimiter=",", skiprows=1)[:, 1]
    Xr = np.loadtxt(tmp_path / "X.csv", delimiter=",")
    np.testing.assert_array_equal(a, singular_values(Xr))
    assert not np.allclose(a, b)


def test_leakage_command(sim_dir, capsys):
    assert main(["leakage", "--x", str(sim_dir / "X.csv"), "--truth", str(sim_dir / "truth.json")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert 0 <= out["leak_after"] <= out["leak_before"]
    assert 0 < out["compatibility_lower_bound"] <= 1


def test_usage_error_exit_code():
    assert main(["fit"]) == 2
