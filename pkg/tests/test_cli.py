import json
import subprocess
import sys

import numpy as np
import pytest

from coxtail import SurvivalSample, dump_dataset
from coxtail.cli import main, parse_grid
from coxtail.models import load_model
from coxtail.simulation import simcauch1_config, simulate_cox_sample


@pytest.fixture
def data_csv(tmp_path):
    sample = simulate_cox_sample(simcauch1_config(n=300, seed=8), 0)
    path = tmp_path / "data.csv"
    dump_dataset(sample, path)
    return path, sample


@pytest.fixture
def d_file(tmp_path):
    path = tmp_path / "D.json"
    assert main(["calibrate", "--n", "300", "--n-mc", "200", "--seed", "7", "--out", str(path)]) == 0
    return path


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestFit:
    def test_nelson_aalen(self, tmp_path, data_csv, capsys):
        path, _ = data_csv
        out = tmp_path / "na.json"
        code, _, _ = run(["fit", path, "--method", "na", "--out", out], capsys)
        assert code == 0
        d = json.loads(out.read_text())
        assert d["kind"] == "nelson_aalen" and "tail" not in d
        assert (tmp_path / "na.json.manifest.json").exists()

    def test_fixed_threshold_snaps_up(self, tmp_path, data_csv, capsys):
        path, sample = data_csv
        out = tmp_path / "fixed.json"
        code, _, _ = run(["fit", path, "--method", "fixed:5", "--beta", "0.5", "--out", out], capsys)
        assert code == 0
        d = json.loads(out.read_text())
        expected = float(np.min(sample.times[sample.times >= 5]))
        assert d["tail"]["tau"] == expected
        assert d["cox"]["beta"] == [0.5]

    def test_adaptive_with_D_file(self, tmp_path, data_csv, d_file, capsys):
        path, _ = data_csv
        out = tmp_path / "ad.json"
        code, _, _ = run(["fit", path, "--method", "adaptive", "--critical-value", d_file,
                          "--out", out, "--curve", tmp_path / "curve.csv"], capsys)
        assert code == 0
        report = json.loads((tmp_path / "ad.json.selection.json").read_text())
        model = json.loads(out.read_text())
        assert report["tau_hat"] == model["tail"]["tau"]
        assert report["D"] == json.loads(d_file.read_text())["D"]
        curve = np.loadtxt(tmp_path / "curve.csv", delimiter=",", skiprows=1)
        assert curve.shape == (200, 3)
        assert np.all(np.diff(curve[:, 1]) <= 0)

    def test_aggregate_commands(self, tmp_path, data_csv, capsys):
        path, _ = data_csv
        for kind in ("simple", "adaptive"):
            out = tmp_path / f"agg-{kind}.json"
            code, _, err = run(["aggregate", path, "--kind", kind, "--critical-value", "8", "--out", out], capsys)
            assert code == 0, err
            weights = [c["weight"] for c in json.loads(out.read_text())["components"]]
            assert len(weights) == 10 and sum(weights) == pytest.approx(1.0, abs=1e-12)

    def test_outputs_are_reproducible(self, tmp_path, data_csv, capsys):
        path, _ = data_csv
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for out in (a, b):
            assert run(["fit", path, "--method", "agg-adaptive", "--critical-value", "8", "--out", out], capsys)[0] == 0
        assert a.read_bytes() == b.read_bytes()


class TestPredict:
    @pytest.fixture
    def model_path(self, tmp_path, data_csv, capsys):
        path, _ = data_csv
        out = tmp_path / "m.json"
        assert run(["fit", path, "--method", "fixed:2", "--out", out], capsys)[0] == 0
        return out

    def test_survival_at_tau(self, model_path, capsys):
        m = json.loads(model_path.read_text())
        tau = m["tail"]["tau"]
        code, out, _ = run(["predict", model_path, "--survival-at", repr(tau)], capsys)
        assert code == 0
        assert float(out.strip().split("=")[1]) == pytest.approx(m["tail"]["s0_at_tau"], rel=1e-14)

    def test_quantile_round_trip(self, model_path, capsys):
        code, out, _ = run(["predict", model_path, "--quantile", "0.01", "--z", "0.3"], capsys)
        assert code == 0
        q = float(out.strip().split("=")[1])
        assert load_model(model_path).survival(q, [0.3]) == pytest.approx(0.01, rel=1e-9)

    def test_unreachable_step_quantile_is_NA(self, tmp_path, data_csv, capsys):
        path, _ = data_csv
        out = tmp_path / "na.json"
        run(["fit", path, "--method", "na", "--out", out], capsys)
        code, text, _ = run(["predict", out, "--quantile", "1e-9"], capsys)
        assert code == 0 and text.strip() == "q(1e-09)=NA"

    def test_batch(self, tmp_path, model_path, capsys):
        batch = tmp_path / "b.csv"
        batch.write_text("z1,x,p\n0.0,5.0,\n0.5,,0.1\n")
        code, out, _ = run(["predict", model_path, "--batch", batch], capsys)
        lines = out.strip().splitlines()
        assert code == 0 and lines[0] == "row,kind,value,result"
        assert lines[1].startswith("1,survival,5.0,") and lines[2].startswith("2,quantile,0.1,")

    def test_requires_a_query(self, model_path, capsys):
        assert run(["predict", model_path], capsys)[0] == 2


class TestCalibrateAndSimulate:
    def test_calibrate_twice_identical(self, tmp_path, capsys):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for out in (a, b):
            assert run(["calibrate", "--n", "200", "--quantile", "0.99", "--n-mc", "150", "--seed", "7", "--out", out], capsys)[0] == 0
        assert a.read_bytes() == b.read_bytes()
        assert set(json.loads(a.read_text())) >= {"D", "n", "quantile", "n_mc", "seed"}

    def test_simulate(self, tmp_path, capsys):
        cfg = simcauch1_config(n=60, n_mc=4, critical_value=8.0).to_dict()
        path = tmp_path / "study.json"
        path.write_text(json.dumps(cfg))
        code, _, _ = run(["simulate", path, "--out-dir", tmp_path / "out", "--threads", "2"], capsys)
        assert code == 0
        rows = (tmp_path / "out" / "study.relmse.csv").read_text().splitlines()
        assert rows[0] == "estimator,x,rel_mse" and len(rows) == 21
        assert json.loads((tmp_path / "out" / "study.report.json").read_text())["n_mc"] == 4

    def test_config_error_reports_field(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"n": 50, "n_mc": 2, "failure": {"kind": "pareto", "theta": -2}}))
        code, _, err = run(["simulate", path], capsys)
        assert code == 3 and "failure:" in err


class TestExitCodes:
    def test_missing_required_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["calibrate", "--n", "100"])
        assert exc.value.code == 2
        assert "usage" in capsys.readouterr().err

    def test_data_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("time,status\n1,1\n-3,0\n")
        code, _, err = run(["fit", bad, "--method", "na", "--out", tmp_path / "m.json"], capsys)
        assert code == 3 and "line 3" in err

    def test_missing_file(self, tmp_path, capsys):
        assert run(["fit", tmp_path / "nope.csv", "--method", "na", "--out", tmp_path / "m.json"], capsys)[0] == 3

    def test_selection_error(self, tmp_path, data_csv, capsys):
        path, _ = data_csv
        assert run(["fit", path, "--method", "fixed:1e12", "--out", tmp_path / "m.json"], capsys)[0] == 5

    def test_numeric_error(self, tmp_path, capsys):
        sep = tmp_path / "sep.csv"
        dump_dataset(SurvivalSample([1.0, 2.0, 3.0, 4.0], [1, 1, 1, 1], [[3.0], [2.0], [1.0], [0.0]]), sep)
        assert run(["fit", sep, "--method", "na", "--out", tmp_path / "m.json"], capsys)[0] == 4

    def test_usage_error_without_D(self, tmp_path, data_csv, capsys):
        path, _ = data_csv
        code, _, err = run(["fit", path, "--method", "adaptive", "--out", tmp_path / "m.json"], capsys)
        assert code == 2 and "critical value" in err

    def test_unknown_method(self, tmp_path, data_csv, capsys):
        path, _ = data_csv
        assert run(["fit", path, "--method", "bogus", "--out", tmp_path / "m.json"], capsys)[0] == 2


def test_parse_grid():
    np.testing.assert_allclose(parse_grid("1:3:3"), [1, 2, 3])
    np.testing.assert_allclose(parse_grid("geom:1:100:3"), [1, 10, 100])
    np.testing.assert_allclose(parse_grid("0.5,2"), [0.5, 2])


def test_entry_point_runs():
    res = subprocess.run([sys.executable, "-m", "coxtail.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip() == "0.1.0"
