import io
import json

import pytest

from medreg.cli import main


def run(argv, monkeypatch=None):
    out, err = io.StringIO(), io.StringIO()
    code = main(argv, out, err)
    return code, out.getvalue(), err.getvalue()


def test_batchcount():
    code, out, _ = run(["batchcount", "--alpha", "0.1", "--delta", "0"])
    assert code == 0
    assert out.splitlines() == ["B=5", "bounds: lower=4 upper=5"]


def test_medbias_uniform_mle():
    code, out, _ = run(["medbias", "--model", "uniform_scale:theta=1", "--estimator", "uniform_mle",
                        "--n", "10", "--reps", "2000"])
    assert code == 0
    assert "bias=0.5 exact" in out and "mc bias=0.5 " in out


def test_usage_errors_exit_2(capsys):
    assert main(["nosuch"]) == 2
    assert main(["batchcount"]) == 2
    assert main([]) == 2
    assert "usage" in capsys.readouterr().err


def test_config_error_names_field():
    code, _, err = run(["coverage", "--procedure", "nope", "--model", "normal_mean", "--n", "10"])
    assert code == 2 and "procedure" in err and "valid names" in err
    code, _, err = run(["coverage", "--config", "/nonexistent.json"])
    assert code == 2 and "config" in err


def test_insufficient_data_exit_2():
    code, _, err = run(["coverage", "--procedure", "sample_mean > hulc", "--model", "normal_mean",
                        "--n", "3", "--alpha", "0.1", "--reps", "10"])
    assert code == 2 and "n >= 5" in err


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kind": "coverage", "procedure": "zinterval", "models": ["normal_mean"],
                               "n": [100], "levels": [0.05], "reps": 100000}))
    out_json = tmp_path / "r.json"
    code, _, _ = run(["coverage", "--config", str(cfg), "--reps", "500", "--seed", "4", "--json", str(out_json), "--quiet"])
    assert code == 0
    data = json.loads(out_json.read_text())
    assert data["config"]["reps"] == 500 and data["config"]["seed"] == 4


def test_oracle_mismatch_exit_1(monkeypatch):
    from medreg.constructions import HulC

    monkeypatch.setattr(HulC, "exact_miscoverage", lambda self, model, n, alpha: 0.9)
    code, _, err = run(["coverage", "--procedure", "sample_mean > hulc", "--model", "normal_mean",
                        "--n", "20", "--alpha", "0.1", "--reps", "500"])
    assert code == 1 and "oracle mismatch" in err and "normal_mean" in err


def test_duality_writes_reports(tmp_path):
    csv_path, json_path = tmp_path / "d.csv", tmp_path / "d.json"
    code, out, _ = run(["duality", "--estimator", "sample_mean", "--model", "normal_mean", "--n", "200",
                        "--levels", "0.05,0.5", "--min-level", "0.05", "--reps", "500",
                        "--csv", str(csv_path), "--json", str(json_path)])
    assert code == 0 and csv_path.exists() and json_path.exists()
    assert (tmp_path / "d.stage_summary.csv").exists()
    assert "tau_hat" in out


def test_hidden_oracle_command():
    code, out, _ = run(["oracle", "enumerate", "--support", "1:1/3,2:1/3,3:1/3", "--n", "3",
                        "--estimator", "order_stat_median:r=1", "--theta", "2"])
    assert code == 0 and out.strip().endswith("bias=0")
    code, out, _ = run(["oracle", "batchcount", "--alpha", "1e-9", "--delta", "0.49", "--bmax", "10"])
    assert out.strip() == "B=none"
    code, out, _ = run(["oracle", "top2", "--n", "2"])
    assert float(out) == pytest.approx(0.5)


def test_help_hides_oracle(capsys):
    with pytest.raises(SystemExit):
        from medreg.cli import build_parser
        build_parser().parse_args(["--help"])
    assert "oracle" not in capsys.readouterr().out


def test_bad_thread_env(monkeypatch):
    monkeypatch.setenv("MEDREG_THREADS", "x")
    code, _, err = run(["medbias", "--model", "normal_mean", "--estimator", "sample_mean", "--n", "5", "--reps", "10"])
    assert code == 2 and "MEDREG_THREADS" in err
