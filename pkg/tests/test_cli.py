import csv
import json

import pytest

from podt.cli import EXIT_CONFIG, EXIT_MISSING, EXIT_OK, EXIT_RUNTIME, main
from podt.suites import ScenarioSuite, build_suites, run_suite


def rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_table_defaults_give_200_rows(tmp_path):
    assert main(["--scheme", "DiscTrustOnly", "--set", "n_users=200", "--out", str(tmp_path)]) == EXIT_OK
    r = rows(tmp_path / "metrics.csv")
    assert r[0] == ["cycle", "malicious_responses", "attack_success_ratio", "blocks_created",
                    "blocks_accepted"]
    assert len(r) == 201
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert {"accuracy", "network_overload", "storage_mb", "wall_time"} <= set(summary)


def test_bad_theta(tmp_path, capsys):
    (tmp_path / "c.json").write_text('{"theta": 1.5}')
    assert main(["--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "theta" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_cycles_zero(tmp_path):
    (tmp_path / "c.json").write_text('{"cycles": 0}')
    assert main(["--config", str(tmp_path / "c.json"), "--out", str(tmp_path)]) == EXIT_OK
    assert len(rows(tmp_path / "metrics.csv")) == 1


def test_missing_files(tmp_path):
    assert main(["--config", str(tmp_path / "none.json")]) == EXIT_MISSING
    assert main(["--model", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == EXIT_MISSING


def test_runtime_error(tmp_path):
    (tmp_path / "m.json").write_text("garbage")
    assert main(["--model", str(tmp_path / "m.json"), "--set", "cycles=1",
                 "--out", str(tmp_path)]) == EXIT_RUNTIME


def test_unknown_suite_and_scheme(tmp_path):
    assert main(["--suite", "fig99", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["--scheme", "PoW", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_env_default_output(tmp_path, monkeypatch):
    monkeypatch.setenv("PODT_OUT", str(tmp_path / "root"))
    assert main(["--set", "cycles=2", "--set", "n_users=50"]) == EXIT_OK
    assert (tmp_path / "root" / "metrics.csv").exists()


def test_model_reuse(tmp_path):
    base = ["--set", "n_users=150", "--set", "cycles=25", "--set", "calibration_cycles=10"]
    assert main(base + ["--out", str(tmp_path / "a"), "--save-model", str(tmp_path / "m.json")]) == 0
    assert main(base + ["--out", str(tmp_path / "b"), "--model", str(tmp_path / "m.json")]) == 0
    events = json.loads((tmp_path / "b" / "summary.json").read_text())["events"]
    assert not any("trained" in e for e in events)


def test_suite_seeds_and_mean(tmp_path):
    assert main(["--suite", "fig8", "--scale", "0.1", "--seeds", "3", "--out", str(tmp_path)]) == 0
    base = tmp_path / "fig8"
    for v in ("Baseline", "DiscTrustOnly"):
        assert sorted(p.name for p in (base / v).iterdir()) == ["seed0", "seed1", "seed2"]
    agg = rows(base / "aggregate.csv")
    assert agg[0] == ["variant", "scheme", "malicious_responses_seed0", "malicious_responses_seed1",
                      "malicious_responses_seed2", "malicious_responses_mean"]
    for r in agg[1:]:
        vals = [float(x) for x in r[2:5]]
        assert float(r[5]) == pytest.approx(sum(vals) / 3)
    curves = rows(base / "curves.csv")
    assert curves[0] == ["cycle", "Baseline:cum_malicious_normal_dmb",
                         "DiscTrustOnly:cum_malicious_normal_dmb"]


def test_suite_outputs_repeatable(tmp_path):
    suite = build_suites()["fig14"]
    a = run_suite(suite, tmp_path / "a", seeds=(4,), scale=0.1)
    b = run_suite(suite, tmp_path / "b", seeds=(4,), scale=0.1)
    for name in ("aggregate.csv", "curves.csv", "PoDT/seed4/metrics.csv", "AllMiners/seed4/details.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_fig12_axes():
    suite = build_suites()["fig12"]
    assert suite.metrics[0] == "detection_rate"
    assert {v.axis["attacker_pct"] for v in suite.variants} == {10, 30, 50}
    assert min(v.axis["n_users"] for v in suite.variants) == 1000
    assert max(v.axis["n_users"] for v in suite.variants) == 10000
    with pytest.raises(ValueError):
        ScenarioSuite("dup", suite.variants[:1] * 2, ("accuracy",))


def test_plot_flag(tmp_path):
    pytest.importorskip("matplotlib")
    assert main(["--suite", "fig6", "--scale", "0.1", "--plot", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "fig6" / "curves.png").exists()
