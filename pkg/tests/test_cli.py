import csv
import io
import json

import pytest

from subsparse.cli import main
from subsparse.experiment import BUDGET_ENV, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_OK, load_report, run_pipeline
from subsparse.config import parse_config

SMALL = """\
[experiment]
seed = 7
trials = 12
nsp_samples = 10
lemma1_instances = 10
lemma2_trials = 200
lemma3_trials = 12
[data]
ambient_dim = 20
dims = 2, 2
counts = 16, 16
angle_deg = 90
epsilon_raw = 0.01
rho = 0.25
[appendix]
n = 40
count = 30
rows = 10
trials = 300
"""


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.cfg"
    p.write_text(SMALL)
    return p


def run(argv, capsys):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr()


def test_verify_and_report(small_cfg, tmp_path, capsys):
    out = tmp_path / "run"
    code, cap = run(["verify", "--config", small_cfg, "--out", out], capsys)
    assert code == EXIT_OK, cap.out
    assert "recovery_residual" in cap.out and "PASS" in cap.out
    report = json.loads((out / "report.json").read_text())
    assert report["content"]["passed"] is True
    assert (out / "trials.jsonl").read_text().count("\n") >= 12
    code, cap = run(["report", out], capsys)
    assert code == EXIT_OK and "matches stored hash" in cap.out


def test_report_detects_tampering(small_cfg, tmp_path, capsys):
    out = tmp_path / "run"
    run(["verify", "--config", small_cfg, "--out", out, "--check", "lemma1"], capsys)
    doc = json.loads((out / "report.json").read_text())
    doc["content"]["checks"]["lemma1"]["failures"] = 3
    (out / "report.json").write_text(json.dumps(doc))
    code, cap = run(["report", out], capsys)
    assert code == EXIT_CHECK_FAILED and "DOES NOT match" in cap.out


def test_necessary_condition_violation_exits_1(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text(SMALL.replace("angle_deg = 90", "angle_deg = 2").replace("epsilon_raw = 0.01", "epsilon_raw = 0.5"))
    out = tmp_path / "bad"
    code, cap = run(["verify", "--config", p, "--out", out, "--check", "recovery", "lemma1"], capsys)
    assert code == EXIT_CHECK_FAILED
    content = json.loads((out / "report.json").read_text())["content"]
    assert content["errors"][0]["error"] == "NecessaryConditionViolated"
    assert any(s["check"] == "recovery" for s in content["skipped"])


def test_config_errors_exit_2(tmp_path, capsys):
    p = tmp_path / "broken.cfg"
    p.write_text("[data]\nambient_dim = many\n")
    code, cap = run(["verify", "--config", p], capsys)
    assert code == EXIT_CONFIG and "broken.cfg:2" in cap.err
    code, _ = run(["report", tmp_path / "nowhere"], capsys)
    assert code == EXIT_CONFIG


def test_budget_env_exits_2(small_cfg, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(BUDGET_ENV, "5")
    code, cap = run(["verify", "--config", small_cfg, "--out", tmp_path], capsys)
    assert code == EXIT_CONFIG and "budget" in cap.err.lower()
    assert not (tmp_path / "report.json").exists()


def test_gen_geometry_solve(small_cfg, tmp_path, capsys):
    data = tmp_path / "data"
    code, _ = run(["gen", "--config", small_cfg, "--out", data], capsys)
    assert code == EXIT_OK and (data / "dataset.json").exists()
    code, cap = run(["geometry", "--config", small_cfg, "--data", data], capsys)
    assert code == EXIT_OK
    doc = json.loads(cap.out)
    regen = json.loads(run(["geometry", "--config", small_cfg], capsys)[1].out)
    assert doc == regen
    assert doc["bounds"]["gamma"] > 0
    code, cap = run(["solve", "--config", small_cfg, "--data", data, "--trial", "3"], capsys)
    assert code == EXIT_OK
    sol = json.loads(cap.out)
    assert sol["certificate"]["label"] == 1 and sol["certificate"]["residual_ok"]
    assert len(sol["coefficients"]) == 32
    code, cap = run(["solve", "--config", small_cfg, "--label", "9"], capsys)
    assert code == EXIT_CONFIG


def test_single_cell_sweep_matches_run(small_cfg, tmp_path, capsys):
    code, _ = run(["sweep", "--config", small_cfg, "--out", tmp_path, "--check", "recovery"], capsys)
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO((tmp_path / "sweep.csv").read_text())))
    assert {r["epsilon_raw"] for r in rows} == {"0.01"} and {r["counts"] for r in rows} == {"16 16"}
    cfg = parse_config(SMALL)
    from dataclasses import replace

    rep = run_pipeline(replace(cfg, checks=("recovery",)))
    trial = [t for t in rep.trials if t["check"] == "recovery"]
    gamma = next(r for r in rows if r["metric"] == "gamma")
    assert float(gamma["value"]) == rep.content["bounds"]["gamma"]
    worst = next(r for r in rows if r["metric"] == "residual_over_eps_max")
    assert float(worst["value"]) == max(t["in_support_residual"] for t in trial) / rep.content["dataset"]["noise"]["epsilon"]


def test_sweep_grid_order(tmp_path, capsys):
    p = tmp_path / "s.cfg"
    p.write_text(SMALL + "[sweep]\nepsilon_raw = 0.02, 0.01\ncounts = 12, 10\n")
    code, _ = run(["sweep", "--config", p, "--out", tmp_path, "--check", "lemma1", "--jobs", "2"], capsys)
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO((tmp_path / "sweep.csv").read_text())))
    cells = list(dict.fromkeys((r["epsilon_raw"], r["counts"]) for r in rows))
    assert cells == [("0.02", "12 12"), ("0.02", "10 10"), ("0.01", "12 12"), ("0.01", "10 10")]


def test_jobs_do_not_change_hash(small_cfg, tmp_path, capsys):
    hashes = []
    for jobs in (1, 2):
        out = tmp_path / f"j{jobs}"
        code, _ = run(["verify", "--config", small_cfg, "--out", out, "--jobs", jobs, "--check", "recovery", "nsp"], capsys)
        assert code == EXIT_OK
        hashes.append(load_report(out).content_hash)
    assert hashes[0] == hashes[1]


def test_seed_override_changes_hash(small_cfg, tmp_path, capsys):
    a = tmp_path / "a"
    b = tmp_path / "b"
    run(["verify", "--config", small_cfg, "--out", a, "--check", "lemma1"], capsys)
    run(["verify", "--config", small_cfg, "--out", b, "--check", "lemma1", "--seed", "8"], capsys)
    assert load_report(a).content_hash != load_report(b).content_hash
