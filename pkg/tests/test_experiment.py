import json
import math

import numpy as np
import pytest

from ipwmc import experiment as ex

SMALL = """
[experiment]
outdir = {outdir}
replicates = 2
seed = 3
n1 = 24
n2 = 20
rank_m = 3
rank_a = 3
estimators = alpha, beta@0.1, win@0.1, nw, uni, known, 1bit
lambda_grid = 1, 3, 9
tau_grid_relative = 0.05, 0.2
folds = 3
"""


def test_parse_estimator():
    assert ex.parse_estimator("beta@0.1") == ("beta", 0.1)
    assert ex.parse_estimator(" NW ") == ("nw", None)
    for bad in ("beta", "nw@0.1", "beta@1.5", "klt"):
        with pytest.raises(ValueError):
            ex.parse_estimator(bad)


def test_load_config_defaults_and_errors(tmp_path):
    cfg = ex.load_config("[experiment]\nreplicates = 3\n")
    assert cfg.replicates == 3 and cfg.alpha1 == "oracle" and cfg.lambda_grid == "auto"
    assert cfg.spec.n1 == 100 and cfg.estimators == ["alpha", "beta@0.1", "nw", "uni"]
    with pytest.raises(ValueError):
        ex.load_config("[experiment]\nbogus = 1\n")
    with pytest.raises(ValueError):
        ex.load_config("[other]\nx = 1\n")
    with pytest.raises(ValueError):
        ex.load_config("[experiment]\nreplicates = 0\n")
    p = tmp_path / "c.ini"
    p.write_text("[experiment]\noutdir = out\n")
    assert ex.load_config(p).outdir == tmp_path / "out"


def test_complete_accepts_subset(tmp_path):
    base = "[experiment]\nestimators = alpha, nw, uni\n"
    assert ex.load_config(base).complete == {"alpha", "nw", "uni"}
    assert ex.load_config(base + "complete = false\n").complete == frozenset()
    assert ex.load_config(base + "complete = nw, alpha\n").complete == {"alpha", "nw"}
    with pytest.raises(ValueError):
        ex.load_config(base + "complete = beta@0.1\n")
    out = tmp_path / "sub"
    cfg = SMALL.format(outdir=out).replace("win@0.1, nw, uni, known, 1bit", "nw, uni")
    ex.run_experiment(cfg.replace("replicates = 2", "replicates = 1") + "complete = nw\n")
    row = ex.load_replicates(out)[0]["estimators"]
    assert "rmse_A" in row["nw"] and "rmse_A" not in row["uni"]


def test_aggregate_hand_computed():
    rows = [{"estimators": {"a": {"x": v}}} for v in (1.0, 2.0, 4.0)]
    s = ex.aggregate(rows, failures=1)
    mean = 7 / 3
    sd = math.sqrt(sum((v - mean) ** 2 for v in (1, 2, 4)) / 2)
    assert s["estimators"]["a"]["x"]["mean"] == pytest.approx(mean)
    assert s["estimators"]["a"]["x"]["stderr"] == pytest.approx(sd / math.sqrt(3))
    assert s["failures"] == 1 and s["replicates_completed"] == 3
    csv = ex.summary_csv(s)
    assert csv.splitlines()[0] == "estimator,metric,mean,stderr,count"


def test_single_replicate_single_estimator(tmp_path):
    text = f"[experiment]\noutdir = {tmp_path}\nn1 = 15\nn2 = 12\nrank_m = 2\nrank_a = 2\n" \
           "estimators = uni\ntau_grid_relative = 0.1\nfolds = 2\n"
    summary = ex.run_experiment(text)
    rows = ex.load_replicates(tmp_path)
    assert len(rows) == 1 and list(rows[0]["estimators"]) == ["uni"]
    assert summary["estimators"]["uni"]["rmse_A"]["count"] == 1


def test_full_small_run_and_determinism(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    s1 = ex.run_experiment(SMALL.format(outdir=out1))
    s2 = ex.run_experiment(SMALL.format(outdir=out2))
    assert (out1 / "summary.csv").read_text() == (out2 / "summary.csv").read_text()
    assert s1 == s2
    assert s1["replicates_completed"] == 2 and s1["failures"] == 0
    rows = ex.load_replicates(out1)
    assert [r["replicate"] for r in rows] == [0, 1]
    est = rows[0]["estimators"]
    assert set(est) == {"alpha", "beta@0.1", "win@0.1", "nw", "uni", "known", "1bit"}
    for name, m in est.items():
        assert 0 <= m["hellinger_sq"] <= 2
        assert math.isfinite(m["rmse_A"]) and 0 <= m["test_error"]
    assert est["known"]["hellinger_sq"] == pytest.approx(0, abs=1e-20)
    assert "rmse_M" in est["alpha"] and "rmse_M" not in est["nw"]
    assert est["beta@0.1"]["beta"] == est["win@0.1"]["beta"]
    # tuning is shared across replicates unless retune is set
    tuned = json.loads((out1 / "tuning.json").read_text())
    assert rows[1]["lambda"] == tuned["lambda"] == rows[0]["lambda"]
    # effective config reproduces the run
    s3 = ex.run_experiment((out1 / "effective_config.ini").read_text().replace(
        str(out1), str(tmp_path / "c")))
    assert s3 == s1


def test_resume_reuses_replicates(tmp_path):
    text = SMALL.format(outdir=tmp_path)
    s1 = ex.run_experiment(text)
    path = tmp_path / "replicates" / "rep_001" / "metrics.json"
    row = json.loads(path.read_text())
    row["estimators"]["nw"]["hellinger_sq"] = 1.5
    path.write_text(json.dumps(row))
    s2 = ex.run_experiment(text, resume=True)
    assert s2["estimators"]["nw"]["hellinger_sq"]["mean"] != s1["estimators"]["nw"]["hellinger_sq"]["mean"]
    # without resume everything is recomputed
    assert ex.run_experiment(text) == s1


def test_replicate_failure_recorded(tmp_path, monkeypatch):
    calls = {"n": 0}
    real = ex.run_replicate

    def flaky(cfg, rep, truth, tuned):
        calls["n"] += 1
        if rep == 1:
            raise RuntimeError("boom")
        return real(cfg, rep, truth, tuned)

    monkeypatch.setattr(ex, "run_replicate", flaky)
    s = ex.run_experiment(SMALL.format(outdir=tmp_path))
    assert s["failures"] == 1 and s["replicates_completed"] == 1
    bad = json.loads((tmp_path / "replicates" / "rep_001" / "metrics.json").read_text())
    assert "boom" in bad["error"]
