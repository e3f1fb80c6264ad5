"""Command line surface: exit codes, artifacts, determinism."""

import contextlib
import io
import json
import os
import subprocess
import sys

import pytest

from riskswitch.cli import main


def run(argv):
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = main(argv)
    return code, buf.getvalue()


def load(path):
    with open(path) as fh:
        return json.load(fh)


# ------------------------------------------------------------------- solve

def test_solve_writes_result_and_artifacts(tmp_path):
    d = str(tmp_path)
    code, _ = run(["solve", "--builtin", "lq", "--q", "0.1875",
                   "--controls", "1,2", "--radius", "4",
                   "--nodes-per-unit", "25", "--output-dir", d,
                   "--dump-operator", d + "/op.mtx"])
    assert code == 0
    rep = load(d + "/solve.json")
    assert set(rep) >= {"lambda", "iterations", "residual", "policy_histogram",
                        "eigenvalue_trace", "converged", "oscillated",
                        "interior_nodes", "config", "config_hash"}
    assert rep["converged"] is True
    assert rep["lambda"] == pytest.approx(0.101213, abs=1e-4)
    assert rep["interior_nodes"] == 199
    # overrides round-trip into the echoed config
    assert rep["config"]["model"]["params"]["q"] == 0.1875
    assert rep["config"]["model"]["params"]["controls"] == [1.0, 2.0]
    # strong pull dominates away from ties and the boundary layer
    hist = rep["policy_histogram"]
    assert hist["1"] > 5 * hist["0"]
    assert os.path.exists(d + "/psi.csv")
    assert os.path.exists(d + "/op.mtx")
    assert os.path.exists(d + "/run_meta.json")
    meta = load(d + "/run_meta.json")
    assert set(meta) >= {"version", "workers", "duration_sec", "argv"}


def test_solve_config_hash_keyed_on_configuration(tmp_path):
    dirs = [str(tmp_path / n) for n in ("a", "b", "c")]
    for d in dirs[:2]:
        run(["solve", "--builtin", "lq", "--radius", "2",
             "--nodes-per-unit", "10", "--output-dir", d])
    run(["solve", "--builtin", "lq", "--q", "0.25", "--radius", "2",
         "--nodes-per-unit", "10", "--output-dir", dirs[2]])
    h = [load(d + "/solve.json")["config_hash"] for d in dirs]
    assert h[0] == h[1]
    assert h[0] != h[2]


# ------------------------------------------------------------------- sweep

def test_sweep_monotone_increasing(tmp_path):
    d = str(tmp_path)
    code, _ = run(["sweep", "--builtin", "lq", "--radii", "2,3,4",
                   "--nodes-per-unit", "10", "--output-dir", d])
    assert code == 0
    rep = load(d + "/sweep.json")
    assert rep["monotonicity_certificate"] is True
    lams = [e["lambda"] for e in rep["entries"]]
    assert lams == sorted(lams)
    assert len(lams) == 3
    assert rep["lambda_star"] >= lams[-1]
    assert len(rep["increments"]) == 2


def test_sweep_rejects_non_increasing_radii(tmp_path):
    code, out = run(["sweep", "--builtin", "lq", "--radii", "4,3",
                     "--nodes-per-unit", "10", "--output-dir", str(tmp_path)])
    assert code == 2
    err = json.loads(out)["error"]
    assert err["type"] == "UsageError"
    assert "increasing" in err["message"]


# ---------------------------------------------------------------- simulate

def test_simulate_rate_functional(tmp_path):
    d = str(tmp_path)
    code, _ = run(["simulate", "--builtin", "ou2", "--functional", "rate",
                   "--step", "0.01", "--horizon", "2", "--paths", "2000",
                   "--seed", "4", "--output-dir", d])
    assert code == 0
    est = load(d + "/estimate.json")
    assert est["value"] == pytest.approx(0.0421, abs=1e-3)
    assert est["paths"] == 2000
    assert est["ess"] > 1000
    assert est["flags"] == []
    assert est["config"]["functional"] == "rate"


def test_simulate_mean_position_contracting(tmp_path):
    d = str(tmp_path)
    code, _ = run(["simulate", "--builtin", "ou2",
                   "--functional", "mean-position", "--step", "0.01",
                   "--horizon", "8", "--paths", "1500", "--seed", "4",
                   "--output-dir", d])
    assert code == 0
    rep = load(d + "/diagnostic.json")
    assert rep["passed"] is True
    assert rep["decay_exponent"] < -0.5
    assert len(rep["values"]) == 3


def test_simulate_mean_position_expanding_fails(tmp_path):
    spec = {"name": "expander", "dim": 1, "num_regimes": 1,
            "controls": [1.0], "drift": ["0.3 * x1"],
            "diffusion": [["1"]], "rates": [["0"]], "cost": "0"}
    cfg = tmp_path / "expander.json"
    cfg.write_text(json.dumps(spec))
    d = str(tmp_path)
    code, _ = run(["simulate", "--model", str(cfg),
                   "--functional", "mean-position", "--step", "0.01",
                   "--horizon", "16", "--paths", "800", "--seed", "4",
                   "--output-dir", d])
    assert code == 1
    rep = load(d + "/diagnostic.json")
    assert rep["passed"] is False


def test_simulate_paths_writes_csv(tmp_path):
    d = str(tmp_path)
    code, _ = run(["simulate", "--builtin", "ou2", "--functional", "paths",
                   "--step", "0.01", "--horizon", "1", "--paths", "20",
                   "--seed", "4", "--output-dir", d])
    assert code == 0
    rep = load(d + "/paths.json")
    assert rep["paths"] == 20
    assert rep["n_steps"] == 100
    with open(d + "/paths.csv") as fh:
        header = fh.readline().strip()
        lines = sum(1 for _ in fh)
    assert header == "path,t,x1,regime"
    assert lines == 20 * 101


def test_simulate_step_too_large_for_switching(tmp_path):
    code, out = run(["simulate", "--builtin", "ou2", "--step", "0.6",
                     "--horizon", "2", "--paths", "10",
                     "--output-dir", str(tmp_path)])
    assert code == 3
    assert json.loads(out)["error"]["type"] == "StepSizeError"


def test_simulate_worker_count_invisible_in_output(tmp_path):
    texts = []
    for w in ("1", "2", "8"):
        d = str(tmp_path / ("w" + w))
        code, _ = run(["simulate", "--builtin", "ou2", "--step", "0.01",
                       "--horizon", "2", "--paths", "6000", "--seed", "9",
                       "--workers", w, "--output-dir", d])
        assert code == 0
        with open(d + "/estimate.json", "rb") as fh:
            texts.append(fh.read())
    assert texts[0] == texts[1] == texts[2]


# ------------------------------------------------------------------ verify

@pytest.fixture(scope="module")
def verify_run(tmp_path_factory):
    d = str(tmp_path_factory.mktemp("verify"))
    code, _ = run(["verify", "--builtin", "ou2", "--radius", "5",
                   "--nodes-per-unit", "80", "--seed", "3",
                   "--paths", "6000", "--step", "0.0025", "--horizon", "3",
                   "--fk-horizon", "1.0", "--alt-policies", "3",
                   "--rate-policies", "2", "--samples", "128",
                   "--workers", "4", "--output-dir", d])
    return code, load(d + "/verify.json")


def test_verify_full_pipeline_passes(verify_run):
    code, rep = verify_run
    assert code == 0
    assert rep["passed"] is True
    assert rep["failed"] == []
    assert set(rep["checks"]) == {"hypotheses", "certificate", "optimality",
                                  "lambda_match", "feynman_kac"}
    assert rep["checks"]["feynman_kac"]["max_abs_z"] < 3.0
    assert rep["checks"]["optimality"]["passed"] is True
    assert rep["checks"]["lambda_match"]["optimal_ok"] is True


def test_verify_detects_wrong_eigenvalue(verify_run, tmp_path):
    _, rep = verify_run
    wrong = rep["lambda"] + 0.05
    d = str(tmp_path)
    code, _ = run(["verify", "--builtin", "ou2", "--radius", "5",
                   "--nodes-per-unit", "80", "--seed", "3",
                   "--paths", "6000", "--step", "0.0025", "--horizon", "3",
                   "--fk-horizon", "1.0", "--alt-policies", "3",
                   "--rate-policies", "2", "--samples", "128",
                   "--workers", "4", "--lambda-ref", repr(wrong),
                   "--output-dir", d])
    assert code == 1
    rep2 = load(d + "/verify.json")
    assert rep2["failed"] == ["feynman_kac"]
    assert rep2["checks"]["feynman_kac"]["max_abs_z"] > 3.0
    # PDE-side checks are unaffected by the simulation override
    assert rep2["checks"]["optimality"]["passed"] is True


def test_verify_skip_simulation(tmp_path):
    d = str(tmp_path)
    code, _ = run(["verify", "--builtin", "ou2", "--radius", "4",
                   "--nodes-per-unit", "15", "--skip-simulation",
                   "--output-dir", d])
    assert code == 0
    rep = load(d + "/verify.json")
    assert rep["passed"] is True
    assert "lambda_match" not in rep["checks"]
    assert "feynman_kac" not in rep["checks"]
    assert rep["checks"]["optimality"]["resolve_lambda_error"] < 1e-10


# ---------------------------------------------------------------- validate

def test_validate_builtin_passes(tmp_path):
    d = str(tmp_path)
    code, _ = run(["validate", "--builtin", "lq", "--output-dir", d])
    assert code == 0
    rep = load(d + "/validate.json")
    assert rep["passed"] is True
    assert set(rep["checks"]) == {"hypotheses", "certificate"}


def test_validate_near_monotone_rejects_growing_cost(tmp_path):
    d = str(tmp_path)
    code, _ = run(["validate", "--builtin", "lq", "--near-monotone",
                   "--output-dir", d])
    assert code == 1
    rep = load(d + "/validate.json")
    assert rep["failed"] == ["near_monotone"]
    assert rep["checks"]["near_monotone"]["bounded_coefficients"]["passed"] is False


def test_validate_near_monotone_accepts_bounded(tmp_path):
    d = str(tmp_path)
    code, _ = run(["validate", "--builtin", "dip", "--near-monotone",
                   "--output-dir", d])
    assert code == 0
    rep = load(d + "/validate.json")
    assert rep["checks"]["near_monotone"]["bounded_coefficients"]["passed"] is True


# ------------------------------------------------------------- error paths

def test_unknown_builtin_exits_2(tmp_path):
    code, out = run(["solve", "--builtin", "nosuch", "--radius", "2",
                     "--nodes-per-unit", "10", "--output-dir", str(tmp_path)])
    assert code == 2
    assert "unknown builtin" in json.loads(out)["error"]["message"]


def test_missing_model_file_exits_2(tmp_path):
    code, out = run(["solve", "--model", str(tmp_path / "missing.json"),
                     "--radius", "2", "--nodes-per-unit", "10",
                     "--output-dir", str(tmp_path)])
    assert code == 2
    assert "not found" in json.loads(out)["error"]["message"]


def test_malformed_model_file_exits_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, out = run(["solve", "--model", str(bad), "--radius", "2",
                     "--nodes-per-unit", "10", "--output-dir", str(tmp_path)])
    assert code == 2
    assert "bad model config" in json.loads(out)["error"]["message"]


def test_non_integral_grid_exits_2(tmp_path):
    code, out = run(["solve", "--builtin", "lq", "--radius", "1.05",
                     "--nodes-per-unit", "10", "--output-dir", str(tmp_path)])
    assert code == 2
    assert "integer" in json.loads(out)["error"]["message"]


def test_indefinite_diffusion_exits_3(tmp_path):
    spec = {"name": "skewed", "dim": 2, "num_regimes": 1, "controls": [1.0],
            "drift": ["-x1", "-x2"],
            "diffusion": [["1", "0"], ["1.5", "0.1"]],
            "rates": [["0"]], "cost": "x1^2 + x2^2"}
    cfg = tmp_path / "skew.json"
    cfg.write_text(json.dumps(spec))
    code, out = run(["solve", "--model", str(cfg), "--radius", "1",
                     "--nodes-per-unit", "5", "--output-dir", str(tmp_path)])
    assert code == 3
    assert json.loads(out)["error"]["type"] == "MonotonicityViolation"


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "riskswitch", "solve", "--builtin", "lq",
         "--radius", "2", "--nodes-per-unit", "10",
         "--output-dir", str(tmp_path)],
        capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert os.path.exists(str(tmp_path / "solve.json"))
