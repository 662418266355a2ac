import hashlib
import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from sbridge import FormatError, simulate, build_reference
from sbridge import io
from sbridge.cli import main


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def _sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


# -- file formats --------------------------------------------------------------

def test_points_roundtrip_is_exact(tmp_path):
    x = np.random.default_rng(0).normal(size=(20, 3)) * 1e-7
    io.write_points(tmp_path / "p.csv", x)
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "x_1,x_2,x_3"
    assert np.array_equal(io.read_points(tmp_path / "p.csv"), x)


def test_pairs_and_plan_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
    io.write_pairs(tmp_path / "q.csv", a, b)
    assert (tmp_path / "q.csv").read_text().splitlines()[0] == "x0_1,x0_2,x1_1,x1_2"
    a2, b2 = io.read_pairs(tmp_path / "q.csv")
    assert np.array_equal(a, a2) and np.array_equal(b, b2)
    plan = rng.random((3, 4))
    io.write_plan(tmp_path / "plan.csv", plan, 0.125)
    assert (tmp_path / "plan.csv").read_text().startswith("# epsilon=0.125\n")
    p2, eps = io.read_plan(tmp_path / "plan.csv")
    assert np.array_equal(plan, p2) and eps == 0.125


def test_trajectory_roundtrip(tmp_path):
    traj = simulate(None, build_reference("VE"), np.zeros((4, 2)), steps=5, seed=2)
    io.write_trajectory(tmp_path / "t.csv", traj)
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "particle,step,t,x_1,x_2"
    back = io.read_trajectory(tmp_path / "t.csv")
    assert np.array_equal(back.states, traj.states) and np.array_equal(back.times, traj.times)


@pytest.mark.parametrize("text", ["x_1,x_2\n1,2,3\n", "a,b\n1,2\n", "x_1\nfoo\n", "x_1\nnan\n", "x_1,x_2\n"])
def test_bad_point_files(tmp_path, text):
    (tmp_path / "bad.csv").write_text(text)
    with pytest.raises(FormatError):
        io.read_points(tmp_path / "bad.csv")


def test_bad_pair_and_plan_files(tmp_path):
    (tmp_path / "p.csv").write_text("x0_1,x1_1,x1_2\n1,2,3\n")
    with pytest.raises(FormatError):
        io.read_pairs(tmp_path / "p.csv")
    (tmp_path / "plan.csv").write_text("1,2\n3,4\n")
    with pytest.raises(FormatError):
        io.read_plan(tmp_path / "plan.csv")


# -- command line ----------------------------------------------------------------

def test_gen_data_deterministic(tmp_path, capsys):
    for name in ("a.csv", "b.csv"):
        code, _, _ = _run(capsys, "gen-data", "--dataset", "8gaussians", "--n", 10000, "--seed", 1,
                          "--out", tmp_path / name)
        assert code == 0
    assert io.read_points(tmp_path / "a.csv").shape == (10000, 2)
    assert _sha(tmp_path / "a.csv") == _sha(tmp_path / "b.csv")
    cfg = (tmp_path / "a.csv.config").read_text()
    assert "dataset=8gaussians" in cfg and "config_hash=" in cfg


def test_gen_data_unknown_name(tmp_path, capsys):
    code, _, err = _run(capsys, "gen-data", "--dataset", "bogus", "--out", tmp_path / "x.csv")
    assert code == 2
    msg = json.loads(err)
    assert msg["exit_code"] == 2 and "moons" in msg["message"] and "8gaussians" in msg["message"]


def test_usage_errors_exit_two(tmp_path, capsys):
    code, _, err = _run(capsys, "gen-data", "--n", "5")
    assert code == 2 and json.loads(err)["error"] == "UsageError"
    code, _, _ = _run(capsys, "no-such-command")
    assert code == 2


def test_pair_sample_eval_pipeline(tmp_path, capsys):
    for name, ds, seed in (("a", "stdnormal", 1), ("b", "8gaussians", 2)):
        _run(capsys, "gen-data", "--dataset", ds, "--n", 400, "--seed", seed, "--out", tmp_path / f"{name}.csv")
    code, out, _ = _run(capsys, "pair", "--x0", tmp_path / "a.csv", "--x1", tmp_path / "b.csv", "--ref", "ve",
                        "--sigma", 1, "--n-pairs", 400, "--out", tmp_path / "pairs.csv",
                        "--plan-out", tmp_path / "plan.csv")
    assert code == 0
    rec = json.loads(out)
    assert rec["metric"] == "sinkhorn_residual" and rec["value"] <= 1e-6 and len(rec["config_hash"]) == 64
    plan, eps = io.read_plan(tmp_path / "plan.csv")
    assert plan.shape == (400, 400) and eps == pytest.approx(2.0)
    code, _, _ = _run(capsys, "sample", "--source", "tfsb", "--pairs", tmp_path / "pairs.csv", "--x0",
                      tmp_path / "a.csv", "--steps", 20, "--out", tmp_path / "traj.csv",
                      "--endpoints", tmp_path / "end.csv")
    assert code == 0
    assert io.read_points(tmp_path / "end.csv").shape == (400, 2)
    code, out, _ = _run(capsys, "eval", "--a", tmp_path / "end.csv", "--b", tmp_path / "b.csv",
                        "--mode", "exact", "--out", tmp_path / "m.json")
    rec = json.loads(out)
    assert code == 0 and set(rec) == {"metric", "value", "stderr", "config_hash"} and rec["value"] < 1.5
    assert json.loads((tmp_path / "m.json").read_text()) == rec
    code, _, _ = _run(capsys, "plot", "--trajectory", tmp_path / "traj.csv", "--max-paths", 50,
                      "--out", tmp_path / "fig.svg")
    assert code == 0
    root = ET.fromstring((tmp_path / "fig.svg").read_text())
    ns = "{http://www.w3.org/2000/svg}"
    assert root.tag == f"{ns}svg"
    assert len(root.findall(f"{ns}polyline")) == 50
    assert len(root.findall(f".//{ns}circle")) == 800


def test_sample_is_deterministic(tmp_path, capsys):
    args = ["sample", "--source", "gauss", "--mu0", "0,0", "--cov0", "1,0,0,1", "--mu1", "2,1",
            "--cov1", "2,0,0,0.5", "--n", 200, "--steps", 10, "--seed", 3]
    _run(capsys, *args, "--endpoints", tmp_path / "e1.csv")
    _run(capsys, *args, "--endpoints", tmp_path / "e2.csv")
    assert _sha(tmp_path / "e1.csv") == _sha(tmp_path / "e2.csv")


def test_sample_rejects_single_step(tmp_path, capsys):
    code, _, err = _run(capsys, "sample", "--source", "gauss", "--mu0", "0", "--cov0", "1", "--mu1", "1",
                        "--cov1", "1", "--n", 5, "--steps", 1, "--endpoints", tmp_path / "e.csv")
    assert code == 2 and "steps" in json.loads(err)["message"]


def test_pair_passthrough_and_dimension_mismatch(tmp_path, capsys):
    io.write_pairs(tmp_path / "p.csv", np.zeros((3, 2)), np.ones((3, 2)))
    code, _, _ = _run(capsys, "pair", "--paired", "--x0", tmp_path / "p.csv", "--out", tmp_path / "copy.csv")
    assert code == 0 and (tmp_path / "copy.csv").read_text() == (tmp_path / "p.csv").read_text()
    io.write_points(tmp_path / "a.csv", np.zeros((3, 2)))
    io.write_points(tmp_path / "b.csv", np.zeros((3, 3)))
    code, _, _ = _run(capsys, "pair", "--x0", tmp_path / "a.csv", "--x1", tmp_path / "b.csv",
                      "--out", tmp_path / "o.csv")
    assert code == 2


def test_numerical_failure_exit_three(tmp_path, capsys):
    rng = np.random.default_rng(4)
    io.write_points(tmp_path / "a.csv", rng.normal(size=(30, 2)))
    io.write_points(tmp_path / "b.csv", rng.normal(size=(30, 2)) + 3)
    code, _, err = _run(capsys, "pair", "--x0", tmp_path / "a.csv", "--x1", tmp_path / "b.csv",
                        "--sigma", 0.1, "--max-iters", 2, "--out", tmp_path / "o.csv")
    assert code == 3 and json.loads(err)["error"] == "ConvergenceError"


def test_train_then_sample_sfsb(tmp_path, capsys):
    rng = np.random.default_rng(5)
    io.write_pairs(tmp_path / "p.csv", rng.normal(size=(50, 2)), rng.normal(size=(50, 2)) + 1)
    io.write_points(tmp_path / "x0.csv", rng.normal(size=(20, 2)))
    code, out, _ = _run(capsys, "train", "--pairs", tmp_path / "p.csv", "--iters", 30, "--hidden", "16,16",
                        "--out", tmp_path / "m.sfsb")
    assert code == 0 and json.loads(out)["metric"] == "smoothed_loss"
    code, _, _ = _run(capsys, "sample", "--source", "sfsb", "--model", tmp_path / "m.sfsb", "--x0",
                      tmp_path / "x0.csv", "--steps", 5, "--endpoints", tmp_path / "e.csv")
    assert code == 0 and io.read_points(tmp_path / "e.csv").shape == (20, 2)


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# dataset settings\ndataset = moons\nn = 25\nseed = 9\n")
    code, _, _ = _run(capsys, "gen-data", "--config", cfg, "--out", tmp_path / "a.csv")
    assert code == 0 and io.read_points(tmp_path / "a.csv").shape == (25, 2)
    # flags override config values
    _run(capsys, "gen-data", "--config", cfg, "--n", 7, "--out", tmp_path / "b.csv")
    assert io.read_points(tmp_path / "b.csv").shape == (7, 2)
    resolved = (tmp_path / "a.csv.config").read_text()
    assert "n=25" in resolved and "mean=" in resolved
    cfg.write_text("dataset=moons\nbogus_key=1\n")
    code, _, err = _run(capsys, "gen-data", "--config", cfg, "--out", tmp_path / "c.csv")
    assert code == 2 and "bogus_key" in json.loads(err)["message"]


def test_thread_cap_env(tmp_path, monkeypatch):
    from sbridge.fields import worker_count
    from sbridge import ValidationError
    monkeypatch.setenv("SB_THREADS", "1")
    assert worker_count() == 1
    monkeypatch.setenv("SB_THREADS", "many")
    with pytest.raises(ValidationError):
        worker_count()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "sbridge", "eval", "--a", str(tmp_path / "missing.csv"),
                           "--b", str(tmp_path / "missing.csv")], capture_output=True, text=True)
    assert proc.returncode == 2 and json.loads(proc.stderr)["error"] == "FileNotFoundError"


def test_non_numeric_plan(tmp_path):
    (tmp_path / "plan.csv").write_text("# epsilon=abc\n1,2\n")
    with pytest.raises(FormatError):
        io.read_plan(tmp_path / "plan.csv")
