import csv
import json

import numpy as np
import pytest

from gbbm import ansatz as az
from gbbm import datasets as ds
from gbbm import training as tr
from gbbm.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from gbbm.cli import config_hash, main


def write_config(tmp_path, **over):
    cfg = {
        "seed": 3,
        "output_dir": str(tmp_path / "run"),
        "data": {"generator": {"kind": "ising", "rows": 2, "cols": 2, "T": 2.4, "warmup": 2000,
                               "thin": 20, "n_train": 300, "n_test": 150}},
        "circuit": {"layout": "clements", "layers": 1},
        "train": {"episodes": 12, "learning_rate": 0.02, "strings_per_step": 32, "eval_interval": 4,
                  "checkpoint_interval": 4},
        "eval": {"repetitions": 5, "strings": 100},
    }
    for k, v in over.items():
        cfg[k] = v
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path, cfg


def read_csv(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


@pytest.fixture
def run(tmp_path):
    path, cfg = write_config(tmp_path)
    assert main(["gen-data", "--config", str(path)]) == 0
    return tmp_path, path, cfg


def test_gen_data_is_reproducible(run):
    tmp_path, path, cfg = run
    out = tmp_path / "run"
    first = (out / "train.txt").read_bytes()
    assert main(["gen-data", "--config", str(path)]) == 0
    assert (out / "train.txt").read_bytes() == first
    train, test = ds.load(out / "train.txt"), ds.load(out / "test.txt")
    assert (len(train), len(test), train.d) == (300, 150, 4)
    assert train.metadata["config_hash"] == config_hash(cfg)


def test_gol_width(tmp_path):
    path, _ = write_config(tmp_path, data={"generator": {"kind": "gol", "rows": 6, "cols": 18, "steps": 5,
                                                         "n_train": 20, "n_test": 10}})
    assert main(["gen-data", "--config", str(path)]) == 0
    assert ds.load(tmp_path / "run" / "train.txt").d == 108


def test_train_resume_matches_uninterrupted(run, tmp_path):
    _, path, cfg = run
    out = tmp_path / "run"
    assert main(["train", "--config", str(path)]) == 0
    full = load_checkpoint(out / "checkpoint.ckpt")
    history = (out / "history.csv").read_text()
    assert history.startswith(f"# config_hash: {config_hash(cfg)}")
    rows = read_csv(out / "history.csv")
    assert [int(r["episode"]) for r in rows] == [0, 4, 8, 12]

    long = dict(cfg, data={"train": str(out / "train.txt")})
    short = dict(long, train=dict(cfg["train"], episodes=6))
    (tmp_path / "long.json").write_text(json.dumps(long))
    (tmp_path / "short.json").write_text(json.dumps(short))
    assert main(["train", "--config", str(tmp_path / "short.json"), "--out", str(tmp_path / "r2")]) == 0
    assert main(["train", "--config", str(tmp_path / "long.json"), "--out", str(tmp_path / "r2"),
                 "--resume", str(tmp_path / "r2" / "checkpoint.ckpt")]) == 0
    resumed = load_checkpoint(tmp_path / "r2" / "checkpoint.ckpt")
    assert resumed.params.tobytes() == full.params.tobytes()
    assert resumed.optimizer.v.tobytes() == full.optimizer.v.tobytes()
    rows2 = read_csv(tmp_path / "r2" / "history.csv")
    assert [int(r["episode"]) for r in rows2] == [0, 4, 8, 12]
    assert [r["total"] for r in rows2] == [r["total"] for r in rows]


def test_width_mismatch_is_config_error(run, tmp_path, capsys):
    _, _, cfg = run
    bad = dict(cfg, circuit={"layout": "clements", "d": 5})
    (tmp_path / "bad.json").write_text(json.dumps(bad))
    assert main(["train", "--config", str(tmp_path / "bad.json")]) == 2
    err = capsys.readouterr().err
    assert "d=5" in err and "width 4" in err


def test_eval_sample_baseline_inspect(run, tmp_path, capsys):
    _, path, cfg = run
    out = tmp_path / "run"
    assert main(["train", "--config", str(path)]) == 0
    assert main(["baseline", "--config", str(path), "-n", "2000"]) == 0
    assert main(["baseline", "--config", str(path), "--kind", "uniform", "-n", "2000"]) == 0
    assert main(["sample", "--config", str(path), "--checkpoint", str(out / "checkpoint.ckpt"), "-n", "500"]) == 0
    assert main(["eval", "--config", str(path), "--checkpoint", str(out / "checkpoint.ckpt"),
                 "--samples", str(out / "uniform_samples.txt"), str(out / "train.txt")]) == 0
    rows = read_csv(out / "metrics.csv")
    sigmas = {r["sigma"] for r in rows}
    for name in ("gbbm", "uniform_samples", "train"):
        for s in sigmas:
            assert sum(1 for r in rows if r["model"] == name and r["sigma"] == s) == 5
    for fname in ("metrics.csv", "metrics_summary.csv", "covariance_model.txt", "covariance_test.txt",
                  "chowliu_samples.txt", "samples.txt", "uniform_metrics.csv"):
        assert config_hash(cfg) in (out / fname).read_text()
    cov = np.loadtxt(out / "covariance_model.txt")
    assert cov.shape == (4, 4)
    edges = json.loads((out / "chowliu_edges.json").read_text())
    spec = az.CircuitSpec.from_dict(edges["circuit"])
    assert spec.layout == "graph" and len(spec.edges) == 3
    assert main(["inspect", str(out / "checkpoint.ckpt")]) == 0
    assert "parameters: 40" in capsys.readouterr().out


def test_eval_train_against_itself(run, tmp_path):
    _, path, _ = run
    out = tmp_path / "run"
    assert main(["eval", "--config", str(path), "--samples", str(out / "test.txt"), "--test", str(out / "test.txt")]) == 0
    assert all(float(r["mmd2"]) == 0 for r in read_csv(out / "metrics.csv"))


def test_sample_vacuum_and_limits(tmp_path):
    spec = az.clements_spec(3)
    n = az.param_count(spec)
    save_checkpoint(Checkpoint(spec, np.zeros(n), tr.AdamState.zeros(n)), tmp_path / "z.ckpt")
    assert main(["sample", "--checkpoint", str(tmp_path / "z.ckpt"), "-n", "50", "--output", str(tmp_path / "s.txt")]) == 0
    assert not ds.load(tmp_path / "s.txt").rows.any()
    spec = az.graph_spec(30, [])
    n = az.param_count(spec)
    save_checkpoint(Checkpoint(spec, np.zeros(n), tr.AdamState.zeros(n)), tmp_path / "big.ckpt")
    assert main(["sample", "--checkpoint", str(tmp_path / "big.ckpt"), "--output", str(tmp_path / "b.txt")]) == 4


def test_config_errors(tmp_path):
    assert main(["train", "--config", str(tmp_path / "missing.json")]) == 2
    (tmp_path / "noseed.json").write_text("{}")
    assert main(["gen-data", "--config", str(tmp_path / "noseed.json")]) == 2
    (tmp_path / "bad.json").write_text("{not json")
    assert main(["gen-data", "--config", str(tmp_path / "bad.json")]) == 2


def test_threads_flag(run, tmp_path):
    _, path, _ = run
    assert main(["--threads", "1", "gen-data", "--config", str(path)]) == 0
