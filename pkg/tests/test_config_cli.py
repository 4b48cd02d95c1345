import csv
import json

import numpy as np
import pytest

from lrvoter.cli import main
from lrvoter.config import ExperimentConfig, load_config
from lrvoter.errors import ConfigError
from lrvoter.experiment import run_experiment
from lrvoter.streams import ReplicaStreams, as_streams, label_key, run_replicas, seed_streams


# ---- streams

def test_streams_deterministic():
    a = seed_streams(42, ["x", "y"])
    b = seed_streams(42, ["x", "y"])
    assert np.array_equal(a["x"].random(100), b["x"].random(100))


def test_streams_distinct_labels():
    s = seed_streams(42, ["x", "y"])
    assert s["x"].random() != s["y"].random()
    assert label_key("x") != label_key("y")


def test_streams_cross_correlation():
    s = seed_streams(7, ["a", "b"])
    x, y = s["a"].random(10 ** 6), s["b"].random(10 ** 6)
    assert abs(np.corrcoef(x, y)[0, 1]) < 0.01


def test_streams_duplicate_labels():
    with pytest.raises(ValueError):
        seed_streams(1, ["a", "a"])


def test_replica_streams():
    st = ReplicaStreams(5, "job")
    assert st.generator(3).random() == ReplicaStreams(5, "job").generator(3).random()
    assert st.generator(3).random() != st.generator(4).random()
    assert st.child("k").label == "job/k"
    assert as_streams(st) is st
    assert as_streams(9).master_seed == 9
    with pytest.raises(TypeError):
        as_streams("seed")
    f = lambda i, g: (i, g.random())
    assert run_replicas(f, 12, st, threads=1) == run_replicas(f, 12, st, threads=4)


# ---- config

def test_config_roundtrip():
    cfg = ExperimentConfig.from_dict({"pipeline": "duality", "seed": 3, "model": {"alpha": 0.75},
                                      "campaign": {"sites": [0, 2], "replicas": 50}})
    back = ExperimentConfig.from_yaml(cfg.to_yaml())
    assert back == cfg and back.to_dict() == cfg.to_dict()
    assert "output" not in cfg.echo()


def test_config_file(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("pipeline: constants\nmodel: {d: 1, alpha: 0.5}\n")
    assert load_config(p).model.alpha == 0.5


@pytest.mark.parametrize("raw", [
    {"model": {"alfa": 0.5}},
    {"modle": {}},
    {"model": {"d": 1.5}},
    {"model": {"alpha": "half"}},
    {"campaign": {"N": 64}},
    {"seed": True},
    {"model": []},
])
def test_config_schema_errors(raw):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(raw)


@pytest.mark.parametrize("raw", [
    {"pipeline": "nope"},
    {"seed": -1},
    {"seed": 2 ** 64},
    {"model": {"alpha": 1.5}},                       # recurrent
    {"pipeline": "duality", "model": {"p": 1.0}},
    {"pipeline": "duality", "campaign": {"replicas": 1}},
    {"pipeline": "duality", "campaign": {"sites": [[0, 1]]}},
    {"pipeline": "stationary", "campaign": {"T_burn": 0.0}},
    {"pipeline": "occupation", "campaign": {"t_grid": [0.5, 2.0]}},
    {"pipeline": "occupation", "lattice": {"L": 64}, "campaign": {"method": "torus", "N": [4096]}},
    {"pipeline": "lclt", "numerics": {"M": 100}},
    {"pipeline": "lclt", "numerics": {"M": 16, "lclt_N": [64]}},
    {"pipeline": "report"},
])
def test_config_validation(raw):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(raw).validate()


def test_lclt_allows_recurrent():
    ExperimentConfig.from_dict({"pipeline": "lclt", "model": {"alpha": 1.5}}).validate()


# ---- experiments and CLI

def _write(tmp_path, text):
    p = tmp_path / "cfg.yaml"
    p.write_text(text)
    return str(p)


def test_constants_bundle(tmp_path):
    cfg = ExperimentConfig.from_dict({"pipeline": "constants", "output": str(tmp_path / "o")})
    run_experiment(cfg)
    doc = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert doc["status"] == "complete"
    c = doc["constants"]
    assert c["C"]["value"] > 0 and "module" in c["C"]["provenance"]
    assert abs(doc["identity"]["relative_gap"]["value"]) < 1e-2
    assert doc["seed"]["master"] == 0
    with open(tmp_path / "o" / "tables.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["section", "key", "column", "value"] and len(rows) > 10


def test_cli_refuses_recurrent(tmp_path, capsys):
    cfg = _write(tmp_path, "model: {d: 1, alpha: 1.5}\n")
    assert main(["constants", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "recurrent" in capsys.readouterr().err.lower()


def test_cli_refuses_unknown_key(tmp_path, capsys):
    cfg = _write(tmp_path, "model: {alfa: 0.5}\n")
    assert main(["constants", "--config", cfg]) == 2
    assert "alfa" in capsys.readouterr().err


def test_cli_refuses_other_pipeline(tmp_path):
    cfg = _write(tmp_path, "pipeline: duality\n")
    assert main(["constants", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_cli_bad_threads_and_missing_file(tmp_path):
    assert main(["constants", "--threads", "0", "--out", str(tmp_path / "o")]) == 2
    assert main(["constants", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_cli_duality(tmp_path, capsys):
    cfg = _write(tmp_path, "pipeline: duality\nlattice: {L: 32}\ncampaign: {t: 2.0, replicas: 300, sites: [0, 1]}\n")
    out = tmp_path / "d"
    assert main(["duality", "--config", cfg, "--out", str(out), "--seed", "11"]) == 0
    txt = capsys.readouterr().out
    assert "z=" in txt and f"wrote {out}" in txt
    doc = json.loads((out / "summary.json").read_text())
    assert doc["config"]["seed"] == 11 and doc["z_reports"]


def test_cli_report(tmp_path):
    a = tmp_path / "a"
    assert main(["constants", "--out", str(a)]) == 0
    cfg = _write(tmp_path, f"pipeline: report\ncampaign: {{inputs: ['{a}']}}\n")
    assert main(["report", "--config", cfg, "--out", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r" / "summary.json").exists()
