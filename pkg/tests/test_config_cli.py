import json
import math
import subprocess
import sys

import pytest

from sfpcontact.cli import EXIT_CONFIG, EXIT_OK, EXIT_PIPELINE, EXIT_RUNTIME, main
from sfpcontact.config import ConfigError, parse_config
from sfpcontact.graph import SfpParams, deserialize_graph, graph_from_edges, serialize_graph

MODEL = {"d": 2, "alpha": 2.5, "tau": 2.2, "rho": 0.05, "volume": 300}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def cli(tmp_path, cfg, command, *extra, out="out"):
    return main([command, "--config", write(tmp_path, cfg), "--out", str(tmp_path / out), *extra])


def manifest(tmp_path, out="out"):
    return json.loads((tmp_path / out / "manifest.json").read_text())


@pytest.fixture
def k2_file(tmp_path):
    g = graph_from_edges(SfpParams(1, 2.0, 2.5, 1.0, 10.0), [1.0, 2.0], [1.0, 1.0], [(0, 1)])
    path = tmp_path / "k2.sfp"
    serialize_graph(g, path)
    return str(path)


# -- configuration ----------------------------------------------------------

def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown keys"):
        parse_config({"model": MODEL, "bogus": 1})
    with pytest.raises(ConfigError, match="model: unknown keys"):
        parse_config({"model": dict(MODEL, colour=1)})
    with pytest.raises(ConfigError, match="dynamics"):
        parse_config({"model": MODEL, "dynamics": {"lambda": 1.0}})


def test_invalid_values_rejected():
    with pytest.raises(ConfigError, match="tau"):
        parse_config({"model": dict(MODEL, tau=1.0)})
    with pytest.raises(ConfigError):
        parse_config({"model": MODEL, "dynamics": {"lambdas": [-1.0]}})
    with pytest.raises(ConfigError):
        parse_config({"model": MODEL, "seed": -3})
    with pytest.raises(ConfigError, match="needs a 'partition'"):
        parse_config({"model": MODEL, "pipeline": "constellation_gt2"})
    with pytest.raises(ConfigError, match="L must"):
        parse_config({"model": dict(MODEL, d=1, alpha=2.0, tau=1.75), "pipeline": "constellation_12",
                      "layered": {"a": 0.5, "L": 0.1}})


def test_derived_echo():
    gamma = 2.5 * 1.2 / 2
    cfg = parse_config({"model": MODEL, "derived": {"gamma": gamma}})
    assert cfg.derived()["gamma"] == pytest.approx(1.5)
    with pytest.raises(ConfigError, match="does not match"):
        parse_config({"model": MODEL, "derived": {"gamma": 1.4}})
    with pytest.raises(ConfigError, match="not defined"):
        parse_config({"model": MODEL, "derived": {"k_n": 3}})
    lay = {"model": dict(MODEL, d=1, alpha=2.0, tau=1.75, volume=4000), "pipeline": "constellation_12",
           "layered": {"a": 0.7, "L": 0.6}}
    k_n = math.floor(0.7 * math.log(4000))
    assert parse_config(dict(lay, derived={"k_n": k_n})).derived()["k_n"] == k_n
    with pytest.raises(ConfigError):
        parse_config(dict(lay, derived={"k_n": k_n + 1}))


def test_config_hash_is_canonical():
    a = parse_config({"model": MODEL, "seed": 1})
    b = parse_config({"seed": 1, "model": dict(reversed(list(MODEL.items())))})
    assert a.hash() == b.hash()
    assert a.hash() != parse_config({"model": MODEL, "seed": 2}).hash()


# -- command line -----------------------------------------------------------

def test_exit_code_for_bad_config(tmp_path):
    assert cli(tmp_path, {"model": {"d": 2}, "bogus": 1}, "generate") == EXIT_CONFIG
    assert main(["generate", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    assert main(["generate", "--config", str(p)]) == EXIT_CONFIG


def test_generate_round_trip(tmp_path):
    cfg = {"model": MODEL, "seed": 4}
    assert cli(tmp_path, cfg, "generate") == EXIT_OK
    g = deserialize_graph(tmp_path / "out" / "graph.sfp")
    g.check_invariants()
    assert g.params.gamma == pytest.approx(1.5)
    m = manifest(tmp_path)
    assert m["status"] == "ok" and m["command"] == "generate"
    assert set(m) >= {"config_hash", "root_seed", "seeds", "version", "files", "wall_clock"}
    assert "graph.sfp" in m["files"]


def test_two_vertex_summary(tmp_path, k2_file):
    cfg = {"graph_file": k2_file, "dynamics": {"lambdas": [1.0], "t_max": 1e9, "n_rep": 20000}}
    assert cli(tmp_path, cfg, "simulate", "--threads", "2") == EXIT_OK
    row = json.loads((tmp_path / "out" / "summary.json").read_text())[0]
    assert abs(row["mean"] - 2.0) < 4 * row["sem"]
    assert row["censored_fraction"] == 0.0
    lines = (tmp_path / "out" / "replicas.jsonl").read_text().splitlines()
    assert len(lines) == 20000


def test_single_replica(tmp_path, k2_file):
    cfg = {"graph_file": k2_file, "dynamics": {"lambdas": [1.0], "n_rep": 1}}
    assert cli(tmp_path, cfg, "simulate", "--format", "csv") == EXIT_OK
    text = (tmp_path / "out" / "summary.csv").read_text().splitlines()
    assert len(text) == 2 and "nan" in text[1]


def test_reruns_are_byte_identical(tmp_path):
    cfg = {"model": MODEL, "seed": 11, "dynamics": {"lambdas": [0.3, 0.6], "t_max": 100, "n_rep": 40}}
    assert cli(tmp_path, cfg, "simulate", "--threads", "1", out="a") == EXIT_OK
    assert cli(tmp_path, cfg, "simulate", "--threads", "3", out="b") == EXIT_OK
    for f in ("replicas.jsonl", "summary.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert cli(tmp_path, cfg, "simulate", "--seed", "12", out="c") == EXIT_OK
    assert (tmp_path / "a" / "replicas.jsonl").read_bytes() != (tmp_path / "c" / "replicas.jsonl").read_bytes()
    assert manifest(tmp_path, "c")["root_seed"] == 12


def test_coupled_simulation(tmp_path):
    cfg = {"model": MODEL, "seed": 2,
           "dynamics": {"lambdas": [1.0, 0.5], "t_max": 50, "n_rep": 30, "coupled": True}}
    assert cli(tmp_path, cfg, "simulate") == EXIT_OK
    rows = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert [r["lambda"] for r in rows] == [0.5, 1.0]
    assert all(r["coupling_violations"] == 0 for r in rows)


def test_survival_needs_seed_vertex(tmp_path):
    cfg = {"model": MODEL, "pipeline": "survival", "dynamics": {"lambdas": [0.5], "t_max": 5}}
    assert cli(tmp_path, cfg, "simulate") == EXIT_CONFIG


def test_oracle(tmp_path, k2_file):
    cfg = {"graph_file": k2_file, "dynamics": {"lambdas": [1.0, 3.0]}}
    assert cli(tmp_path, cfg, "oracle", "--format", "csv") == EXIT_OK
    lines = (tmp_path / "out" / "oracle.csv").read_text().splitlines()
    assert lines[0] == "lambda,mean_extinction"
    assert [float(x) for x in lines[1].split(",")] == pytest.approx([1.0, 2.0])
    assert [float(x) for x in lines[2].split(",")] == pytest.approx([3.0, 3.0])
    big = {"model": MODEL, "seed": 1}
    assert cli(tmp_path, big, "oracle", out="big") == EXIT_RUNTIME
    assert manifest(tmp_path, "big")["status"] == "runtime_error"


def test_malformed_graph_file(tmp_path):
    bad = tmp_path / "bad.sfp"
    bad.write_text("garbage\n")
    assert cli(tmp_path, {"graph_file": str(bad)}, "simulate") == EXIT_RUNTIME


def test_constellation_failure_exit_code(tmp_path):
    cfg = {"model": dict(MODEL, alpha=3.0, tau=3.0, rho=1e-4, volume=4000), "pipeline": "constellation_gt2",
           "partition": {"mode": "explicit_sides", "coarse_side": 16.0, "level_sides": [8.0],
                         "nu_s": 0.5, "eta": 0.1}}
    assert cli(tmp_path, cfg, "constellation") == EXIT_PIPELINE
    fail = json.loads((tmp_path / "out" / "failure.json").read_text())
    assert fail["stage"] == "E1"
    cfg["model"]["rho"] = 50.0
    assert cli(tmp_path, cfg, "constellation", out="ok") == EXIT_OK
    con = json.loads((tmp_path / "ok" / "constellation.json").read_text())
    assert set(con) >= {"params", "J", "paths", "tree_edges"}


def test_experiment_synthetic(tmp_path):
    cfg = {"model": MODEL, "dynamics": {"n_rep": 5},
           "experiment": {"volumes": [100, 200, 400, 800], "synthetic_rate": 0.01}}
    assert cli(tmp_path, cfg, "experiment") == EXIT_OK
    fit = json.loads((tmp_path / "out" / "fit.json").read_text())
    assert fit["slope"] == pytest.approx(0.01) and fit["r2"] == pytest.approx(1.0)
    cfg["experiment"]["volumes"] = [100]
    assert cli(tmp_path, cfg, "experiment", out="few") == EXIT_CONFIG


def test_analyze(tmp_path):
    cfg = {"model": dict(MODEL, volume=5000), "analysis": {"n_pairs": 20}}
    assert cli(tmp_path, cfg, "analyze") == EXIT_OK
    res = json.loads((tmp_path / "out" / "analysis.json").read_text())
    assert 0 < res["largest_component_fraction"] <= 1
    assert len((tmp_path / "out" / "distances.csv").read_text().splitlines()) == 21


def test_module_entry_point(tmp_path, k2_file):
    cfg = write(tmp_path, {"graph_file": k2_file, "dynamics": {"lambdas": [1.0]}})
    r = subprocess.run([sys.executable, "-m", "sfpcontact.cli", "oracle", "--config", cfg,
                        "--out", str(tmp_path / "sub")], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    r = subprocess.run([sys.executable, "-m", "sfpcontact.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "--threads" in r.stdout
