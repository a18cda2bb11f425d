import copy
import json
import math

import numpy as np
import pytest
import yaml

from hawkesflow import harness
from hawkesflow.calibration import FitResult
from hawkesflow.cli import (EXIT_CONFIG, EXIT_MODEL, EXIT_NO_DATA, EXIT_OK, EXIT_PARTIAL, main)
from hawkesflow.config import ModelSpec, config_from_dict, load_config
from hawkesflow.errors import ConfigError
from hawkesflow.stationarity import StationarityReport

SIDE = {"knots": [0.3, 0.15, 0.15, 0.3],
        "kernels": {"buy": {"k": 0.03, "b": 0.01, "alpha": 0.5, "beta": 2.0},
                    "sell": {"k": 0.02, "b": 0.01, "alpha": 0.3, "beta": 1.5}}}
MIRROR = {"knots": SIDE["knots"], "kernels": {"buy": SIDE["kernels"]["sell"],
                                              "sell": SIDE["kernels"]["buy"]}}


def sim_config(**over):
    cfg = {"seed": 5, "kernel": "diff", "fit": {"restarts": 1},
           "simulation": {"days": 2, "trials": 2,
                          "marks": {"buy": {"kind": "lognormal", "mu": math.log(30), "sigma": 0.5},
                                    "sell": {"kind": "constant", "value": 32}},
                          "model": {"form": "difference", "buy": SIDE, "sell": MIRROR}}}
    cfg.update(over)
    return copy.deepcopy(cfg)


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "run.yaml"
    p.write_text(yaml.safe_dump(sim_config()))
    return p


def tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_config_parsing(tmp_path, cfg_file):
    cfg = load_config(cfg_file)
    assert cfg.seed == 5 and cfg.simulation.days == 2 and cfg.fit.restarts == 1
    pair = cfg.simulation.model.pair(cfg.sessions[0])
    assert pair.buy.kernel(2).alpha == 0.3 and pair.sell.kernel(1).alpha == 0.3
    assert ModelSpec.from_dict(cfg.simulation.model.to_dict()) == cfg.simulation.model
    for bad in ({"seeed": 1}, {"input": ["x"], **sim_config()}, {"fit": {"restarts": 0}},
                {"simulation": {"days": 1}}, {"fit": {"colour": 1}},
                {"simulation": {"model": {"buy": SIDE}}}):
        with pytest.raises(ConfigError):
            config_from_dict(bad)
    (tmp_path / "bad.yaml").write_text("seed: [1,\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.yaml")


def test_simulate_fit_stats_pipeline(tmp_path, cfg_file):
    sim = tmp_path / "sim"
    assert main(["simulate", "--config", str(cfg_file), "--out", str(sim)]) == EXIT_OK
    files = sorted((sim / "data").glob("*.csv"))
    assert len(files) == 4
    fit = tmp_path / "fit"
    assert main(["fit", str(sim / "data"), "--config", str(cfg_file), "--out", str(fit)]) == EXIT_OK
    assert len(list((fit / "fits").glob("*.json"))) == 8
    assert len(list((fit / "stationarity").glob("*.json"))) == 4
    doc = harness.read_json(fit / "fits" / "2020-01-06_morning_buy.json", "fit")
    res = FitResult.from_dict(doc["result"])
    assert res.theta.baseline.window.name == "morning"
    rep = StationarityReport.from_dict(harness.read_json(fit / "stationarity" / "2020-01-06_morning.json",
                                                         "stationarity"))
    assert rep.stationary
    rows = harness.read_csv(fit / "aggregate" / "ks_pvalues.csv")
    assert len(rows) == 8 and all(0 <= float(r["p_value"]) <= 1 for r in rows)
    bands = harness.read_csv(fit / "aggregate" / "baseline_bands.csv")
    assert len(bands) == 2 * 2 * 4
    assert all(math.isclose(float(b["upper"]) - float(b["mean"]), 2 * float(b["sd"]), abs_tol=1e-12)
               for b in bands)
    curves = harness.read_csv(fit / "aggregate" / "kernel_curves.csv")
    assert {(c["target"], c["source"]) for c in curves} == {("buy", "buy"), ("buy", "sell"),
                                                           ("sell", "buy"), ("sell", "sell")}
    qq = harness.read_csv(fit / "qq" / "2020-01-06_morning_buy.csv")
    assert len(qq) == res.n_events
    manifest = harness.read_json(fit / "manifest.json", "manifest")
    assert [d["file"] for d in manifest["inputs"]] == [f.name for f in files]
    assert all(len(d["sha256"]) == 64 for d in manifest["inputs"])
    st = tmp_path / "stats"
    assert main(["stats", str(sim / "data"), "--out", str(st)]) == EXIT_OK
    stats = harness.read_json(st / "stats.json", "stats")
    assert stats["median_volume_lots"]["sell"] == 32.0 and stats["n_days"] == 2


def test_fit_directly_from_simulation_spec_and_jobs(tmp_path, cfg_file):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["fit", "--config", str(cfg_file), "--out", str(a)]) == EXIT_OK
    assert main(["fit", "--config", str(cfg_file), "--out", str(b), "--jobs", "2"]) == EXIT_OK
    assert tree(a) == tree(b)
    c = tmp_path / "c"
    assert main(["fit", "--config", str(cfg_file), "--out", str(c), "--seed", "6"]) == EXIT_OK
    assert tree(a) != tree(c)


def test_recovery_command(tmp_path, cfg_file):
    out = tmp_path / "rec"
    assert main(["recovery", "--config", str(cfg_file), "--out", str(out)]) == EXIT_OK
    rep = harness.read_json(out / "recovery.json", "recovery")
    assert rep["trials"] == 2 and "median_p_cross_form" in rep
    assert len(rep["per_parameter_within_rate"]) == 24
    rows = harness.read_csv(out / "recovery_params.csv")
    assert len(rows) == 2 * 24


def test_error_exits(tmp_path, cfg_file, caplog):
    empty = tmp_path / "empty"
    empty.mkdir()
    out = tmp_path / "never"
    assert main(["fit", str(empty), "--out", str(out)]) == EXIT_NO_DATA
    assert not out.exists()
    assert main(["stats", str(empty), "--out", str(out)]) == EXIT_NO_DATA
    assert main(["simulate", "--out", str(out)]) == EXIT_CONFIG
    assert main(["fit", "--config", str(tmp_path / "missing.yaml")]) == EXIT_CONFIG
    assert not out.exists()
    hot = sim_config()
    hot["simulation"]["model"]["buy"]["kernels"]["buy"]["k"] = 5.0
    p = tmp_path / "hot.yaml"
    p.write_text(yaml.safe_dump(hot))
    assert main(["simulate", "--config", str(p), "--out", str(out)]) == EXIT_MODEL
    assert "spectral radius" in caplog.text
    assert main(["simulate", "--config", str(cfg_file), "--jobs", "0"]) == EXIT_CONFIG


def test_partial_results_preserved(tmp_path, cfg_file):
    data = tmp_path / "data"
    assert main(["simulate", "--config", str(cfg_file), "--out", str(tmp_path / "s")]) == EXIT_OK
    data.mkdir()
    src = sorted((tmp_path / "s" / "data").glob("*.csv"))
    (data / src[0].name).write_bytes(src[0].read_bytes())
    lines = src[1].read_text().splitlines()
    (data / src[1].name).write_text("\n".join(lines[:30]) + "\n")  # too few events to fit
    out = tmp_path / "fit"
    assert main(["fit", str(data), "--config", str(cfg_file), "--out", str(out)]) == EXIT_PARTIAL
    manifest = harness.read_json(out / "manifest.json", "manifest")
    assert len(manifest["failures"]) == 1 and "InsufficientEvents" in manifest["failures"][0]["error"]
    assert len(list((out / "fits").glob("*.json"))) == 2


def test_json_is_sorted_and_versioned(tmp_path):
    text = harness.dumps("x", {"b": np.float64(1.5), "a": [np.int64(2), float("nan")], "c": np.bool_(True)})
    doc = json.loads(text)
    assert doc == {"a": [2, None], "b": 1.5, "c": True, "generator": doc["generator"],
                   "schema": "x", "schema_version": harness.SCHEMA_VERSION}
    assert list(doc) == sorted(doc)
    p = tmp_path / "d.json"
    p.write_text(text)
    with pytest.raises(Exception):
        harness.read_json(p, "y")


def test_trading_calendar():
    assert harness.trading_date(0) == "2020-01-06"
    assert harness.trading_date(5) == "2020-01-13"
    assert len({harness.trading_date(i) for i in range(21)}) == 21
