import csv
import json
import xml.etree.ElementTree as ET
from dataclasses import replace

import numpy as np
import pytest

from safebems import cli
from safebems.agent import ActionTable
from safebems.data import BuildingSpec, write_building_csv
from safebems.harness import (
    Corpus,
    EvalRow,
    IdlePolicy,
    RandomPolicy,
    RBCPolicy,
    RunConfig,
    emit_report,
    evaluate,
    offpeak_mask,
    rbc_action,
    read_evaluations,
    run_pipeline,
    summarize,
)

TINY = {
    "data": {"n_buildings": 10, "m": 336},
    "clustering": {"w": 2, "w_max": 4},
    "agent": {"episodes": 2, "horizon": 96, "norm_steps": 300, "minibatch": 32},
    "forecaster": {"epochs": 1, "hidden": 8, "layers": 1},
    "tariffs": {"n_scenarios": 2},
    "evaluation": {"trace_hours": 48},
}


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = RunConfig.from_dict(TINY)
    run_pipeline(cfg, out)
    return cfg, out


def test_config_roundtrip(tmp_path):
    cfg = RunConfig.from_dict(TINY)
    back = RunConfig.load(cfg.save(tmp_path / "c.json"))
    assert back == cfg
    assert back.to_dict() == cfg.to_dict()


@pytest.mark.parametrize("bad", [
    {"bogus": 1},
    {"data": {"n_buildings": 1}},
    {"data": {"nope": 3}},
    {"clustering": {"w_min": 1}},
    {"clustering": {"metric": "cosine"}},
    {"env": {"zeta": 1.5}},
    {"env": {"reward_scale": -1}},
    {"evaluation": {"scenario_policies": ["magic"]}},
    {"schema_version": 99},
    {"data": {"tariff_csv": "/does/not/exist.csv"}},
])
def test_config_rejects(bad):
    with pytest.raises((ValueError, TypeError)):
        RunConfig.from_dict(bad)


def test_rbc_examples():
    t = ActionTable(10)
    full = np.ones(21, dtype=bool)
    assert t.values[rbc_action(full, t, True, False, 0.1)] == pytest.approx(-0.1)
    assert t.values[rbc_action(full, t, False, True, 0.1)] == pytest.approx(0.1)
    assert rbc_action(full, t, False, False) == t.idle
    no_charge = full.copy()
    no_charge[11:] = False
    # a full store cannot charge off-peak
    assert rbc_action(no_charge, t, False, True) == t.idle
    empty = full.copy()
    empty[:10] = False
    assert rbc_action(empty, t, True, False) == t.idle


def test_offpeak_mask(small_tariff):
    off = offpeak_mask(small_tariff)
    assert off.any() and not (off & small_tariff.peak_mask()).any()
    assert np.all(small_tariff.price[off] == small_tariff.price.min())


def test_rbc_full_year_safe(small_corpus, small_tariff):
    for b in small_corpus.buildings[:3]:
        row = evaluate(RBCPolicy(0.2), b, small_tariff)
        assert row.violations == 0
        assert row.norm_price < 1.0


def test_random_policy(small_corpus, small_tariff):
    b = small_corpus.buildings[0]
    a = evaluate(RandomPolicy(3), b, small_tariff)
    assert a == evaluate(RandomPolicy(3), b, small_tariff)
    assert a.violations == 0
    # uniform over the valid set: chi-square on a fixed mask
    rng = np.random.default_rng(0)
    from safebems.harness import random_action

    mask = np.zeros(21, dtype=bool)
    mask[[2, 5, 10, 11, 20]] = True
    draws = np.array([random_action(mask, rng) for _ in range(20_000)])
    assert set(np.unique(draws)) == {2, 5, 10, 11, 20}
    counts = np.bincount(draws, minlength=21)[mask]
    chi2 = ((counts - 4000) ** 2 / 4000).sum()
    assert chi2 < 18.5  # p ~ 0.001 at 4 dof


def test_zero_capacity_is_baseline(small_corpus, small_tariff):
    b = replace(small_corpus.buildings[0], esu_capacity=0.0)
    for policy in (IdlePolicy(), RandomPolicy(1), RBCPolicy()):
        row = evaluate(policy, b, small_tariff)
        assert row.norm_price == 1.0 and row.norm_carbon == 1.0


def test_idle_matches_baseline(small_corpus, small_tariff):
    row = evaluate(IdlePolicy(), small_corpus.buildings[1], small_tariff)
    assert row.cost_price == pytest.approx(row.base_price)


def test_evaluate_horizon_check(small_corpus, small_tariff):
    with pytest.raises(ValueError):
        evaluate(IdlePolicy(), small_corpus.buildings[0], small_tariff, horizon=10**6)


def test_report_tables(tmp_path):
    rows = []
    for k in (0, 1):
        for pol in ("ppo", "random"):
            for sc in ("nominal", "s000", "s001"):
                for b in ("a", "b"):
                    v = 0.1 + 1 / 3 + k + len(pol) + len(sc) / 7
                    rows.append(EvalRow(b, k, pol, sc, v, v / 2, 1.0, 1.0, v, v / 2, 0))
    paths = emit_report(rows, tmp_path)
    assert read_evaluations(paths["evaluations"]) == rows
    nominal, stochastic = summarize(rows)
    assert len(nominal) == 4 and len(stochastic) == 4
    with open(paths["table1_nominal"]) as fh:
        table = list(csv.DictReader(fh))
    assert [(int(r["cluster"]), r["policy"]) for r in table] == [(0, "ppo"), (0, "random"), (1, "ppo"), (1, "random")]
    assert float(table[0]["norm_price"]) == nominal[0]["norm_price"]
    report = json.loads(paths["json"].read_text())
    assert report["table3_stochastic"][0]["n_scenarios"] == 2
    with pytest.raises(ValueError):
        emit_report([], tmp_path)


def test_pipeline_artifacts(tiny_run):
    cfg, out = tiny_run
    w = cfg.clustering.w
    assert sorted(p.name for p in (out / "policies").glob("cluster*.json")) == [f"cluster{k}.json" for k in range(w)]
    for name in ("distance_matrix.csv", "dendrogram.json", "cluster_model.json", "assignments.csv", "selection.csv"):
        assert (out / "cluster" / name).stat().st_size > 0
    rows = read_evaluations(out / "report" / "evaluations.csv")
    assert all(r.violations == 0 for r in rows)
    _, held = Corpus([None] * cfg.data.n_buildings, None).split(cfg.data.holdout_every)
    nominal = [r for r in rows if r.scenario == "nominal"]
    assert len(nominal) == 3 * len(held)
    assert {r.scenario for r in rows} == {"nominal", "s000", "s001"}
    manifest = json.loads((out / "scenarios" / "manifest.json").read_text())
    assert len(manifest["scenarios"]) == 2
    for svg in (out / "plots").glob("*.svg"):
        assert svg.stat().st_size > 0
        ET.parse(svg)
    assert {"dendrogram.svg", "clusters.svg", "learning_curves.svg"} <= {p.name for p in (out / "plots").glob("*.svg")}


def test_cli_stages(tiny_run, tmp_path, capsys):
    cfg, out = tiny_run
    conf = str(out / "config.json")
    assert cli.main(["report", "--config", conf, "--out-dir", str(out)]) == 0
    assert "cluster 0" in capsys.readouterr().out
    assert cli.main(["classify", "--config", conf, "--out-dir", str(out)]) == 0
    corpus_dir = tmp_path / "data"
    assert cli.main(["synthesize", "--config", conf, "--out-dir", str(tmp_path)]) == 0
    one = sorted((corpus_dir / "buildings").glob("*.csv"))[0]
    capsys.readouterr()
    assert cli.main(["classify", "--config", conf, "--out-dir", str(out), "--building", str(one)]) == 0
    text = capsys.readouterr().out
    assert "cluster" in text and "policies" in text
    assert cli.main(["tariffs", "--config", conf, "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "scenarios" / "manifest.json").exists()


def test_cli_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"env": {"zeta": 2}}))
    assert cli.main(["cluster", "--config", str(bad), "--out-dir", str(tmp_path)]) == 2
    assert "[config]" in capsys.readouterr().err
    assert cli.main(["evaluate", "--out-dir", str(tmp_path / "empty")]) == 1
    err = capsys.readouterr().err
    assert err.startswith("[evaluate]") and "cluster_model.json" in err
    capsys.readouterr()
    with pytest.raises(SystemExit):
        cli.main(["nonsense"])


def test_csv_buildings(tmp_path, small_corpus):
    d = tmp_path / "b"
    for b in small_corpus.buildings[:4]:
        write_building_csv(b, d / f"{b.building_id}.csv")
    cfg = RunConfig.from_dict({"data": {"building_dir": str(d), "n_buildings": 4}})
    from safebems.harness import load_corpus

    corpus = load_corpus(cfg)
    assert len(corpus.buildings) == 4 and corpus.labels is None
    assert all(isinstance(b, BuildingSpec) and b.esu_capacity > 0 for b in corpus.buildings)
