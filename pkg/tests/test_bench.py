import json

import numpy as np
import pytest

from stf.bench import (
    CampaignConfig,
    emit_report,
    estimator_names,
    load_config,
    parse_config,
    parse_report_json,
    run_campaign,
    run_streams,
)
from stf.bench.campaign import steps_path
from stf.errors import ConfigError
from stf.scenarios import linear


def small(scenario=1, **kw):
    data = {"scenario": scenario, "runs": 3, "seed": 7, "timing": False}
    data.update(kw)
    return parse_config(data)


def test_minimal_config_defaults(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"scenario": 1}')
    cfg = load_config(p)
    assert cfg.runs == 100
    assert cfg.estimator_list() == estimator_names(1)
    assert cfg.scenario_config() == linear.Scenario1Config()


def test_runs_zero_rejected():
    with pytest.raises(ConfigError, match="runs"):
        parse_config({"scenario": 1, "runs": 0})


def test_unknown_key_named():
    with pytest.raises(ConfigError, match="colour"):
        parse_config({"scenario": 1, "colour": "red"})


def test_unknown_estimator_lists_registry():
    with pytest.raises(ConfigError) as info:
        parse_config({"scenario": 2, "estimators": ["kalman9000"]})
    assert "kalman9000" in str(info.value) and "ukf_imm" in str(info.value)


def test_empty_estimators_rejected():
    with pytest.raises(ConfigError, match="estimators"):
        parse_config({"scenario": 1, "estimators": []})


def test_bad_scenario_and_params():
    with pytest.raises(ConfigError, match="scenario"):
        parse_config({"scenario": 4})
    with pytest.raises(ConfigError, match="q_turn"):
        parse_config({"scenario": 1, "params": {"q_turn": 1.0}})


def test_param_and_stf_overrides():
    cfg = parse_config({"scenario": 3, "params": {"R": 1e5, "particles": 50}, "stf": {"window_count": 6}})
    s = cfg.scenario_config()
    assert s.R == 1e5 and s.particles == 50 and isinstance(s.particles, int)
    assert s.stf.window_count == 6 and s.stf.order == 3


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.json")
    p = tmp_path / "bad.json"
    p.write_text("{scenario: 1")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(p)


def test_oracle_estimator_zero_rmse():
    rep = run_campaign(small(runs=1, estimators=["truth"]))
    assert rep.row("truth").mean_rmse == 0.0


def test_streams_independent_of_composition():
    a = run_streams(5, 2, "pf")
    b = run_streams(5, 2, "ekf")
    assert a["truth"].random() == b["truth"].random()
    assert a["estimator"].random() != b["estimator"].random()
    full = run_campaign(small(3, runs=2, estimators=["pf", "o2_unbiased"], params={"particles": 30, "debias_samples": 5}))
    solo = run_campaign(small(3, runs=2, estimators=["o2_unbiased"], params={"particles": 30, "debias_samples": 5}))
    assert full.row("o2_unbiased") == solo.row("o2_unbiased")


def test_same_seed_identical_csv_bytes(tmp_path):
    cfg = small(estimators=["kf_wpv", "fit_online", "imm"])
    emit_report(run_campaign(cfg), "csv", tmp_path / "a.csv")
    emit_report(run_campaign(cfg), "csv", tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert steps_path(tmp_path / "a.csv").read_bytes() == steps_path(tmp_path / "b.csv").read_bytes()


def test_parallel_matches_serial():
    cfg = small(runs=4, estimators=["kf_wpv", "fit_delayed"])
    a = run_campaign(cfg)
    b = run_campaign(cfg.model_copy(update={"jobs": 8}))
    assert a == b


def test_different_seed_differs():
    a = run_campaign(small(estimators=["kf_wpv"]))
    b = run_campaign(small(estimators=["kf_wpv"], seed=8))
    assert a != b


def test_csv_schema_and_precision(tmp_path):
    rep = run_campaign(small(estimators=["kf_wpv", "truth"]))
    paths = emit_report(rep, "csv", tmp_path / "r.csv")
    lines = paths[0].read_text().splitlines()
    assert lines[0] == "estimator,mean_rmse,mean_time_s"
    name, value, secs = lines[1].split(",")
    assert name == "kf_wpv" and float(value) == rep.row("kf_wpv").mean_rmse and secs == "nan"
    assert value == format(rep.row("kf_wpv").mean_rmse, ".17g")
    steps = paths[1].read_text().splitlines()
    assert steps[0] == "step,estimator,rmse"
    assert len(steps) == 1 + 2 * linear.Scenario1Config().steps


def test_json_round_trip(tmp_path):
    rep = run_campaign(small(estimators=["kf_wpv", "imm_forecast"], timing=True))
    emit_report(rep, "json", tmp_path / "r.json")
    back = parse_report_json((tmp_path / "r.json").read_text())
    assert back == rep
    doc = json.loads((tmp_path / "r.json").read_text())
    assert set(doc["estimators"][0]) == {"estimator", "mean_rmse", "mean_time_s", "step_rmse"}


def test_timing_recorded_when_enabled():
    rep = run_campaign(small(runs=1, estimators=["kf_wpv"], timing=True))
    assert rep.row("kf_wpv").mean_time_s > 0


def test_emit_errors(tmp_path):
    rep = run_campaign(small(runs=1, estimators=["truth"]))
    with pytest.raises(OSError, match="missing"):
        emit_report(rep, "csv", tmp_path / "missing" / "r.csv")
    with pytest.raises(ValueError):
        emit_report(rep, "xml", tmp_path / "r.xml")


def test_config_model_rejects_directly():
    with pytest.raises(Exception):
        CampaignConfig(scenario=1, runs=-1)
