"""Monte-Carlo campaign runner and report emission."""

from __future__ import annotations

import csv
import io
import json
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from stf.bench.config import CampaignConfig
from stf.bench.registry import check_estimators, family_of, scenario_module

TRUTH, NOISE, ESTIMATOR = 0, 1, 2


@dataclass(frozen=True)
class EstimatorSummary:
    name: str
    mean_rmse: float
    mean_time_s: float | None
    step_rmse: tuple[float, ...]


@dataclass(frozen=True)
class CampaignReport:
    """One row per estimator, in the order requested.

    ``mean_time_s`` is ``None`` when timing was disabled.
    """

    scenario: int
    runs: int
    seed: int
    rows: tuple[EstimatorSummary, ...]

    def row(self, name: str) -> EstimatorSummary:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def mean_rmse(self) -> dict[str, float]:
        return {r.name: r.mean_rmse for r in self.rows}


def run_streams(seed: int, run: int, family: str | None = None) -> dict[str, np.random.Generator]:
    """Independent generators for one run, keyed by role.

    Each role has its own ``SeedSequence`` child derived from
    ``(seed, run, role)``; estimator streams also mix in the family name so
    adding an estimator family leaves every other draw unchanged.
    """

    def gen(*key):
        return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))

    out = {"truth": gen(run, TRUTH), "noise": gen(run, NOISE)}
    if family is not None:
        out["estimator"] = gen(run, ESTIMATOR, zlib.crc32(family.encode()))
    return out


def simulate_run(scenario: int, sconfig, seed: int, run: int):
    """Truth states and observation scans of one run."""
    mod = scenario_module(scenario)
    streams = run_streams(seed, run)
    truth = mod.simulate_truth(sconfig, streams["truth"])
    scans = mod.observe(sconfig, truth, streams["noise"])
    return truth, scans


def _one_run(args):
    scenario, sconfig, seed, run, names = args
    mod = scenario_module(scenario)
    truth, scans = simulate_run(scenario, sconfig, seed, run)
    target = mod.position(truth)
    fam_of = family_of(scenario)
    families = list(dict.fromkeys(fam_of[n] for n in names))
    outputs = {}
    for fam in families:
        fn, _ = mod.FAMILIES[fam]
        rng = run_streams(seed, run, fam)["estimator"]
        outputs.update(fn(sconfig, scans, rng=rng, truth=truth))
    err2 = {}
    secs = {}
    for n in names:
        est, t = outputs[n]
        est = np.asarray(est, dtype=float).reshape(target.shape)
        err2[n] = np.sum((est - target) ** 2, axis=1)
        secs[n] = float(t)
    return err2, secs


def run_campaign(config: CampaignConfig) -> CampaignReport:
    """Run ``config.runs`` independent trials and aggregate RMSE and timing.

    Trials may run in a process pool (``config.jobs``); the reduction is
    ordered by run index so the report does not depend on parallelism.
    """
    names = check_estimators(config.scenario, config.estimator_list())
    sconfig = config.scenario_config()
    tasks = [(config.scenario, sconfig, config.seed, r, names) for r in range(config.runs)]
    if config.jobs > 1 and config.runs > 1:
        with ProcessPoolExecutor(max_workers=min(config.jobs, config.runs)) as pool:
            results = list(pool.map(_one_run, tasks))
    else:
        results = [_one_run(t) for t in tasks]
    rows = []
    for n in names:
        total = None
        time_total = 0.0
        for err2, secs in results:
            total = err2[n].copy() if total is None else total + err2[n]
            time_total += secs[n]
        per_step = np.sqrt(total / config.runs)
        rows.append(
            EstimatorSummary(
                name=n,
                mean_rmse=float(per_step.mean()),
                mean_time_s=time_total / config.runs if config.timing else None,
                step_rmse=tuple(float(v) for v in per_step),
            )
        )
    return CampaignReport(config.scenario, config.runs, config.seed, tuple(rows))


def _fmt(v: float | None) -> str:
    return "nan" if v is None else format(v, ".17g")


def report_csv(report: CampaignReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["estimator", "mean_rmse", "mean_time_s"])
    for r in report.rows:
        w.writerow([r.name, _fmt(r.mean_rmse), _fmt(r.mean_time_s)])
    return buf.getvalue()


def steps_csv(report: CampaignReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "estimator", "rmse"])
    for r in report.rows:
        for k, v in enumerate(r.step_rmse):
            w.writerow([k, r.name, _fmt(v)])
    return buf.getvalue()


def report_json(report: CampaignReport) -> str:
    doc = {
        "scenario": report.scenario,
        "runs": report.runs,
        "seed": report.seed,
        "estimators": [
            {"estimator": r.name, "mean_rmse": r.mean_rmse, "mean_time_s": r.mean_time_s, "step_rmse": list(r.step_rmse)}
            for r in report.rows
        ],
    }
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def parse_report_json(text: str) -> CampaignReport:
    doc = json.loads(text)
    rows = tuple(
        EstimatorSummary(
            name=e["estimator"],
            mean_rmse=float(e["mean_rmse"]),
            mean_time_s=None if e["mean_time_s"] is None else float(e["mean_time_s"]),
            step_rmse=tuple(float(v) for v in e["step_rmse"]),
        )
        for e in doc["estimators"]
    )
    return CampaignReport(int(doc["scenario"]), int(doc["runs"]), int(doc["seed"]), rows)


def steps_path(path) -> Path:
    """Companion per-step file: ``<stem>.steps.csv`` beside the report."""
    p = Path(path)
    return p.with_name(p.stem + ".steps.csv")


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write report {path}: {exc.strerror}") from None


def emit_report(report: CampaignReport, format: str, path) -> list[Path]:
    """Write the report; returns the paths written.

    CSV writes ``estimator,mean_rmse,mean_time_s`` plus the per-step companion
    ``step,estimator,rmse``. Non-finite RMSE values are rejected for JSON.
    """
    p = Path(path)
    if format == "csv":
        _write(p, report_csv(report))
        sp = steps_path(p)
        _write(sp, steps_csv(report))
        return [p, sp]
    if format == "json":
        if any(not math.isfinite(v) for r in report.rows for v in (r.mean_rmse, *r.step_rmse)):
            raise ValueError("report holds non-finite RMSE values; use CSV")
        _write(p, report_json(report))
        return [p]
    raise ValueError(f"unknown report format {format!r}; expected 'csv' or 'json'")
