"""Command-line interface: ``stf run``, ``stf fit`` and ``stf scenarios export``."""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

import numpy as np

from stf.errors import StfError
from stf.inference import MODES, StfConfig, run_stf
from stf.observation import Observation


def read_observations(path) -> list[list[Observation]]:
    """Parse ``time,sensor_id,dim0..`` rows into scans grouped by time."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise StfError(f"cannot read observations {p}: {exc.strerror}") from None
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise StfError(f"{p}: empty file")
    header = [h.strip() for h in rows[0]]
    if header[:2] != ["time", "sensor_id"] or len(header) < 3:
        raise StfError(f"{p}: header must be time,sensor_id,dim0..; got {','.join(header)}")
    obs = []
    for line, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise StfError(f"{p}:{line}: expected {len(header)} fields, got {len(row)}")
        try:
            obs.append(Observation(float(row[0]), int(row[1]), [float(v) for v in row[2:]]))
        except ValueError as exc:
            raise StfError(f"{p}:{line}: {exc}") from None
    if not obs:
        raise StfError(f"{p}: no observations")
    obs.sort(key=lambda o: (o.time, o.sensor_id))
    scans: list[list[Observation]] = []
    for o in obs:
        if scans and scans[-1][0].time == o.time:
            scans[-1].append(o)
        else:
            scans.append([o])
    return scans


def fit_series(scans, window: int, order: int, mode: str, horizon: int, delay: int) -> tuple[np.ndarray, np.ndarray]:
    """Sliding-window fits of directly observed positions (identity model)."""
    times = np.array([s[0].time for s in scans])
    interval = float(np.median(np.diff(times))) if len(times) > 1 else 1.0
    config = StfConfig(window_count=window, order=order, delay_steps=delay, horizon_steps=horizon, nominal_interval=interval)
    fallback = np.array([np.mean([o.value for o in s], axis=0) for s in scans])
    run = run_stf(scans, config, fallback=fallback)
    if mode == "online":
        est = run.online()
    elif mode == "delayed":
        est = run.delayed()
    elif mode == "smoothed":
        est = run.smoothed()
    else:
        est = run.forecast()
    return times, est


def _write_series(path, times, est) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time"] + [f"dim{i}" for i in range(est.shape[1])])
    for t, x in zip(times, est):
        w.writerow([format(t, ".17g")] + [format(v, ".17g") for v in x])
    if path is None:
        sys.stdout.write(buf.getvalue())
    else:
        Path(path).write_text(buf.getvalue())


def _cmd_run(args) -> int:
    from stf.bench import emit_report, load_config, run_campaign
    from stf.bench.campaign import report_csv

    config = load_config(args.config)
    if args.jobs is not None:
        config = config.model_copy(update={"jobs": args.jobs})
    report = run_campaign(config)
    written = []
    if config.output.csv:
        written += emit_report(report, "csv", config.output.csv)
    if config.output.json_path:
        written += emit_report(report, "json", config.output.json_path)
    if not written:
        sys.stdout.write(report_csv(report))
    for p in written:
        print(f"wrote {p}", file=sys.stderr)
    return 0


def _cmd_fit(args) -> int:
    scans = read_observations(args.obs)
    times, est = fit_series(scans, args.window, args.order, args.mode, args.horizon, args.delay)
    _write_series(args.out, times, est)
    return 0


def _cmd_export(args) -> int:
    from stf.bench.campaign import simulate_run
    from stf.bench.registry import CONFIG_CLASSES
    from stf.scenarios.common import observations_csv, truth_csv

    sconfig = CONFIG_CLASSES[args.id]()
    truth, scans = simulate_run(args.id, sconfig, args.seed, 0)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"scenario{args.id}_seed{args.seed}"
    obs_path, truth_path = out / f"{stem}_obs.csv", out / f"{stem}_truth.csv"
    obs_path.write_text(observations_csv(scans))
    truth_path.write_text(truth_csv(sconfig.times(), truth))
    print(f"wrote {obs_path}\nwrote {truth_path}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stf", description="Trajectory fitting and tracking benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte-Carlo campaign from a JSON config")
    run.add_argument("--config", required=True)
    run.add_argument("--jobs", type=int, default=None, help="override the config's worker count")
    run.set_defaults(func=_cmd_run)

    fit = sub.add_parser("fit", help="fit position observations from a CSV file")
    fit.add_argument("--obs", required=True, help="CSV with header time,sensor_id,dim0..")
    fit.add_argument("--window", type=int, default=10)
    fit.add_argument("--order", type=int, default=2)
    fit.add_argument("--mode", choices=MODES, default="online")
    fit.add_argument("--horizon", type=int, default=5)
    fit.add_argument("--delay", type=int, default=5)
    fit.add_argument("--out", default=None, help="output CSV (default stdout)")
    fit.set_defaults(func=_cmd_fit)

    scen = sub.add_parser("scenarios", help="scenario utilities")
    ssub = scen.add_subparsers(dest="action", required=True)
    exp = ssub.add_parser("export", help="write one run's observations and truth as CSV")
    exp.add_argument("--id", type=int, choices=(1, 2, 3), required=True)
    exp.add_argument("--seed", type=int, default=0)
    exp.add_argument("--out-dir", default=".")
    exp.set_defaults(func=_cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (StfError, OSError, ValueError) as exc:
        print(f"stf: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
