"""Command line entry points: ``mc3dtrack {track,simulate,evaluate,sweep-tau,reconfig}``.

Every command is a pure function of its inputs and ``--seed``; the files it
writes are byte-identical across reruns. Input problems exit with status 2.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import experiments as ex
from .estimator import MultiCameraTracker
from .geometry import GeometryError, dump_calibration, load_calibration
from .io import IngestionError, read_detections, read_trajectories, trajectory_records, write_detections, write_trajectories
from .metrics import MetricConfig, TrajectorySet, UndefinedMetricError, evaluate
from .simulator import InvalidScenarioError, Scenario, dump_scenario, load_scenario, scenario_from_record, simulate
from .validation import ConfigError, as_frame_list, check_cameras

log = logging.getLogger("mc3dtrack")

EXIT_INPUT = 2
KEYPOINT_CONVENTIONS = (15, 18, 25)
DEFAULT_GRID = (2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 15.0, 17.0)

# command-line flag -> estimator parameter
TRACKER_FLAGS = {
    "tau_c": "tau_c",
    "tau_g": "tau_g",
    "max_misses": "max_misses",
    "bandwidth": "bandwidth",
    "min_cluster_size": "min_cluster_size",
    "keypoints": "n_keypoints",
}


@dataclass
class RunConfig:
    tracker: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    burn_in: int = 0
    seed: int | None = None

    @classmethod
    def from_record(cls, rec: dict) -> "RunConfig":
        unknown = set(rec) - {"version", "tracker", "metrics", "burn_in", "seed"}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(dict(rec.get("tracker", {})), dict(rec.get("metrics", {})), int(rec.get("burn_in", 0)), rec.get("seed"))

    def estimator(self) -> MultiCameraTracker:
        valid = MultiCameraTracker().get_params()
        unknown = set(self.tracker) - set(valid)
        if unknown:
            raise ConfigError(f"unknown tracker settings {sorted(unknown)}")
        return MultiCameraTracker(**self.tracker)

    def tracker_config(self):
        try:
            return self.estimator().tracker_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def metric_config(self) -> MetricConfig:
        try:
            return MetricConfig(**self.metrics)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"metrics: {exc}") from None


def load_run_config(args) -> RunConfig:
    """``--config`` (a path or the name of a bundled config) plus flag overrides."""
    rec = {}
    if args.config:
        path = Path(args.config)
        if path.exists():
            rec = json.loads(path.read_text())
        else:
            try:
                rec = ex.bundled(f"{args.config}_config.json")
            except FileNotFoundError:
                raise ConfigError(f"config {args.config!r} is neither a file nor a bundled config") from None
    cfg = RunConfig.from_record(rec)
    for flag, param in TRACKER_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            cfg.tracker[param] = value
    for flag in ("distance", "ospa_cutoff", "ospa_window"):
        value = getattr(args, flag, None)
        if value is not None:
            cfg.metrics[flag] = value
    if getattr(args, "burn_in", None) is not None:
        cfg.burn_in = args.burn_in
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _scenario(args, cfg: RunConfig) -> Scenario:
    if args.scenario:
        scenario = load_scenario(args.scenario)
    else:
        scenario = scenario_from_record(ex.bundled("standard_scenario.json"))
    if cfg.seed is not None:
        scenario = replace(scenario, seed=int(cfg.seed))
    if getattr(args, "keypoints", None) is not None:
        scenario = replace(scenario, n_keypoints=args.keypoints)
    return scenario


def _emit(args, rows: list[dict], text_lines: list[str]) -> None:
    if args.report == "records":
        for row in rows:
            print(json.dumps(row, sort_keys=True))
    else:
        for line in text_lines:
            print(line)


def _fmt(value) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def _write_series(path, series) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "ospa2"])
        for t, v in enumerate(series):
            w.writerow([t, repr(float(v))])


# commands ------------------------------------------------------------------


def cmd_track(args) -> int:
    cfg = load_run_config(args)
    cameras = check_cameras(load_calibration(args.calibration))
    frames, P = read_detections(args.detections)
    n_keypoints = cfg.tracker.get("n_keypoints", P if P is not None else 15)
    if P is not None and P != n_keypoints:
        raise ConfigError(f"detections carry {P} keypoints but the tracker expects {n_keypoints}")
    cfg.tracker["n_keypoints"] = n_keypoints
    known = {c.id for c in cameras}
    for t, per_cam in frames.items():
        missing = set(per_cam) - known
        if missing:
            raise ConfigError(f"frame {t}: detections from camera(s) {sorted(missing)} absent from the calibration")
    frame_list = as_frame_list(frames)
    est, fps = ex.track_frames(frame_list, cameras, cfg.tracker_config())
    write_trajectories(args.output, trajectory_records(est), n_keypoints)
    row = {"frames": len(frame_list), "tracks": len(est.ids), "records": len(est), "fps_star": fps}
    _emit(args, [row], [f"frames {row['frames']}  tracks {row['tracks']}  records {row['records']}  FPS* {fps:.1f}"])
    return 0


def cmd_simulate(args) -> int:
    cfg = load_run_config(args)
    scenario = _scenario(args, cfg)
    gt, frames = simulate(scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_calibration(scenario.cameras, out / "calibration.json")
    dump_scenario(scenario, out / "scenario.json")
    write_detections(out / "detections.csv", enumerate(frames), scenario.n_keypoints)
    write_trajectories(out / "groundtruth.csv", trajectory_records(TrajectorySet.from_ground_truth(gt)), scenario.n_keypoints)
    n_det = sum(len(d) for f in frames for d in f.values())
    row = {"frames": scenario.n_frames, "detections": n_det, "actors": len(scenario.actors), "out": str(out)}
    _emit(args, [row], [f"wrote {n_det} detections for {len(scenario.actors)} actors over {scenario.n_frames} frames to {out}"])
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_run_config(args)
    gt, _ = read_trajectories(args.gt)
    est, _ = read_trajectories(args.est)
    if not gt.times:
        raise ConfigError(f"{args.gt}: no ground-truth records")
    n_frames = max(gt.times[-1], est.times[-1] if est.times else 0) + 1
    metric = cfg.metric_config()
    try:
        rec = evaluate(gt, est, metric, times=ex.scored_times(n_frames, cfg.burn_in))
    except UndefinedMetricError as exc:
        raise ConfigError(str(exc)) from None
    if args.ospa_series:
        from .metrics import ospa2

        _write_series(args.ospa_series, ospa2(gt, est, metric))
    keys = ("mota", "fp", "fn", "ids", "idf1", "ospa2", "rmse", "mpjpe", "pck")
    _emit(args, [rec], [f"{k:<6} {_fmt(rec[k])}" for k in keys])
    return 0


def _parse_grid(text: str) -> list[float]:
    parts = [p for p in text.replace(",", " ").split() if p]
    if not parts:
        raise ConfigError("the threshold grid is empty")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"bad threshold grid {text!r}") from None


def cmd_sweep_tau(args) -> int:
    cfg = load_run_config(args)
    grid = _parse_grid(args.grid)
    scenario = _scenario(args, cfg)
    rows = ex.tau_sweep(scenario, cfg.tracker_config(), grid, cfg.metric_config(), burn_in=cfg.burn_in)
    keep = ("tau_c", "mota", "idf1", "ospa2")
    rows = [{k: r[k] for k in keep} for r in rows]
    lines = ["tau_c    mota    idf1   ospa2"] + [
        f"{r['tau_c']:5.1f} {r['mota']:7.4f} {r['idf1']:7.4f} {r['ospa2']:7.4f}" for r in rows
    ]
    _emit(args, rows, lines)
    return 0


def cmd_reconfig(args) -> int:
    cfg = load_run_config(args)
    scenario = _scenario(args, cfg)
    segments = ex.load_schedule(args.schedule) if args.schedule else ex.load_default_schedule(scenario.n_frames)
    run, series, summary = ex.reconfiguration_run(scenario, segments, cfg.tracker_config(), cfg.metric_config())
    if args.ospa_series:
        _write_series(args.ospa_series, series)
    lines = ["frames      cameras     ospa2"] + [
        f"{s['start']:>4}-{s['end']:<5} {','.join(map(str, s['cameras'])):<11} {s['ospa2']:.4f}" for s in summary
    ]
    _emit(args, summary, lines)
    return 0


# parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config, or the name of a bundled one (e.g. 'scenario')")
    common.add_argument("--seed", type=int, help="scenario seed override")
    common.add_argument("--report", choices=("text", "records"), default="text", help="stdout format")
    common.add_argument("-v", "--verbose", action="store_true")

    tracker = argparse.ArgumentParser(add_help=False)
    tracker.add_argument("--tau-c", dest="tau_c", type=float, help="assignment cost threshold")
    tracker.add_argument("--tau-g", dest="tau_g", type=float, help="ground-plane gate radius (m)")
    tracker.add_argument("--max-misses", dest="max_misses", type=int, help="tentative frames before termination")
    tracker.add_argument("--bandwidth", type=float, help="birth clustering bandwidth (m)")
    tracker.add_argument("--min-cluster-size", dest="min_cluster_size", type=int, help="detections needed for a birth")
    tracker.add_argument("--keypoints", type=int, choices=KEYPOINT_CONVENTIONS, help="joints per skeleton")

    metrics = argparse.ArgumentParser(add_help=False)
    metrics.add_argument("--distance", choices=("euclidean", "giou"))
    metrics.add_argument("--ospa-cutoff", dest="ospa_cutoff", type=float)
    metrics.add_argument("--ospa-window", dest="ospa_window", type=int)
    metrics.add_argument("--burn-in", dest="burn_in", type=int, help="leading frames left out of RMSE/MPJPE/PCK")

    p = argparse.ArgumentParser(prog="mc3dtrack", description="Multi-camera 3D tracking, simulation and scoring.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("track", parents=[common, tracker], help="track a detection file")
    s.add_argument("--calibration", required=True)
    s.add_argument("--detections", required=True)
    s.add_argument("--output", required=True, help="trajectory file to write")
    s.set_defaults(func=cmd_track)

    s = sub.add_parser("simulate", parents=[common], help="render a synthetic scenario")
    s.add_argument("--scenario", help="scenario JSON (default: the bundled standard scenario)")
    s.add_argument("--keypoints", type=int, choices=KEYPOINT_CONVENTIONS)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("evaluate", parents=[common, metrics], help="score trajectories against ground truth")
    s.add_argument("--gt", required=True)
    s.add_argument("--est", required=True)
    s.add_argument("--ospa-series", dest="ospa_series", help="write the OSPA(2)-vs-frame series as CSV")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep-tau", parents=[common, tracker, metrics], help="MOTA/IDF1/OSPA(2) over cost thresholds")
    s.add_argument("--scenario")
    s.add_argument("--grid", default=",".join(str(g) for g in DEFAULT_GRID), help="comma-separated thresholds")
    s.set_defaults(func=cmd_sweep_tau)

    s = sub.add_parser("reconfig", parents=[common, tracker, metrics], help="track under a camera on/off schedule")
    s.add_argument("--scenario")
    s.add_argument("--schedule", help="schedule JSON (default: the bundled five-configuration schedule)")
    s.add_argument("--ospa-series", dest="ospa_series", help="write the OSPA(2)-vs-frame series as CSV")
    s.set_defaults(func=cmd_reconfig)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (IngestionError, ConfigError, InvalidScenarioError, GeometryError, OSError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"mc3dtrack {args.command}: error: {msg}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
