"""Experiment drivers shared by the command line and the test suite."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .geometry import CameraModel
from .metrics import MetricConfig, TrajectorySet, evaluate, mpjpe, ospa2
from .simulator import Actor, Scenario, apply_deletion, circuit_actors, simulate, standard_scenario
from .tracker import TrackerConfig, TrackPool, step
from .validation import ConfigError, check_cameras

BURN_IN = 10


def track_frames(frames: Sequence, cameras: Sequence[CameraModel], cfg: TrackerConfig) -> tuple[TrajectorySet, float]:
    """Run the tracker over a frame list; returns the trajectories and FPS* of the loop."""
    cameras = check_cameras(cameras)
    pool = TrackPool()
    per_frame = []
    start = time.perf_counter()
    for t, dets in enumerate(frames):
        estimates, pool = step(pool, dets, cameras, cfg, t)
        per_frame.append(estimates)
    elapsed = time.perf_counter() - start
    fps = len(frames) / elapsed if elapsed > 0 else float("inf")
    return TrajectorySet.from_estimates(per_frame), fps


def scored_times(n_frames: int, burn_in: int = BURN_IN) -> range:
    """Frames that enter position and pose scores; the first ``burn_in`` let tracks converge."""
    return range(min(burn_in, n_frames), n_frames)


@dataclass
class Run:
    gt: TrajectorySet
    est: TrajectorySet
    fps: float
    n_frames: int

    def scores(self, metric: MetricConfig = MetricConfig(), burn_in: int = BURN_IN) -> dict:
        return evaluate(self.gt, self.est, metric, times=scored_times(self.n_frames, burn_in))


def run_scenario(scenario: Scenario, cfg: TrackerConfig, deletion_rate: float = 0.0, deletion_seed: int = 0, rendered=None) -> Run:
    """Simulate (unless ``rendered`` holds a ``(gt, frames)`` pair), optionally thin, and track."""
    gt, frames = rendered if rendered is not None else simulate(scenario)
    if deletion_rate > 0:
        frames = [apply_deletion(f, deletion_rate, deletion_seed, t) for t, f in enumerate(frames)]
    est, fps = track_frames(frames, scenario.cameras, cfg)
    return Run(TrajectorySet.from_ground_truth(gt), est, fps, scenario.n_frames)


def deletion_ablation(
    scenario: Scenario,
    cfg: TrackerConfig,
    rates: Iterable[float] = (0.0, 0.2, 0.3, 0.5),
    n_runs: int = 25,
    burn_in: int = BURN_IN,
) -> dict[float, list[float]]:
    """MPJPE (mm) per deletion rate and run; rate 0 is deterministic and run once."""
    rendered = simulate(scenario)
    times = scored_times(scenario.n_frames, burn_in)
    out = {}
    for rate in rates:
        seeds = [0] if rate == 0 else range(n_runs)
        out[float(rate)] = [
            mpjpe(r.gt, r.est, times=times)
            for r in (run_scenario(scenario, cfg, rate, s, rendered) for s in seeds)
        ]
    return out


def tau_sweep(
    scenario: Scenario,
    cfg: TrackerConfig,
    grid: Sequence[float],
    metric: MetricConfig = MetricConfig(),
    rendered=None,
    burn_in: int = BURN_IN,
) -> list[dict]:
    """One score record per cost threshold, all on the same rendered stream."""
    if len(grid) == 0:
        raise ConfigError("the threshold grid is empty")
    rendered = rendered if rendered is not None else simulate(scenario)
    rows = []
    for tau in grid:
        tuned = replace(cfg, gating=replace(cfg.gating, tau_c=float(tau)))
        rec = run_scenario(scenario, tuned, rendered=rendered).scores(metric, burn_in)
        rows.append({"tau_c": float(tau), **rec})
    return rows


# camera schedules ----------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    start: int
    end: int
    cameras: tuple[int, ...]


def parse_schedule(rec: dict) -> list[Segment]:
    try:
        segments = [Segment(int(s["start"]), int(s["end"]), tuple(sorted(int(c) for c in s["cameras"]))) for s in rec["segments"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed schedule: {exc}") from None
    if not segments:
        raise ConfigError("schedule has no segments")
    for a, b in zip(segments, segments[1:]):
        if b.start != a.end:
            raise ConfigError(f"schedule segments must be contiguous, gap at frame {a.end}")
    if any(s.end <= s.start for s in segments):
        raise ConfigError("schedule segments must have positive length")
    return segments


def load_schedule(path) -> list[Segment]:
    return parse_schedule(json.loads(Path(path).read_text()))


def schedule_intervals(segments: Sequence[Segment], camera_ids: Iterable[int]) -> dict[int, list[tuple[int, int]]]:
    """Per-camera on-intervals; unknown camera ids raise :class:`ConfigError`."""
    camera_ids = sorted(camera_ids)
    for s in segments:
        unknown = set(s.cameras) - set(camera_ids)
        if unknown:
            raise ConfigError(f"schedule references unknown camera(s) {sorted(unknown)}")
    out = {}
    for cam in camera_ids:
        spans: list[tuple[int, int]] = []
        for s in segments:
            if cam not in s.cameras:
                continue
            if spans and spans[-1][1] == s.start:
                spans[-1] = (spans[-1][0], s.end)
            else:
                spans.append((s.start, s.end))
        out[cam] = spans
    return out


def with_schedule(scenario: Scenario, segments: Sequence[Segment]) -> Scenario:
    if segments[0].start != 0 or segments[-1].end != scenario.n_frames:
        raise ConfigError(f"schedule must cover frames [0, {scenario.n_frames})")
    return replace(scenario, schedule=schedule_intervals(segments, [c.id for c in scenario.cameras]))


def reconfiguration_run(
    scenario: Scenario, segments: Sequence[Segment], cfg: TrackerConfig, metric: MetricConfig = MetricConfig()
) -> tuple[Run, np.ndarray, list[dict]]:
    """Track under a camera schedule.

    Returns the run, the OSPA(2) series (one value per frame) and one summary
    per segment holding the series value at the segment's last frame.
    """
    run = run_scenario(with_schedule(scenario, segments), cfg)
    series = ospa2(run.gt, run.est, metric)
    summary = [
        {"start": s.start, "end": s.end, "cameras": list(s.cameras), "ospa2": float(series[min(s.end, len(series)) - 1])}
        for s in segments
    ]
    return run, series, summary


# fixture scenarios -----------------------------------------------------------


def separated_scenario(seed: int = 0, **overrides) -> Scenario:
    """Three actors spread around the circuit, no clutter."""
    kw = dict(n_actors=3, clutter_rate=0.0)
    kw.update(overrides)
    return standard_scenario(seed, **kw)


def occlusion_scenario(gap: int, start: int = 60, n_frames: int = 180, seed: int = 0) -> Scenario:
    """One actor walking the circuit who vanishes from every camera for ``gap`` frames."""
    (actor,) = circuit_actors(1, n_frames)
    actor = Actor(actor.waypoints, 0, n_frames, actor.speed, hidden=[(start, start + gap)])
    return standard_scenario(seed, actors=[actor], n_frames=n_frames, p_detect=1.0, clutter_rate=0.0)


def load_default_schedule(n_frames: int) -> list[Segment]:
    """The shipped five-configuration schedule stretched to ``n_frames``."""
    segments = parse_schedule(bundled("schedule_5config.json"))
    scale = n_frames / segments[-1].end
    bounds = [round(s.start * scale) for s in segments] + [n_frames]
    return [Segment(bounds[k], bounds[k + 1], s.cameras) for k, s in enumerate(segments)]


def bundled(name: str) -> dict:
    """A JSON file shipped in the package ``data`` directory."""
    from importlib.resources import files

    return json.loads(files("mc3dtrack").joinpath("data", name).read_text())


def scenario_tracker_config(**overrides) -> TrackerConfig:
    """Tracker settings of the bundled ``scenario_config.json``, plus ``overrides``.

    Births there need three agreeing detections, which keeps Poisson clutter
    from opening tracks, and the motion noise is raised to follow the
    circuit's turns.
    """
    from .estimator import MultiCameraTracker

    params = {**bundled("scenario_config.json")["tracker"], **overrides}
    return MultiCameraTracker(**params).tracker_config()
