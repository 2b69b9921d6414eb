"""Synthetic multi-camera scenarios for desk-scale verification.

Actors walk piecewise-linear paths at constant speed with a sinusoidal gait.
Detections are rendered with the same six-point ellipsoid projection the
tracker uses, then perturbed with pixel noise, Bernoulli misses and Poisson
clutter. Every random draw is keyed on ``(seed, frame, ...)`` so frames can be
rendered independently and in any order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .geometry import CameraModel, look_at_camera, project_ellipsoids, homogeneous_project, EPS_DEPTH
from .skeleton import standing_template, swing_weights
from .tracker import Detection

MAX_SPEED = 3.0
SCENARIO_VERSION = 1


class InvalidScenarioError(ValueError):
    pass


@dataclass
class Actor:
    waypoints: list
    spawn: int = 0
    despawn: int | None = None
    speed: float | None = None
    half_lengths: tuple[float, float, float] = (0.28, 0.28, 0.9)
    gait_amplitude: float = 0.12
    gait_frequency: float = 1.0
    hidden: list = field(default_factory=list)

    def to_record(self) -> dict:
        rec = {
            "waypoints": [list(map(float, w)) for w in self.waypoints],
            "spawn": self.spawn,
            "despawn": self.despawn,
            "half_lengths": list(self.half_lengths),
            "gait": {"amplitude": self.gait_amplitude, "frequency": self.gait_frequency},
            "hidden": [list(h) for h in self.hidden],
        }
        if self.speed is not None:
            rec["speed"] = self.speed
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "Actor":
        gait = rec.get("gait", {})
        return cls(
            waypoints=[tuple(w) for w in rec["waypoints"]],
            spawn=int(rec.get("spawn", 0)),
            despawn=rec.get("despawn"),
            speed=rec.get("speed"),
            half_lengths=tuple(rec.get("half_lengths", (0.28, 0.28, 0.9))),
            gait_amplitude=float(gait.get("amplitude", 0.12)),
            gait_frequency=float(gait.get("frequency", 1.0)),
            hidden=[tuple(h) for h in rec.get("hidden", [])],
        )


@dataclass
class Scenario:
    cameras: list[CameraModel]
    actors: list[Actor]
    n_frames: int = 300
    fps: float = 30.0
    schedule: dict[int, list[tuple[int, int]]] | None = None
    sigma_bbox: float = 2.0
    sigma_kp: float = 2.0
    p_detect: float | dict[int, float] = 0.95
    clutter_rate: float | dict[int, float] = 0.0
    n_keypoints: int = 15
    seed: int = 0

    def __post_init__(self):
        if self.n_frames <= 0 or self.fps <= 0:
            raise InvalidScenarioError("frame count and fps must be positive")
        ids = {c.id for c in self.cameras}
        for cam_id in self.camera_values(self.p_detect).keys() | self.camera_values(self.clutter_rate).keys():
            if cam_id not in ids:
                raise InvalidScenarioError(f"unknown camera id {cam_id}")
        if any(not 0 <= p <= 1 for p in self.camera_values(self.p_detect).values()):
            raise InvalidScenarioError("detection probabilities must lie in [0, 1]")
        if any(lam < 0 for lam in self.camera_values(self.clutter_rate).values()):
            raise InvalidScenarioError("clutter rates must be non-negative")
        for cam_id, intervals in (self.schedule or {}).items():
            if cam_id not in ids:
                raise InvalidScenarioError(f"schedule references unknown camera {cam_id}")
            for on, off in intervals:
                if not 0 <= on <= off <= self.n_frames:
                    raise InvalidScenarioError(f"schedule interval {(on, off)} outside [0, {self.n_frames}]")

    def camera_values(self, value) -> dict[int, float]:
        if isinstance(value, Mapping):
            return {int(k): float(v) for k, v in value.items()}
        return {c.id: float(value) for c in self.cameras}

    @property
    def dt(self) -> float:
        return 1.0 / self.fps


@dataclass
class GroundTruth:
    """Dense per-frame ground truth; absent actors hold NaN."""

    ids: np.ndarray  # (A,)
    present: np.ndarray  # (T, A) bool
    positions: np.ndarray  # (T, A, 3)
    half_lengths: np.ndarray  # (A, 3)
    keypoints: np.ndarray  # (T, A, P, 3)

    @property
    def n_frames(self) -> int:
        return self.present.shape[0]

    def frame(self, t: int) -> list[tuple[int, np.ndarray, np.ndarray, np.ndarray]]:
        return [
            (int(self.ids[a]), self.positions[t, a], self.half_lengths[a], self.keypoints[t, a])
            for a in np.flatnonzero(self.present[t])
        ]


def _path_position(waypoints: np.ndarray, dist: float):
    """Point and heading after walking ``dist`` meters along the polyline."""
    if len(waypoints) == 1:
        return waypoints[0], 0.0, False
    seg = np.diff(waypoints, axis=0)
    lengths = np.linalg.norm(seg, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    if dist >= cum[-1]:
        k = len(seg) - 1
        return waypoints[-1], float(np.arctan2(seg[k, 1], seg[k, 0])), False
    k = int(np.searchsorted(cum, dist, side="right") - 1)
    k = min(max(k, 0), len(seg) - 1)
    frac = (dist - cum[k]) / lengths[k] if lengths[k] > 0 else 0.0
    return waypoints[k] + frac * seg[k], float(np.arctan2(seg[k, 1], seg[k, 0])), True


def actor_speed(actor: Actor, scenario: Scenario) -> float:
    wp = np.asarray(actor.waypoints, dtype=float).reshape(-1, 2)
    length = float(np.linalg.norm(np.diff(wp, axis=0), axis=1).sum()) if len(wp) > 1 else 0.0
    if actor.speed is not None:
        return float(actor.speed)
    despawn = scenario.n_frames if actor.despawn is None else actor.despawn
    duration = (despawn - actor.spawn) * scenario.dt
    return length / duration if duration > 0 else 0.0


def posed_skeleton(template, swing, ground_xy, heading, phase, amplitude) -> np.ndarray:
    fwd = np.array([np.cos(heading), np.sin(heading), 0.0])
    right = np.array([np.sin(heading), -np.cos(heading), 0.0])
    up = np.array([0.0, 0.0, 1.0])
    local = template.copy()
    local[:, 1] += swing * amplitude * np.sin(phase)
    return local[:, :1] * right + local[:, 1:2] * fwd + local[:, 2:3] * up + np.array([ground_xy[0], ground_xy[1], 0.0])


def generate_ground_truth(scenario: Scenario) -> GroundTruth:
    T, A, P = scenario.n_frames, len(scenario.actors), scenario.n_keypoints
    present = np.zeros((T, A), dtype=bool)
    positions = np.full((T, A, 3), np.nan)
    keypoints = np.full((T, A, P, 3), np.nan)
    half = np.array([a.half_lengths for a in scenario.actors], dtype=float).reshape(A, 3)
    swing = swing_weights(P)
    rng = np.random.default_rng([scenario.seed, 7919])
    phases = rng.uniform(0, 2 * np.pi, size=A)
    for a, actor in enumerate(scenario.actors):
        wp = np.asarray(actor.waypoints, dtype=float).reshape(-1, 2)
        speed = actor_speed(actor, scenario)
        if speed > MAX_SPEED + 1e-9:
            raise InvalidScenarioError(f"actor {a} needs {speed:.2f} m/s, above {MAX_SPEED} m/s")
        despawn = T if actor.despawn is None else min(actor.despawn, T)
        template = standing_template(P, half[a])
        for t in range(max(actor.spawn, 0), despawn):
            elapsed = (t - actor.spawn) * scenario.dt
            xy, heading, moving = _path_position(wp, speed * elapsed)
            amp = actor.gait_amplitude if moving and speed > 0 else 0.0
            phase = 2 * np.pi * actor.gait_frequency * elapsed + phases[a]
            present[t, a] = True
            positions[t, a] = [xy[0], xy[1], half[a, 2]]
            keypoints[t, a] = posed_skeleton(template, swing, xy, heading, phase, amp)
    return GroundTruth(np.arange(A), present, positions, half, keypoints)


def apply_schedule(scenario: Scenario, t: int) -> set[int]:
    """Camera ids switched on at frame ``t`` (half-open ``[on, off)`` intervals)."""
    if scenario.schedule is None:
        return {c.id for c in scenario.cameras}
    active = set()
    for cam in scenario.cameras:
        intervals = scenario.schedule.get(cam.id)
        if intervals is None or any(on <= t < off for on, off in intervals):
            active.add(cam.id)
    return active


def _frame_rng(seed: int, t: int, salt: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, t, salt])


def _in_image(uv, size) -> np.ndarray:
    return (uv[..., 0] >= 0) & (uv[..., 0] < size[0]) & (uv[..., 1] >= 0) & (uv[..., 1] < size[1])


def render_detections(gt: GroundTruth, scenario: Scenario, t: int, return_labels: bool = False):
    """Per-camera detections at frame ``t``; labels give the actor id or -1 for clutter."""
    rng = _frame_rng(scenario.seed, t, 1)
    active = apply_schedule(scenario, t)
    p_det = scenario.camera_values(scenario.p_detect)
    clutter = scenario.camera_values(scenario.clutter_rate)
    P = scenario.n_keypoints
    out: dict[int, list[Detection]] = {}
    labels: dict[int, list[int]] = {}
    hidden = [
        any(lo <= t < hi for lo, hi in actor.hidden) for actor in scenario.actors
    ]
    visible_actors = [a for a in np.flatnonzero(gt.present[t]) if not hidden[a]]
    for cam in sorted(scenario.cameras, key=lambda c: c.id):
        # draws happen for every camera so schedules do not shift the other streams
        cam_rng = np.random.default_rng(rng.integers(2**63))
        if cam.id not in active:
            continue
        dets, labs = [], []
        W, H = cam.image_size
        for a in visible_actors:
            box, ok = project_ellipsoids(cam.matrix, gt.positions[t, a], np.log(gt.half_lengths[a]))
            draw_keep = cam_rng.random()
            noise_box = cam_rng.normal(size=4)
            noise_kp = cam_rng.normal(size=(P, 2))
            conf = cam_rng.uniform(0.6, 1.0)
            if not ok:
                continue
            left, top = box[0], box[1]
            w, h = np.exp(box[2]), np.exp(box[3])
            cx, cy = left + w / 2, top + h / 2
            if not (0 <= cx < W and 0 <= cy < H):
                continue
            if draw_keep >= p_det.get(cam.id, 1.0):
                continue
            s = scenario.sigma_bbox
            left, top = left + s * noise_box[0], top + s * noise_box[1]
            w, h = max(w + s * noise_box[2], 1.0), max(h + s * noise_box[3], 1.0)
            hp = homogeneous_project(cam.matrix, gt.keypoints[t, a])
            front = hp[:, 2] > EPS_DEPTH
            uv = hp[:, :2] / np.where(front, hp[:, 2], 1.0)[:, None] + scenario.sigma_kp * noise_kp
            vis = front & _in_image(uv, cam.image_size)
            dets.append(Detection.from_pixels(cam.id, left, top, w, h, uv, vis, conf))
            labs.append(int(gt.ids[a]))

        n_clutter = cam_rng.poisson(clutter.get(cam.id, 0.0))
        sizes = np.array([d.bbox[2:] for d in dets]) if dets else None
        for _ in range(n_clutter):
            if sizes is not None:
                logwh = sizes[cam_rng.integers(len(sizes))] + cam_rng.normal(0, 0.1, size=2)
            else:
                logwh = np.log([60.0, 180.0]) + cam_rng.normal(0, 0.1, size=2)
            w, h = np.exp(logwh)
            left = cam_rng.uniform(0, max(W - w, 1.0))
            top = cam_rng.uniform(0, max(H - h, 1.0))
            kp = np.column_stack([cam_rng.uniform(left, left + w, P), cam_rng.uniform(top, top + h, P)])
            dets.append(Detection.from_pixels(cam.id, left, top, w, h, kp, None, cam_rng.uniform(0.3, 0.8)))
            labs.append(-1)
        order = cam_rng.permutation(len(dets))
        out[cam.id] = [dets[i] for i in order]
        labels[cam.id] = [labs[i] for i in order]
    return (out, labels) if return_labels else out


def apply_deletion(detections: Mapping[int, Sequence[Detection]], rate: float, seed: int, t: int = 0):
    """Drop each detection independently with probability ``rate``."""
    if not 0 <= rate <= 1:
        raise ValueError("deletion rate must lie in [0, 1]")
    out = {}
    for cam_id in sorted(detections):
        dets = list(detections[cam_id])
        rng = _frame_rng(seed, t, 1000 + int(cam_id))
        keep = rng.random(len(dets)) >= rate
        out[cam_id] = [d for d, k in zip(dets, keep) if k]
    return out


def simulate(scenario: Scenario, return_labels: bool = False):
    """Ground truth plus the rendered detection stream for every frame."""
    gt = generate_ground_truth(scenario)
    frames = [render_detections(gt, scenario, t, return_labels) for t in range(scenario.n_frames)]
    return gt, frames


def standard_rig(
    sigma_bbox: float = 2.0,
    sigma_kp: float = 2.0,
    half_extent: float = 5.0,
    height: float = 2.5,
    focal: float = 800.0,
) -> list[CameraModel]:
    """Four inward-looking cameras on the corners of a square area.

    Box noise variances model a real detector (10 px on the box corner,
    0.1 on log size) rather than the simulator's pixel noise; keypoint noise
    follows ``sigma_kp`` with a 1 px floor.
    """
    corners = [(-1, -1), (1, -1), (1, 1), (-1, 1)]
    kp_var = max(sigma_kp, 1.0) ** 2
    bbox_var = [max(10.0, 5 * sigma_bbox) ** 2] * 2 + [0.01, 0.01]
    return [
        look_at_camera(
            i + 1,
            (sx * half_extent, sy * half_extent, height),
            (0.0, 0.0, 0.8),
            focal=focal,
            bbox_noise=bbox_var,
            keypoint_noise=[kp_var, kp_var],
        )
        for i, (sx, sy) in enumerate(corners)
    ]


def circuit_path(half_side: float = 2.0, radius: float = 1.2, arc_segments: int = 16) -> np.ndarray:
    """Closed rounded-square loop around the origin, counter-clockwise."""
    straight = half_side - radius
    pts = []
    for k, (cx, cy) in enumerate([(straight, straight), (-straight, straight), (-straight, -straight), (straight, -straight)]):
        a0 = k * np.pi / 2
        for i in range(arc_segments + 1):
            ang = a0 + (np.pi / 2) * i / arc_segments
            pts.append((cx + radius * np.cos(ang), cy + radius * np.sin(ang)))
    pts.append(pts[0])
    return np.array(pts)


def _walk_from(loop: np.ndarray, start: float, length: float) -> list[tuple[float, float]]:
    """Waypoints covering ``length`` meters of a closed loop starting ``start`` meters in."""
    seg = np.linalg.norm(np.diff(loop, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    perimeter = cum[-1]
    laps = int(np.ceil((start + length) / perimeter)) + 1
    tiled = np.concatenate([cum[:-1] + lap * perimeter for lap in range(laps)] + [[laps * perimeter]])
    pts = np.concatenate([loop[:-1]] * laps + [loop[:1]])
    inner = (tiled > start) & (tiled < start + length)
    s = np.concatenate([[start], tiled[inner], [start + length]])
    xs = np.interp(s % perimeter, cum, loop[:, 0])
    ys = np.interp(s % perimeter, cum, loop[:, 1])
    xs[1:-1], ys[1:-1] = pts[inner, 0], pts[inner, 1]
    return [(float(x), float(y)) for x, y in zip(xs, ys)]


def circuit_actors(
    n: int,
    n_frames: int,
    fps: float = 30.0,
    speed: float = 1.0,
    half_side: float = 2.0,
    radius: float = 1.2,
) -> list[Actor]:
    """``n`` actors evenly spaced on one rounded-square circuit, all walking the same way."""
    loop = circuit_path(half_side, radius)
    perimeter = float(np.linalg.norm(np.diff(loop, axis=0), axis=1).sum())
    length = speed * n_frames / fps
    return [
        Actor(waypoints=_walk_from(loop, k * perimeter / n, length), spawn=0, despawn=n_frames, speed=speed)
        for k in range(n)
    ]


def standard_scenario(seed: int = 0, **overrides) -> Scenario:
    """Five actors, four cameras, 300 frames, 2 px noise, P_D 0.95, 2 clutter/camera/frame."""
    kw = dict(
        n_frames=300,
        sigma_bbox=2.0,
        sigma_kp=2.0,
        p_detect=0.95,
        clutter_rate=2.0,
        seed=seed,
    )
    kw.update(overrides)
    n_actors = kw.pop("n_actors", 5)
    cams = kw.pop("cameras", None) or standard_rig(kw["sigma_bbox"], kw["sigma_kp"])
    actors = kw.pop("actors", None) or circuit_actors(n_actors, kw["n_frames"])
    return Scenario(cameras=cams, actors=actors, **kw)


def scenario_to_record(scenario: Scenario) -> dict:
    return {
        "version": SCENARIO_VERSION,
        "n_frames": scenario.n_frames,
        "fps": scenario.fps,
        "seed": scenario.seed,
        "n_keypoints": scenario.n_keypoints,
        "noise": {"bbox_px": scenario.sigma_bbox, "keypoint_px": scenario.sigma_kp},
        "p_detect": scenario.p_detect if not isinstance(scenario.p_detect, Mapping)
        else {str(k): v for k, v in scenario.p_detect.items()},
        "clutter_rate": scenario.clutter_rate if not isinstance(scenario.clutter_rate, Mapping)
        else {str(k): v for k, v in scenario.clutter_rate.items()},
        "schedule": None if scenario.schedule is None
        else {str(k): [list(iv) for iv in v] for k, v in scenario.schedule.items()},
        "cameras": [c.to_record() for c in scenario.cameras],
        "actors": [a.to_record() for a in scenario.actors],
    }


def _keyed(value):
    if isinstance(value, Mapping):
        return {int(k): v for k, v in value.items()}
    return value


def scenario_from_record(rec: dict, base_dir: Path | None = None) -> Scenario:
    if rec.get("version") != SCENARIO_VERSION:
        raise InvalidScenarioError(f"unsupported scenario version {rec.get('version')!r}")
    noise = rec.get("noise", {})
    sigma_bbox = float(noise.get("bbox_px", 2.0))
    sigma_kp = float(noise.get("keypoint_px", 2.0))
    if "cameras" in rec:
        cams = [CameraModel.from_record(c) for c in rec["cameras"]]
    elif "calibration" in rec:
        from .geometry import load_calibration

        path = Path(rec["calibration"])
        cams = load_calibration(path if path.is_absolute() or base_dir is None else base_dir / path)
    else:
        rig = rec.get("rig", {})
        cams = standard_rig(sigma_bbox, sigma_kp, **{k: v for k, v in rig.items() if k != "type"})
    if "actors" in rec:
        actors = [Actor.from_record(a) for a in rec["actors"]]
    else:
        actors = circuit_actors(int(rec.get("n_actors", 5)), int(rec.get("n_frames", 300)))
    schedule = rec.get("schedule")
    if schedule is not None:
        schedule = {int(k): [tuple(iv) for iv in v] for k, v in schedule.items()}
    return Scenario(
        cameras=cams,
        actors=actors,
        n_frames=int(rec.get("n_frames", 300)),
        fps=float(rec.get("fps", 30.0)),
        schedule=schedule,
        sigma_bbox=sigma_bbox,
        sigma_kp=sigma_kp,
        p_detect=_keyed(rec.get("p_detect", 0.95)),
        clutter_rate=_keyed(rec.get("clutter_rate", 0.0)),
        n_keypoints=int(rec.get("n_keypoints", 15)),
        seed=int(rec.get("seed", 0)),
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    return scenario_from_record(json.loads(path.read_text()), base_dir=path.parent)


def dump_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_record(scenario), indent=2) + "\n")
