"""One iteration of the online multi-camera tracker and the track pool lifecycle.

``step`` runs, in order: prediction, per-camera association, sequential
per-camera updates (ascending camera id), the active/tentative split,
mean-shift birth from leftover detections, termination and estimate
extraction. It never mutates its input pool.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .association import MISS, GatingConfig, associate_all
from .clustering import meanshift_cluster
from .filtering import (
    GaussianState,
    MotionConfig,
    UTConfig,
    kalman_correct_batch,
    kp_update_batch,
    ks_moments_batch,
    predict_batch,
    ukf_update_kp,
)
from .geometry import CameraModel, box_from_ellipsoid, boxes_to_ground, iou3d
from .skeleton import standing_template


class TrackStatus(str, enum.Enum):
    NEW = "new"
    ACTIVE = "active"
    TENTATIVE = "tentative"


@dataclass(frozen=True)
class Track:
    id: int
    state: GaussianState
    status: TrackStatus
    consecutive_misses: int = 0
    birth_time: int = 0
    last_update_time: int = 0

    def lifespan(self, t: int) -> int:
        return t - self.birth_time


@dataclass
class TrackPool:
    tracks: list[Track] = field(default_factory=list)
    next_id: int = 1

    def __len__(self):
        return len(self.tracks)

    def ids(self) -> list[int]:
        return [tr.id for tr in self.tracks]


@dataclass(frozen=True)
class Detection:
    """One 2D detection: a ``[left, top, log w, log h]`` box plus keypoints.

    ``visible[i] == False`` marks a keypoint the detector did not report.
    """

    camera_id: int
    bbox: np.ndarray
    keypoints: np.ndarray
    visible: np.ndarray
    confidence: float = 1.0

    @classmethod
    def from_pixels(cls, camera_id, left, top, width, height, keypoints, visible=None, confidence=1.0):
        if width <= 0 or height <= 0:
            raise ValueError("box width and height must be positive")
        kp = np.asarray(keypoints, dtype=float).reshape(-1, 2)
        vis = np.ones(len(kp), dtype=bool) if visible is None else np.asarray(visible, dtype=bool)
        return cls(int(camera_id), np.array([left, top, np.log(width), np.log(height)], dtype=float), kp, vis, float(confidence))


class Estimate(NamedTuple):
    id: int
    position: np.ndarray
    half_lengths: np.ndarray
    keypoints: np.ndarray


@dataclass(frozen=True)
class BirthConfig:
    bandwidth: float = 0.5
    min_cluster_size: int = 1
    shape_prior: tuple[float, float, float] = (0.3, 0.3, 0.9)
    birth_z: float = 0.9
    n_keypoints: int = 15
    var_position: float = 0.05
    var_velocity: float = 1.0
    var_shape: float = 0.01
    var_kp_position: float = 0.25
    var_kp_velocity: float = 1.0

    def __post_init__(self):
        if self.bandwidth <= 0 or self.min_cluster_size < 1:
            raise ValueError("bandwidth must be positive and min_cluster_size at least 1")
        if min(self.var_position, self.var_velocity, self.var_shape, self.var_kp_position, self.var_kp_velocity) <= 0:
            raise ValueError("initial variances must be positive")


@dataclass(frozen=True)
class TerminationConfig:
    max_misses: int = 30
    duplicate_iou: float = 0.3

    def __post_init__(self):
        if self.max_misses < 0 or not 0 < self.duplicate_iou <= 1:
            raise ValueError("invalid termination parameters")


@dataclass(frozen=True)
class TrackerConfig:
    gating: GatingConfig = GatingConfig()
    motion: MotionConfig = MotionConfig()
    ut: UTConfig = UTConfig()
    birth: BirthConfig = BirthConfig()
    termination: TerminationConfig = TerminationConfig()
    confidence_floor: float = 0.0


class _CameraFrame(NamedTuple):
    boxes: np.ndarray  # (m, 4)
    keypoints: np.ndarray  # (m, P, 2)
    visible: np.ndarray  # (m, P)


def _stack_detections(dets: Sequence[Detection], n_keypoints: int) -> _CameraFrame:
    if not dets:
        return _CameraFrame(np.empty((0, 4)), np.empty((0, n_keypoints, 2)), np.empty((0, n_keypoints), dtype=bool))
    return _CameraFrame(
        np.stack([d.bbox for d in dets]),
        np.stack([d.keypoints for d in dets]),
        np.stack([d.visible for d in dets]),
    )


def initial_state(ground_xy, cfg: BirthConfig) -> GaussianState:
    """Birth prior: centroid on the ground, standard shape, zero velocity, upright pose."""
    half = np.asarray(cfg.shape_prior, dtype=float)
    mean_ks = np.zeros(9)
    mean_ks[0:2] = ground_xy
    mean_ks[2] = cfg.birth_z
    mean_ks[6:9] = np.log(half)
    cov_ks = np.diag([cfg.var_position] * 3 + [cfg.var_velocity] * 3 + [cfg.var_shape] * 3)
    P = cfg.n_keypoints
    mean_kp = np.zeros((P, 6))
    mean_kp[:, :3] = standing_template(P, half) + np.array([ground_xy[0], ground_xy[1], 0.0])
    cov_kp = np.broadcast_to(np.diag([cfg.var_kp_position] * 3 + [cfg.var_kp_velocity] * 3), (P, 6, 6)).copy()
    return GaussianState(mean_ks, cov_ks, mean_kp, cov_kp)


def birth_tracks(
    unassigned: Mapping[int, Sequence[Detection]],
    cameras: Sequence[CameraModel],
    cfg: TrackerConfig,
    t: int,
    first_id: int,
) -> list[Track]:
    """Cluster leftover detections on the ground plane and open one track per cluster."""
    cams = {c.id: c for c in cameras}
    points, members = [], []
    for cam_id in sorted(unassigned):
        dets = unassigned[cam_id]
        if not dets:
            continue
        ground = boxes_to_ground(np.stack([d.bbox for d in dets]), cams[cam_id])
        for det, g in zip(dets, ground):
            if np.all(np.isfinite(g)):
                points.append(g)
                members.append(det)
    if not points:
        return []
    centroids, labels = meanshift_cluster(np.array(points), cfg.birth.bandwidth)
    born = []
    for k, centroid in enumerate(centroids):
        group = [members[i] for i in np.flatnonzero(labels == k)]
        if len(group) < cfg.birth.min_cluster_size:
            continue
        state = initial_state(centroid, cfg.birth)
        for det in group:
            state = ukf_update_kp(det.keypoints, det.visible, state, cams[det.camera_id], cfg.ut)
        born.append(Track(first_id + len(born), state, TrackStatus.NEW, 0, t, t))
    return born


def terminate(pool: TrackPool, cfg: TrackerConfig, t: int) -> TrackPool:
    """Drop tentative tracks missed too long, then the younger track of every duplicate pair."""
    term = cfg.termination
    tracks = [
        tr for tr in pool.tracks if not (tr.status is TrackStatus.TENTATIVE and tr.consecutive_misses > term.max_misses)
    ]
    if len(tracks) > 1:
        boxes = box_from_ellipsoid(np.stack([tr.state.position for tr in tracks]), np.stack([tr.state.log_shape for tr in tracks]))
        iou = iou3d(boxes[:, None], boxes[None])
        doomed = set()
        for i, j in zip(*np.nonzero(np.triu(iou > term.duplicate_iou, k=1))):
            a, b = tracks[i], tracks[j]
            # younger track goes; equal ages drop the larger id
            key_a = (a.birth_time, a.id)
            key_b = (b.birth_time, b.id)
            doomed.add(a.id if key_a > key_b else b.id)
        tracks = [tr for tr in tracks if tr.id not in doomed]
    return TrackPool(tracks, pool.next_id)


def extract_estimates(pool: TrackPool) -> list[Estimate]:
    return [
        Estimate(tr.id, tr.state.position.copy(), np.exp(tr.state.log_shape), tr.state.keypoints.copy())
        for tr in pool.tracks
        if tr.status is not TrackStatus.TENTATIVE
    ]


def step(
    pool: TrackPool,
    detections: Mapping[int, Sequence[Detection]],
    cameras: Sequence[CameraModel],
    cfg: TrackerConfig,
    t: int,
) -> tuple[list[Estimate], TrackPool]:
    """Advance the pool by one frame; returns ``(estimates, new_pool)``."""
    cameras = sorted(cameras, key=lambda c: c.id)
    P = cfg.birth.n_keypoints
    frames: dict[int, list[Detection]] = {}
    for cam in cameras:
        if not cam.active:
            continue
        frames[cam.id] = [d for d in detections.get(cam.id, ()) if d.confidence >= cfg.confidence_floor]
    stacked = {cid: _stack_detections(dets, P) for cid, dets in frames.items()}

    n = len(pool.tracks)
    assigned_any = np.zeros(n, dtype=bool)
    used = {cid: np.zeros(len(f.boxes), dtype=bool) for cid, f in stacked.items()}
    updated: list[Track] = []
    if n:
        states = [tr.state for tr in pool.tracks]
        mean_ks, cov_ks, mean_kp, cov_kp = predict_batch(
            np.stack([s.mean_ks for s in states]),
            np.stack([s.cov_ks for s in states]),
            np.stack([s.mean_kp for s in states]),
            np.stack([s.cov_kp for s in states]),
            cfg.motion,
        )
        amap, cached = associate_all(
            mean_ks, cov_ks, {cid: f.boxes for cid, f in stacked.items()}, cameras, cfg.gating, cfg.ut, return_moments=True
        )

        for cam in cameras:
            if cam.id not in stacked:
                continue
            gamma = amap[cam.id]
            rows = np.flatnonzero(gamma != MISS)
            if rows.size == 0:
                continue
            frame = stacked[cam.id]
            cols = gamma[rows]
            used[cam.id][cols] = True

            if assigned_any[rows].any():
                ybar, S, Pxy, ok = ks_moments_batch(mean_ks[rows], cov_ks[rows], cam, cfg.ut)
                prec = None
            else:
                # no earlier camera touched these tracks, so the association moments still hold
                m = cached[cam.id]
                ybar, S, Pxy, ok = m.ybar[rows], m.S[rows], m.Pxy[rows], m.ok[rows]
                prec = tuple(a[rows] for a in m.prec)
            mu, Pk, good = kalman_correct_batch(mean_ks[rows], cov_ks[rows], frame.boxes[cols], ybar, S, Pxy, prec)
            keep = ok & good
            mean_ks[rows[keep]] = mu[keep]
            cov_ks[rows[keep]] = Pk[keep]
            assigned_any[rows] = True

            vis = frame.visible[cols]
            r_idx, k_idx = np.nonzero(vis)
            if r_idx.size:
                tr_rows = rows[r_idx]
                z = frame.keypoints[cols[r_idx], k_idx]
                mu, Pk, _ = kp_update_batch(mean_kp[tr_rows, k_idx], cov_kp[tr_rows, k_idx], z, cam, cfg.ut)
                mean_kp[tr_rows, k_idx] = mu
                cov_kp[tr_rows, k_idx] = Pk

        for i, tr in enumerate(pool.tracks):
            state = GaussianState(mean_ks[i], cov_ks[i], mean_kp[i], cov_kp[i])
            if assigned_any[i]:
                updated.append(replace(tr, state=state, status=TrackStatus.ACTIVE, consecutive_misses=0, last_update_time=t))
            else:
                updated.append(
                    replace(tr, state=state, status=TrackStatus.TENTATIVE, consecutive_misses=tr.consecutive_misses + 1)
                )

    leftovers = {cid: [d for d, u in zip(frames[cid], used[cid]) if not u] for cid in frames}
    born = birth_tracks(leftovers, cameras, cfg, t, pool.next_id)
    new_pool = TrackPool(updated + born, pool.next_id + len(born))
    new_pool = terminate(new_pool, cfg, t)
    return extract_estimates(new_pool), new_pool
