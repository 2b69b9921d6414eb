"""Estimator-style front end to the tracker."""

from __future__ import annotations

import time
from typing import Sequence

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .association import GatingConfig
from .filtering import MotionConfig, UTConfig
from .geometry import CameraModel
from .metrics import TrajectorySet
from .tracker import BirthConfig, TerminationConfig, TrackerConfig, TrackPool, step
from .validation import check_cameras, check_frames


class MultiCameraTracker(BaseEstimator):
    """Online multi-camera 3D tracker with a flat hyperparameter surface.

    ``fit`` consumes a whole detection stream; ``partial_fit`` advances one
    frame at a time. Fitted attributes:

    ``trajectories_``
        :class:`TrajectorySet` of all estimates emitted so far.
    ``pool_``
        The current track pool.
    ``fps_``
        Frames per second of the tracking loop during the last ``fit``.
    """

    def __init__(
        self,
        tau_g: float = 2.0,
        tau_c: float = 10.0,
        iota_inf: float = 100.0,
        max_misses: int = 30,
        duplicate_iou: float = 0.3,
        bandwidth: float = 0.5,
        min_cluster_size: int = 1,
        birth_var_position: float = 0.05,
        n_keypoints: int = 15,
        dt: float = 1.0 / 30.0,
        sigma_a: float = 0.5,
        sigma_shape: float = 0.05,
        sigma_a_kp: float = 2.0,
        confidence_floor: float = 0.0,
    ):
        self.tau_g = tau_g
        self.tau_c = tau_c
        self.iota_inf = iota_inf
        self.max_misses = max_misses
        self.duplicate_iou = duplicate_iou
        self.bandwidth = bandwidth
        self.min_cluster_size = min_cluster_size
        self.birth_var_position = birth_var_position
        self.n_keypoints = n_keypoints
        self.dt = dt
        self.sigma_a = sigma_a
        self.sigma_shape = sigma_shape
        self.sigma_a_kp = sigma_a_kp
        self.confidence_floor = confidence_floor

    def tracker_config(self) -> TrackerConfig:
        return TrackerConfig(
            gating=GatingConfig(self.tau_g, self.tau_c, self.iota_inf),
            motion=MotionConfig(self.dt, self.sigma_a, self.sigma_shape, self.sigma_a_kp),
            ut=UTConfig(),
            birth=BirthConfig(
                bandwidth=self.bandwidth,
                min_cluster_size=self.min_cluster_size,
                n_keypoints=self.n_keypoints,
                var_position=self.birth_var_position,
            ),
            termination=TerminationConfig(self.max_misses, self.duplicate_iou),
            confidence_floor=self.confidence_floor,
        )

    def reset(self) -> "MultiCameraTracker":
        self.pool_ = TrackPool()
        self.trajectories_ = TrajectorySet()
        self.n_frames_ = 0
        self._cfg = self.tracker_config()
        return self

    def partial_fit(self, detections, cameras: Sequence[CameraModel]):
        """Advance one frame; returns that frame's estimates."""
        if not hasattr(self, "pool_"):
            self.reset()
        cameras = check_cameras(cameras)
        (detections,) = check_frames([detections], cameras, self.n_keypoints)
        t = self.n_frames_
        estimates, self.pool_ = step(self.pool_, detections, cameras, self._cfg, t)
        for e in estimates:
            self.trajectories_.add(t, e.id, e.position, e.half_lengths, e.keypoints)
        self.n_frames_ += 1
        return estimates

    def fit(self, frames, y=None, cameras: Sequence[CameraModel] = ()):
        """Track a full stream of per-frame ``{camera_id: [Detection]}`` dicts."""
        cameras = check_cameras(cameras)
        frames = check_frames(frames, cameras, self.n_keypoints)
        self.reset()
        pool, cfg, out = self.pool_, self._cfg, self.trajectories_
        start = time.perf_counter()
        for t, dets in enumerate(frames):
            estimates, pool = step(pool, dets, cameras, cfg, t)
            for e in estimates:
                out.add(t, e.id, e.position, e.half_lengths, e.keypoints)
        elapsed = time.perf_counter() - start
        self.pool_ = pool
        self.n_frames_ = len(frames)
        self.fps_ = len(frames) / elapsed if elapsed > 0 else float("inf")
        return self

    def fit_predict(self, frames, y=None, cameras: Sequence[CameraModel] = ()) -> TrajectorySet:
        return self.fit(frames, cameras=cameras).trajectories_

    def predict(self, frames=None, cameras: Sequence[CameraModel] = ()) -> TrajectorySet:
        """Trajectories of the fitted stream, or of a new stream when one is given."""
        if frames is not None:
            return self.fit_predict(frames, cameras=cameras)
        check_is_fitted(self, "trajectories_")
        return self.trajectories_
