"""Input checks shared by the estimator and the command line."""

from __future__ import annotations

from typing import Mapping, Sequence

from .geometry import CameraModel
from .tracker import Detection


class ConfigError(ValueError):
    """Inputs are individually valid but do not fit together."""


def check_cameras(cameras: Sequence[CameraModel]) -> list[CameraModel]:
    cameras = list(cameras)
    if not cameras:
        raise ConfigError("at least one camera is required")
    ids = [c.id for c in cameras]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate camera ids in {ids}")
    return sorted(cameras, key=lambda c: c.id)


def as_frame_list(frames) -> list[Mapping[int, Sequence[Detection]]]:
    """Accept a list of per-frame dicts or a sparse ``{frame: dict}`` mapping."""
    if isinstance(frames, Mapping):
        if not frames:
            return []
        if min(frames) < 0:
            raise ConfigError("frame indices must be non-negative")
        return [frames.get(t, {}) for t in range(max(frames) + 1)]
    return list(frames)


def check_frames(frames, cameras: Sequence[CameraModel], n_keypoints: int) -> list[Mapping[int, Sequence[Detection]]]:
    """Every detection must come from a known camera and carry ``n_keypoints`` joints."""
    frames = as_frame_list(frames)
    known = {c.id for c in cameras}
    for t, per_cam in enumerate(frames):
        for cam_id, dets in per_cam.items():
            if cam_id not in known:
                raise ConfigError(f"frame {t}: detections from unknown camera {cam_id}")
            for d in dets:
                if d.camera_id != cam_id:
                    raise ConfigError(f"frame {t}: detection filed under camera {cam_id} claims camera {d.camera_id}")
                if len(d.keypoints) != n_keypoints or len(d.visible) != n_keypoints:
                    raise ConfigError(f"frame {t}: detection has {len(d.keypoints)} keypoints, expected {n_keypoints}")
    return frames
