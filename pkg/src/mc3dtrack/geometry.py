"""Camera projection math.

Boxes in image space are always ``[left, top, log(width), log(height)]``.
3D boxes used for overlap tests are axis-aligned and stored as a ``(2, 3)``
array ``[lower_corner, upper_corner]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

EPS_DEPTH = 1e-9
EPS_SINGULAR = 1e-12

CALIBRATION_VERSION = 1


class GeometryError(ValueError):
    pass


class BehindCameraError(GeometryError):
    pass


class DegenerateProjectionError(GeometryError):
    pass


class DegenerateCameraError(GeometryError):
    pass


class PointAtInfinityError(GeometryError):
    pass


class DegenerateBoxError(GeometryError):
    pass


class Ellipsoid3D(NamedTuple):
    center: np.ndarray
    log_half_lengths: np.ndarray


@dataclass
class CameraModel:
    """A calibrated pinhole camera.

    ``matrix`` maps homogeneous world points (meters) to homogeneous pixels.
    ``bbox_noise`` and ``keypoint_noise`` are the diagonals of the detection
    noise covariances. ``ground_columns`` picks the matrix columns forming
    the ground-plane homography; ``(0, 1, 3)`` is the z=0 plane.
    """

    id: int
    matrix: np.ndarray
    image_size: tuple[int, int] = (1920, 1080)
    bbox_noise: np.ndarray = field(default_factory=lambda: np.array([100.0, 100.0, 0.01, 0.01]))
    keypoint_noise: np.ndarray = field(default_factory=lambda: np.array([4.0, 4.0]))
    active: bool = True
    ground_columns: tuple[int, int, int] = (0, 1, 3)

    def __post_init__(self):
        M = np.array(self.matrix, dtype=float).reshape(3, 4)
        if np.linalg.matrix_rank(M) != 3:
            raise DegenerateCameraError(f"camera {self.id}: projection matrix must have rank 3")
        rb = np.array(self.bbox_noise, dtype=float).reshape(4)
        rk = np.array(self.keypoint_noise, dtype=float).reshape(2)
        if np.any(rb <= 0) or np.any(rk <= 0):
            raise ValueError(f"camera {self.id}: noise variances must be strictly positive")
        for arr in (M, rb, rk):
            arr.setflags(write=False)
        self.matrix, self.bbox_noise, self.keypoint_noise = M, rb, rk
        self.image_size = (int(self.image_size[0]), int(self.image_size[1]))
        self.ground_columns = tuple(int(c) for c in self.ground_columns)
        H = M[:, list(self.ground_columns)]
        self._ground_inv = None
        if abs(np.linalg.det(H / np.abs(H).max())) > EPS_SINGULAR:
            self._ground_inv = np.linalg.inv(H)

    @property
    def R_b(self) -> np.ndarray:
        return np.diag(self.bbox_noise)

    @property
    def R_k(self) -> np.ndarray:
        return np.diag(self.keypoint_noise)

    @property
    def ground_homography_inv(self) -> np.ndarray:
        if self._ground_inv is None:
            raise DegenerateCameraError(f"camera {self.id}: ground-plane homography is singular")
        return self._ground_inv

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "matrix": [float(v) for v in self.matrix.ravel()],
            "image_size": list(self.image_size),
            "bbox_noise": [float(v) for v in self.bbox_noise],
            "keypoint_noise": [float(v) for v in self.keypoint_noise],
            "ground_columns": list(self.ground_columns),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "CameraModel":
        kw = {"id": int(rec["id"]), "matrix": np.asarray(rec["matrix"], dtype=float).reshape(3, 4)}
        for key in ("image_size", "bbox_noise", "keypoint_noise", "ground_columns"):
            if key in rec:
                kw[key] = rec[key]
        return cls(**kw)


def look_at_camera(
    cam_id: int,
    position: Sequence[float],
    target: Sequence[float],
    focal: float = 800.0,
    image_size: tuple[int, int] = (1920, 1080),
    **kwargs,
) -> CameraModel:
    """Build a z-up world camera at ``position`` looking at ``target``."""
    C = np.asarray(position, dtype=float)
    forward = np.asarray(target, dtype=float) - C
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, [0.0, 0.0, 1.0])
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    R = np.stack([right, down, forward])
    K = np.array([[focal, 0.0, image_size[0] / 2], [0.0, focal, image_size[1] / 2], [0.0, 0.0, 1.0]])
    M = K @ np.hstack([R, -(R @ C)[:, None]])
    return CameraModel(cam_id, M, image_size=image_size, **kwargs)


def _matrix(cam_or_matrix) -> np.ndarray:
    return cam_or_matrix.matrix if isinstance(cam_or_matrix, CameraModel) else np.asarray(cam_or_matrix, dtype=float)


def homogeneous_project(M: np.ndarray, points: np.ndarray) -> np.ndarray:
    """``M @ [p; 1]`` for points of shape ``(..., 3)``, returning ``(..., 3)``."""
    return points @ M[:, :3].T + M[:, 3]


def project_point(M, p) -> np.ndarray:
    """Project one 3D point (or a stack of points) to pixels.

    Raises :class:`BehindCameraError` when the homogeneous depth is not
    positive.
    """
    h = homogeneous_project(_matrix(M), np.asarray(p, dtype=float))
    if np.any(h[..., 2] <= EPS_DEPTH):
        raise BehindCameraError("point projects behind the camera")
    return h[..., :2] / h[..., 2:3]


def project_keypoint(p, cam: CameraModel) -> np.ndarray:
    return project_point(cam.matrix, p)


def ellipsoid_extreme_points(center: np.ndarray, log_half_lengths: np.ndarray) -> np.ndarray:
    """The six axis-extreme points ``center +/- exp(s_i) e_i``; shape ``(..., 6, 3)``."""
    center = np.asarray(center, dtype=float)
    half = np.exp(np.asarray(log_half_lengths, dtype=float))
    offsets = half[..., None, :] * np.array(
        [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=float
    )
    return center[..., None, :] + offsets


def _boxes_from_homogeneous(h: np.ndarray):
    depth = h[..., 2]
    front = depth > EPS_DEPTH
    ok = np.all(front, axis=-1)
    safe = np.where(front, depth, 1.0)
    u = h[..., 0] / safe
    v = h[..., 1] / safe
    left, right = u.min(axis=-1), u.max(axis=-1)
    top, bottom = v.min(axis=-1), v.max(axis=-1)
    w = right - left
    hgt = bottom - top
    ok &= (w > 0) & (hgt > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        boxes = np.stack([left, top, np.log(np.where(w > 0, w, 1.0)), np.log(np.where(hgt > 0, hgt, 1.0))], axis=-1)
    return boxes, ok


def project_ellipsoids(M: np.ndarray, centers: np.ndarray, log_half_lengths: np.ndarray):
    """Vectorised 6-point ellipsoid projection.

    Returns ``(boxes, ok)`` where ``boxes`` has shape ``(..., 4)`` and ``ok``
    flags entries whose extreme points all lie in front of the camera and
    whose box is non-degenerate. Entries with ``ok == False`` hold garbage.
    """
    return _boxes_from_homogeneous(homogeneous_project(M, ellipsoid_extreme_points(centers, log_half_lengths)))


def project_ellipsoids_multi(Ms: np.ndarray, centers: np.ndarray, log_half_lengths: np.ndarray):
    """:func:`project_ellipsoids` through a stack of cameras ``Ms (C, 3, 4)``.

    Outputs gain a leading camera axis.
    """
    pts = ellipsoid_extreme_points(centers, log_half_lengths)
    shape = (len(Ms),) + (1,) * (pts.ndim - 2)
    R = np.swapaxes(Ms[:, :, :3], -1, -2).reshape(shape + (3, 3))
    t = Ms[:, :, 3].reshape(shape + (1, 3))
    return _boxes_from_homogeneous(pts @ R + t)


def project_ellipsoid_to_bbox(e: Ellipsoid3D, cam) -> np.ndarray:
    M = _matrix(cam)
    pts = homogeneous_project(M, ellipsoid_extreme_points(e[0], e[1]))
    if np.any(pts[:, 2] <= EPS_DEPTH):
        raise BehindCameraError("ellipsoid extreme point projects behind the camera")
    uv = pts[:, :2] / pts[:, 2:3]
    left, top = uv.min(axis=0)
    right, bottom = uv.max(axis=0)
    if not (right > left and bottom > top):
        raise DegenerateProjectionError("ellipsoid projects to a zero-area box")
    return np.array([left, top, np.log(right - left), np.log(bottom - top)])


def bbox_bottom_pixel(b: np.ndarray) -> np.ndarray:
    """Bottom-centre pixel of ``[left, top, log w, log h]`` boxes, shape ``(..., 2)``."""
    b = np.asarray(b, dtype=float)
    return np.stack([b[..., 0] + np.exp(b[..., 2]) / 2, b[..., 1] + np.exp(b[..., 3])], axis=-1)


def boxes_to_ground(boxes: np.ndarray, cam: CameraModel) -> np.ndarray:
    """Back-project many box bottoms; rows that fail come back as NaN."""
    Hinv = cam.ground_homography_inv
    b = np.atleast_2d(boxes)
    u = b[:, 0] + 0.5 * np.exp(b[:, 2])
    v = b[:, 1] + np.exp(b[:, 3])
    f = np.outer(u, Hinv[:, 0]) + np.outer(v, Hinv[:, 1]) + Hinv[:, 2]
    # the scale is compared against the homogeneous pixel norm so that M <- cM is a no-op
    scale_ok = np.abs(f[:, 2]) >= EPS_SINGULAR * np.sqrt((f * f).sum(axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(scale_ok[:, None], f[:, :2] / f[:, 2:3], np.nan)


def bbox_bottom_to_ground(b, cam: CameraModel) -> np.ndarray:
    """Ground-plane ``(x, y)`` under the bottom-centre of a box."""
    f = cam.ground_homography_inv @ np.append(bbox_bottom_pixel(b), 1.0)
    if abs(f[2]) < EPS_SINGULAR * np.linalg.norm(f):
        raise PointAtInfinityError("box bottom back-projects to the horizon")
    return f[:2] / f[2]


def box_from_ellipsoid(center, log_half_lengths) -> np.ndarray:
    center = np.asarray(center, dtype=float)
    half = np.exp(np.asarray(log_half_lengths, dtype=float))
    return np.stack([center - half, center + half], axis=-2)


def _check_box(b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.shape[-2:] != (2, 3):
        raise ValueError("3D boxes must have shape (2, 3): [lower, upper]")
    if np.any(np.prod(b[..., 1, :] - b[..., 0, :], axis=-1) <= 0):
        raise DegenerateBoxError("3D box has non-positive volume")
    return b


def _overlap_terms(a, b):
    a, b = _check_box(a), _check_box(b)
    vol_a = np.prod(a[..., 1, :] - a[..., 0, :], axis=-1)
    vol_b = np.prod(b[..., 1, :] - b[..., 0, :], axis=-1)
    inter_ext = np.clip(np.minimum(a[..., 1, :], b[..., 1, :]) - np.maximum(a[..., 0, :], b[..., 0, :]), 0, None)
    inter = np.prod(inter_ext, axis=-1)
    hull = np.prod(np.maximum(a[..., 1, :], b[..., 1, :]) - np.minimum(a[..., 0, :], b[..., 0, :]), axis=-1)
    union = vol_a + vol_b - inter
    return inter, union, hull


def iou3d(a, b):
    inter, union, _ = _overlap_terms(a, b)
    return inter / union


def giou3d(a, b):
    inter, union, hull = _overlap_terms(a, b)
    return inter / union - (hull - union) / hull


def giou3d_distance(a, b):
    """GIoU rescaled to a distance in ``[0, 1)``; identical boxes give 0."""
    return (1.0 - giou3d(a, b)) / 2.0


def load_calibration(path) -> list[CameraModel]:
    """Read a calibration JSON file (see README for the schema)."""
    data = json.loads(Path(path).read_text())
    if data.get("version") != CALIBRATION_VERSION:
        raise ValueError(f"{path}: unsupported calibration version {data.get('version')!r}")
    cams = [CameraModel.from_record(rec) for rec in data["cameras"]]
    ids = [c.id for c in cams]
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate camera ids")
    return sorted(cams, key=lambda c: c.id)


def dump_calibration(cameras: Sequence[CameraModel], path) -> None:
    payload = {"version": CALIBRATION_VERSION, "cameras": [c.to_record() for c in cameras]}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")
