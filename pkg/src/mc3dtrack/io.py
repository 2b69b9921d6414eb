"""Line-delimited detection and trajectory files.

Both formats are comma-separated text whose first line is a version header::

    # mc3dtrack detections v1 keypoints=15
    frame,camera_id,left,top,width,height,confidence,x1,y1,v1,...

    # mc3dtrack trajectories v1 keypoints=15
    frame,track_id,x,y,z,ax,ay,az,px1,py1,pz1,...

Box sizes are in pixels, trajectory values in meters. ``v`` is 1 for a
reported keypoint and 0 otherwise. Further ``#`` lines are comments.
"""

from __future__ import annotations

import csv
import logging
import math
import re
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .metrics import TrajectorySet
from .tracker import Detection

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
_HEADER = re.compile(r"#\s*mc3dtrack\s+(detections|trajectories)\s+v(\d+)(?:\s+keypoints=(\d+))?\s*$")


class IngestionError(ValueError):
    """A file could not be parsed; the message names the line and field."""


def _header(kind: str, n_keypoints: int) -> str:
    return f"# mc3dtrack {kind} v{FORMAT_VERSION} keypoints={n_keypoints}\n"


def _fmt(x: float) -> str:
    return repr(float(x)) if math.isfinite(x) else "nan"


def _read_header(lines: list[str], kind: str, path) -> int | None:
    if not lines or not lines[0].strip():
        raise IngestionError(f"{path}:1: missing '# mc3dtrack {kind}' header")
    m = _HEADER.match(lines[0].strip())
    if not m or m.group(1) != kind:
        raise IngestionError(f"{path}:1: expected '# mc3dtrack {kind} v{FORMAT_VERSION}' header")
    if int(m.group(2)) != FORMAT_VERSION:
        raise IngestionError(f"{path}:1: unsupported {kind} version {m.group(2)}")
    return int(m.group(3)) if m.group(3) else None


def _rows(lines: list[str]):
    for lineno, row in enumerate(csv.reader(lines[1:]), start=2):
        if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
            continue
        yield lineno, [f.strip() for f in row]


def _number(text: str, lineno: int, field: str, path, integer: bool = False):
    try:
        return int(text) if integer else float(text)
    except ValueError:
        kind = "integer" if integer else "number"
        raise IngestionError(f"{path}:{lineno}: field '{field}' is not a {kind}: {text!r}") from None


def write_detections(path, frames: Iterable[tuple[int, Mapping[int, Sequence[Detection]]]], n_keypoints: int) -> None:
    """``frames`` yields ``(frame, {camera_id: detections})``."""
    with open(path, "w", newline="") as fh:
        fh.write(_header("detections", n_keypoints))
        w = csv.writer(fh, lineterminator="\n")
        for t, per_cam in frames:
            for cam_id in sorted(per_cam):
                for d in per_cam[cam_id]:
                    width, height = np.exp(d.bbox[2:])
                    row = [int(t), int(cam_id), _fmt(d.bbox[0]), _fmt(d.bbox[1]), _fmt(width), _fmt(height), _fmt(d.confidence)]
                    for (x, y), v in zip(d.keypoints, d.visible):
                        row += [_fmt(x), _fmt(y), int(bool(v))]
                    w.writerow(row)


def read_detections(path) -> tuple[dict[int, dict[int, list[Detection]]], int | None]:
    """Parse a detection file into ``{frame: {camera_id: [Detection]}}``.

    Rows that parse but cannot describe a box (non-positive or non-finite
    size, non-finite corner) are skipped with a warning. Returns the frames
    and the keypoint count, ``None`` when the file holds no keypoints info.
    """
    lines = Path(path).read_text().splitlines()
    P = _read_header(lines, "detections", path)
    names = ["frame", "camera_id", "left", "top", "width", "height", "confidence"]
    out: dict[int, dict[int, list[Detection]]] = defaultdict(lambda: defaultdict(list))
    for lineno, row in _rows(lines):
        if len(row) < 7 or (len(row) - 7) % 3:
            raise IngestionError(f"{path}:{lineno}: expected 7 + 3*P fields, got {len(row)}")
        n = (len(row) - 7) // 3
        if P is None:
            P = n
        elif n != P:
            raise IngestionError(f"{path}:{lineno}: {n} keypoints where the file declares {P}")
        t = _number(row[0], lineno, names[0], path, integer=True)
        cam = _number(row[1], lineno, names[1], path, integer=True)
        left, top, width, height, conf = (_number(row[k], lineno, names[k], path) for k in range(2, 7))
        kp = np.array([_number(x, lineno, f"kp{i // 3 + 1}", path) for i, x in enumerate(row[7:])], dtype=float).reshape(n, 3)
        if t < 0:
            raise IngestionError(f"{path}:{lineno}: field 'frame' must be non-negative")
        if not (width > 0 and height > 0 and math.isfinite(width) and math.isfinite(height)
                and math.isfinite(left) and math.isfinite(top)):
            log.warning("%s:%d: skipping detection with an invalid box", path, lineno)
            continue
        visible = (kp[:, 2] > 0) & np.isfinite(kp[:, :2]).all(axis=1)
        xy = np.where(visible[:, None], kp[:, :2], 0.0)
        out[t][cam].append(Detection.from_pixels(cam, left, top, width, height, xy, visible, conf if math.isfinite(conf) else 0.0))
    return {t: dict(v) for t, v in out.items()}, P


def write_trajectories(path, records: Iterable[tuple[int, int, np.ndarray, np.ndarray, np.ndarray]], n_keypoints: int) -> None:
    """``records`` yields ``(frame, id, position, half_lengths, keypoints)``."""
    with open(path, "w", newline="") as fh:
        fh.write(_header("trajectories", n_keypoints))
        w = csv.writer(fh, lineterminator="\n")
        for t, traj_id, pos, half, kp in records:
            kp = np.asarray(kp, dtype=float).reshape(-1, 3)
            w.writerow([int(t), int(traj_id), *map(_fmt, pos), *map(_fmt, half), *map(_fmt, kp.ravel())])


def trajectory_records(trajectories: TrajectorySet):
    for t, traj_id, p in trajectories:
        kp = np.zeros((0, 3)) if p.keypoints is None else p.keypoints
        half = np.full(3, np.nan) if p.half_lengths is None else p.half_lengths
        yield t, traj_id, p.position, half, kp


def read_trajectories(path) -> tuple[TrajectorySet, int | None]:
    lines = Path(path).read_text().splitlines()
    P = _read_header(lines, "trajectories", path)
    out = TrajectorySet()
    names = ["frame", "track_id", "x", "y", "z", "ax", "ay", "az"]
    for lineno, row in _rows(lines):
        if len(row) < 8 or (len(row) - 8) % 3:
            raise IngestionError(f"{path}:{lineno}: expected 8 + 3*P fields, got {len(row)}")
        n = (len(row) - 8) // 3
        if P is None:
            P = n
        elif n != P:
            raise IngestionError(f"{path}:{lineno}: {n} keypoints where the file declares {P}")
        t = _number(row[0], lineno, names[0], path, integer=True)
        traj_id = _number(row[1], lineno, names[1], path, integer=True)
        vals = [_number(row[k], lineno, names[k], path) for k in range(2, 8)]
        kp = np.array([_number(x, lineno, f"kp{i // 3 + 1}", path) for i, x in enumerate(row[8:])], dtype=float)
        try:
            out.add(t, traj_id, vals[:3], vals[3:], kp.reshape(n, 3) if n else None)
        except ValueError as exc:
            raise IngestionError(f"{path}:{lineno}: {exc}") from None
    return out, P
