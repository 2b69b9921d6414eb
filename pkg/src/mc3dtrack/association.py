"""Per-camera cost matrices, gating and optimal 2D assignment.

Assignments are returned as integer arrays with one entry per track: the
0-based detection index, or ``MISS`` (-1) when the track is unassigned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .filtering import UTConfig, gaussian_logpdf_batch, moments_from_sigma, precision, sigma_points_batch
from .geometry import CameraModel, GeometryError, bbox_bottom_to_ground, boxes_to_ground, project_ellipsoids_multi

MISS = -1


@dataclass(frozen=True)
class GatingConfig:
    tau_g: float = 2.0
    tau_c: float = 10.0
    iota_inf: float = 100.0

    def __post_init__(self):
        if min(self.tau_g, self.tau_c, self.iota_inf) <= 0:
            raise ValueError("gating thresholds must be positive")


def gate(b, track_mean, cam: CameraModel, cfg: GatingConfig = GatingConfig()) -> bool:
    """Ground-plane gate: closed ball of radius ``tau_g`` around the track."""
    try:
        g = bbox_bottom_to_ground(b, cam)
    except GeometryError:
        return False
    return bool(np.hypot(*(np.asarray(track_mean)[:2] - g)) <= cfg.tau_g)


class CameraMoments(NamedTuple):
    """Predicted box moments of every track in one camera."""

    ybar: np.ndarray  # (n, 4)
    S: np.ndarray  # (n, 4, 4)
    Pxy: np.ndarray  # (n, 9, 4)
    ok: np.ndarray  # (n,)
    prec: tuple  # precision(S): (S^-1, log det S, nonsingular)


def camera_moments(
    mean_ks: np.ndarray, cov_ks: np.ndarray, cameras: Sequence[CameraModel], ut: UTConfig = UTConfig()
) -> dict[int, CameraMoments]:
    """UT box moments for all tracks and cameras from a single set of sigma points."""
    if len(mean_ks) == 0 or not cameras:
        return {}
    X = sigma_points_batch(mean_ks, cov_ks, ut)
    Ms = np.stack([c.matrix for c in cameras])
    Y, ok = project_ellipsoids_multi(Ms, X[..., 0:3], X[..., 6:9])
    R = np.stack([c.R_b for c in cameras])[:, None]
    ybar, S, Pxy = moments_from_sigma(mean_ks, X, Y, R, ut)
    ok = ok.all(axis=-1)
    Sinv, logdet, good = precision(S)
    return {
        c.id: CameraMoments(ybar[k], S[k], Pxy[k], ok[k], (Sinv[k], logdet[k], good[k])) for k, c in enumerate(cameras)
    }


def cost_from_moments(
    mean_ks: np.ndarray, moments: CameraMoments, boxes: np.ndarray, cam: CameraModel, cfg: GatingConfig = GatingConfig()
) -> np.ndarray:
    n, m = len(mean_ks), len(boxes)
    if n == 0 or m == 0:
        return np.full((n, m), np.inf)
    boxes = np.asarray(boxes, dtype=float)
    ground = boxes_to_ground(boxes, cam)
    with np.errstate(invalid="ignore"):
        gated = np.linalg.norm(mean_ks[:, None, :2] - ground[None], axis=-1) <= cfg.tau_g
    cost = -gaussian_logpdf_batch(np.broadcast_to(boxes, (n, m, 4)), moments.ybar, moments.S, moments.prec)
    cost[~moments.ok] = np.inf
    cost[~gated] = np.inf
    cost[cost > cfg.tau_c] = np.inf
    return cost


def build_cost_matrix(
    mean_ks: np.ndarray,
    cov_ks: np.ndarray,
    boxes: np.ndarray,
    cam: CameraModel,
    cfg: GatingConfig = GatingConfig(),
    ut: UTConfig = UTConfig(),
) -> np.ndarray:
    """``-log q`` for gated pairs with cost at most ``tau_c``; ``inf`` elsewhere.

    ``mean_ks``/``cov_ks`` are the predicted 9-dim blocks of ``n`` tracks and
    ``boxes`` the ``(m, 4)`` detections of one camera. Keypoints never enter
    the cost.
    """
    n, m = len(mean_ks), len(boxes)
    if n == 0 or m == 0:
        return np.full((n, m), np.inf)
    return cost_from_moments(mean_ks, camera_moments(mean_ks, cov_ks, [cam], ut)[cam.id], boxes, cam, cfg)


def solve_assignment(C) -> np.ndarray:
    """Exact assignment on a rectangular cost matrix with ``inf`` = infeasible.

    Maximises the number of matched rows, then minimises the total cost of
    the matches, which is the optimum of the miss-cost formulation when the
    miss cost dominates every finite entry. Unmatched rows get ``MISS``.

    Successive shortest augmenting paths from all free rows with
    Johnson-style potentials; ties go to the lowest column index.
    """
    C = np.asarray(C, dtype=float)
    if C.ndim != 2:
        raise ValueError("cost matrix must be 2D")
    if np.any(np.isnan(C)) or np.any(C == -np.inf):
        raise ValueError("cost matrix entries must be finite or +inf")
    n, m = C.shape
    out = np.full(n, MISS, dtype=int)
    feasible = np.isfinite(C)
    if not feasible.any():
        return out
    # every feasible row taking its own cheapest column is optimal when no two collide
    has = feasible.any(axis=1)
    best = np.argmin(np.where(feasible, C, np.inf), axis=1)
    if np.unique(best[has]).size == has.sum():
        out[has] = best[has]
        return out
    # a common shift is harmless: every maximum matching has the same size
    shifted = np.where(feasible, C - C[feasible].min(), 0.0).tolist()
    feas = feasible.tolist()
    adj = [[(j, shifted[i][j]) for j in range(m) if feas[i][j]] for i in range(n)]
    inf = math.inf
    pot_r = [0.0] * n
    pot_c = [0.0] * m
    col_of_row = [MISS] * n
    row_of_col = [MISS] * m

    while True:
        free_rows = [i for i in range(n) if col_of_row[i] == MISS and adj[i]]
        if not free_rows:
            break
        dist_r = [inf] * n
        dist_c = [inf] * m
        pred = [MISS] * m
        done = [False] * m
        for i in free_rows:
            dist_r[i] = 0.0
            for j, c in adj[i]:
                d = c + pot_r[i] - pot_c[j]
                if d < dist_c[j]:
                    dist_c[j] = d
                    pred[j] = i
        sink = MISS
        while True:
            best, bj = inf, MISS
            for j in range(m):
                if not done[j] and dist_c[j] < best:
                    best, bj = dist_c[j], j
            if bj == MISS:
                break
            done[bj] = True
            r = row_of_col[bj]
            if r == MISS:
                sink = bj
                break
            # matched edges are tight, so the row inherits the column distance
            dist_r[r] = best
            for j, c in adj[r]:
                if done[j]:
                    continue
                d = best + c + pot_r[r] - pot_c[j]
                if d < dist_c[j]:
                    dist_c[j] = d
                    pred[j] = r
        if sink == MISS:
            break
        D = dist_c[sink]
        for i in range(n):
            pot_r[i] += min(dist_r[i], D)
        for j in range(m):
            pot_c[j] += min(dist_c[j], D)
        j = sink
        while j != MISS:
            i = pred[j]
            prev = col_of_row[i]
            col_of_row[i] = j
            row_of_col[j] = i
            j = prev

    out[:] = col_of_row
    return out


def assignment_cost(C, assignment) -> tuple[int, float]:
    """Number of matches and their total cost."""
    rows = np.flatnonzero(np.asarray(assignment) != MISS)
    return len(rows), float(np.asarray(C)[rows, np.asarray(assignment)[rows]].sum())


def associate_all(
    mean_ks: np.ndarray,
    cov_ks: np.ndarray,
    boxes_by_camera: Mapping[int, np.ndarray],
    cameras: Sequence[CameraModel],
    cfg: GatingConfig = GatingConfig(),
    ut: UTConfig = UTConfig(),
    return_moments: bool = False,
):
    """Independent per-camera association; inactive cameras miss everything.

    With ``return_moments`` the predicted box moments used for the costs are
    returned as a second value, keyed by camera id.
    """
    n = len(mean_ks)
    cameras = sorted(cameras, key=lambda c: c.id)
    busy = [c for c in cameras if c.active and boxes_by_camera.get(c.id) is not None and len(boxes_by_camera[c.id])]
    moments = camera_moments(mean_ks, cov_ks, busy, ut)
    out = {}
    for cam in cameras:
        if cam.id not in moments:
            out[cam.id] = np.full(n, MISS, dtype=int)
            continue
        C = cost_from_moments(mean_ks, moments[cam.id], boxes_by_camera[cam.id], cam, cfg)
        out[cam.id] = solve_assignment(C)
    return (out, moments) if return_moments else out
