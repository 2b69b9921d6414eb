"""Tracking and pose evaluation: CLEAR-MOT, IDF1, OSPA(2), MPJPE and PCK.

Trajectories are compared either on the ground plane (Euclidean distance of
the ``x, y`` coordinates) or as axis-aligned 3D boxes (GIoU distance).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .association import MISS, solve_assignment
from .geometry import giou3d_distance


class UndefinedMetricError(ValueError):
    """Raised when a score has no meaningful value, e.g. MOTA without ground truth."""


class TrajectoryPoint(NamedTuple):
    position: np.ndarray  # (3,)
    half_lengths: np.ndarray | None = None  # (3,)
    keypoints: np.ndarray | None = None  # (P, 3)


class TrajectorySet:
    """Time-indexed states keyed by trajectory id, at most one per ``(id, t)``."""

    def __init__(self):
        self._by_id: dict[int, dict[int, TrajectoryPoint]] = {}
        self._by_time: dict[int, dict[int, TrajectoryPoint]] = {}

    def add(self, t: int, traj_id: int, position, half_lengths=None, keypoints=None) -> None:
        t, traj_id = int(t), int(traj_id)
        if t in self._by_id.get(traj_id, {}):
            raise ValueError(f"duplicate state for id {traj_id} at t={t}")
        point = TrajectoryPoint(
            np.asarray(position, dtype=float).reshape(3),
            None if half_lengths is None else np.asarray(half_lengths, dtype=float).reshape(3),
            None if keypoints is None else np.asarray(keypoints, dtype=float).reshape(-1, 3),
        )
        self._by_id.setdefault(traj_id, {})[t] = point
        self._by_time.setdefault(t, {})[traj_id] = point

    @classmethod
    def from_estimates(cls, per_frame: Sequence[Sequence], start: int = 0) -> "TrajectorySet":
        """Build from ``step`` output: one list of estimates per frame."""
        out = cls()
        for t, estimates in enumerate(per_frame, start=start):
            for e in estimates:
                out.add(t, e.id, e.position, e.half_lengths, e.keypoints)
        return out

    @classmethod
    def from_ground_truth(cls, gt) -> "TrajectorySet":
        out = cls()
        for t in range(gt.n_frames):
            for traj_id, pos, half, kp in gt.frame(t):
                out.add(t, traj_id, pos, half, kp)
        return out

    @property
    def ids(self) -> list[int]:
        return sorted(self._by_id)

    @property
    def times(self) -> list[int]:
        return sorted(self._by_time)

    def at(self, t: int) -> dict[int, TrajectoryPoint]:
        return self._by_time.get(t, {})

    def track(self, traj_id: int) -> dict[int, TrajectoryPoint]:
        return self._by_id.get(traj_id, {})

    def relabel(self, mapping) -> "TrajectorySet":
        out = TrajectorySet()
        for t, frame in self._by_time.items():
            for i, p in frame.items():
                out.add(t, mapping[i], *p)
        return out

    def __len__(self) -> int:
        return sum(len(f) for f in self._by_time.values())

    def __iter__(self) -> Iterator[tuple[int, int, TrajectoryPoint]]:
        for t in self.times:
            for i in sorted(self._by_time[t]):
                yield t, i, self._by_time[t][i]


@dataclass(frozen=True)
class MetricConfig:
    distance: str = "euclidean"
    match_threshold: float | None = None
    ospa_cutoff: float = 1.0
    ospa_order: float = 1.0
    ospa_window: int | None = None
    pck_threshold: float = 0.15
    person_radius: float = 1.0

    def __post_init__(self):
        if self.distance not in ("euclidean", "giou"):
            raise ValueError(f"unknown distance {self.distance!r}")
        if self.ospa_cutoff <= 0 or self.ospa_order < 1:
            raise ValueError("OSPA cutoff must be positive and order at least 1")
        if self.ospa_window is not None and self.ospa_window < 1:
            raise ValueError("OSPA window must be at least one frame")
        if self.threshold <= 0 or self.pck_threshold <= 0 or self.person_radius <= 0:
            raise ValueError("thresholds must be positive")

    @property
    def threshold(self) -> float:
        if self.match_threshold is not None:
            return self.match_threshold
        return 1.0 if self.distance == "euclidean" else 0.5


def _boxes(points: Sequence[TrajectoryPoint]) -> np.ndarray:
    out = np.empty((len(points), 2, 3))
    for k, p in enumerate(points):
        if p.half_lengths is None:
            raise ValueError("GIoU distance needs half lengths on every state")
        out[k, 0] = p.position - p.half_lengths
        out[k, 1] = p.position + p.half_lengths
    return out


def pairwise_distance(a: Sequence[TrajectoryPoint], b: Sequence[TrajectoryPoint], kind: str = "euclidean") -> np.ndarray:
    if not a or not b:
        return np.zeros((len(a), len(b)))
    if kind == "euclidean":
        pa = np.array([p.position[:2] for p in a])
        pb = np.array([p.position[:2] for p in b])
        return np.linalg.norm(pa[:, None] - pb[None], axis=-1)
    return giou3d_distance(_boxes(a)[:, None], _boxes(b)[None])


class Match(NamedTuple):
    t: int
    gt_id: int
    est_id: int
    distance: float


class ClearMOT(NamedTuple):
    fp: int
    fn: int
    ids: int
    mota: float


def clear_matches(gt: TrajectorySet, est: TrajectorySet, cfg: MetricConfig = MetricConfig()):
    """Per-frame CLEAR correspondences.

    Previous-frame pairs are kept while still under the threshold; the rest
    is matched optimally. Returns ``(matches, fp, fn, ids, n_gt)``.
    """
    thr = cfg.threshold
    matches: list[Match] = []
    fp = fn = ids = n_gt = 0
    current: dict[int, int] = {}  # gt id -> est id in the previous frame
    last: dict[int, int] = {}  # gt id -> est id in its latest matched frame
    for t in sorted(set(gt.times) | set(est.times)):
        g, e = gt.at(t), est.at(t)
        g_ids, e_ids = sorted(g), sorted(e)
        n_gt += len(g_ids)
        D = pairwise_distance([g[i] for i in g_ids], [e[j] for j in e_ids], cfg.distance)
        gi = {i: k for k, i in enumerate(g_ids)}
        ej = {j: k for k, j in enumerate(e_ids)}
        pairs: dict[int, int] = {}
        for gid, eid in current.items():
            if gid in gi and eid in ej and D[gi[gid], ej[eid]] <= thr:
                pairs[gid] = eid
        free_g = [i for i in g_ids if i not in pairs]
        taken = set(pairs.values())
        free_e = [j for j in e_ids if j not in taken]
        if free_g and free_e:
            sub = D[np.ix_([gi[i] for i in free_g], [ej[j] for j in free_e])]
            a = solve_assignment(np.where(sub <= thr, sub, np.inf))
            for r, c in enumerate(a):
                if c != MISS:
                    pairs[free_g[r]] = free_e[c]
        for gid in sorted(pairs):
            eid = pairs[gid]
            if gid in last and last[gid] != eid:
                ids += 1
            last[gid] = eid
            matches.append(Match(t, gid, eid, float(D[gi[gid], ej[eid]])))
        fn += len(g_ids) - len(pairs)
        fp += len(e_ids) - len(pairs)
        current = pairs
    return matches, fp, fn, ids, n_gt


def clearmot(gt: TrajectorySet, est: TrajectorySet, cfg: MetricConfig = MetricConfig()) -> ClearMOT:
    _, fp, fn, ids, n_gt = clear_matches(gt, est, cfg)
    if n_gt == 0:
        raise UndefinedMetricError("MOTA is undefined without ground truth")
    return ClearMOT(fp, fn, ids, 1.0 - (fp + fn + ids) / n_gt)


def ground_rmse(gt: TrajectorySet, est: TrajectorySet, cfg: MetricConfig = MetricConfig(), times=None) -> float:
    """Root-mean-square ground-plane error over CLEAR matches."""
    matches, *_ = clear_matches(gt, est, cfg)
    keep = None if times is None else set(times)
    err = [
        np.linalg.norm(gt.at(m.t)[m.gt_id].position[:2] - est.at(m.t)[m.est_id].position[:2])
        for m in matches
        if keep is None or m.t in keep
    ]
    if not err:
        raise UndefinedMetricError("no matched states")
    return float(np.sqrt(np.mean(np.square(err))))


def idf1(gt: TrajectorySet, est: TrajectorySet, cfg: MetricConfig = MetricConfig()) -> float:
    """Identity F1 from the one-to-one trajectory matching that maximises IDTP."""
    n_gt, n_est = len(gt), len(est)
    if n_gt == 0:
        raise UndefinedMetricError("IDF1 is undefined without ground truth")
    if n_est == 0:
        return 0.0
    g_ids, e_ids = gt.ids, est.ids
    gi = {i: k for k, i in enumerate(g_ids)}
    ej = {j: k for k, j in enumerate(e_ids)}
    overlap = np.zeros((len(g_ids), len(e_ids)))
    for t in sorted(set(gt.times) & set(est.times)):
        g, e = gt.at(t), est.at(t)
        gs, es = sorted(g), sorted(e)
        D = pairwise_distance([g[i] for i in gs], [e[j] for j in es], cfg.distance)
        r, c = np.nonzero(D <= cfg.threshold)
        for a, b in zip(r, c):
            overlap[gi[gs[a]], ej[es[b]]] += 1
    a = solve_assignment(-overlap)
    idtp = sum(overlap[r, c] for r, c in enumerate(a) if c != MISS)
    return float(2 * idtp / (n_gt + n_est))


def _ospa_from_matrix(D: np.ndarray, cutoff: float, order: float) -> float:
    n, m = D.shape
    big = max(n, m)
    if big == 0:
        return 0.0
    total = cutoff**order * abs(n - m)
    if n and m:
        a = solve_assignment(D**order)
        total += sum(D[r, c] ** order for r, c in enumerate(a) if c != MISS)
    return float((total / big) ** (1.0 / order))


def ospa2(gt: TrajectorySet, est: TrajectorySet, cfg: MetricConfig = MetricConfig(), base_distance: str | None = None) -> np.ndarray:
    """OSPA over trajectories for every window ending at each frame.

    The window is ``[first frame, t]`` by default, or the last
    ``cfg.ospa_window`` frames. Inside a window two trajectories are compared
    by the mean of their capped per-frame distance over the frames where
    either exists, with the cutoff charged when only one does. Returns one
    value per frame from the first to the last frame of either set.
    """
    kind = base_distance or cfg.distance
    c, p = cfg.ospa_cutoff, cfg.ospa_order
    times = sorted(set(gt.times) | set(est.times))
    if not times:
        return np.zeros(0)
    t0, t1 = times[0], times[-1]
    T = t1 - t0 + 1
    g_ids, e_ids = gt.ids, est.ids
    G, E = len(g_ids), len(e_ids)
    g_on = np.zeros((G, T), dtype=bool)
    e_on = np.zeros((E, T), dtype=bool)
    d = np.full((G, E, T), c)
    gi = {i: k for k, i in enumerate(g_ids)}
    ej = {j: k for k, j in enumerate(e_ids)}
    for t in times:
        g, e = gt.at(t), est.at(t)
        gs, es = sorted(g), sorted(e)
        rows = [gi[i] for i in gs]
        cols = [ej[j] for j in es]
        g_on[rows, t - t0] = True
        e_on[cols, t - t0] = True
        if gs and es:
            d[np.ix_(rows, cols, [t - t0])] = np.minimum(
                pairwise_distance([g[i] for i in gs], [e[j] for j in es], kind), c
            )[..., None]
    both = g_on[:, None] & e_on[None]
    either = g_on[:, None] | e_on[None]
    contrib = np.where(both, d**p, np.where(either, c**p, 0.0))
    zero = np.zeros((G, E, 1))
    cum_sum = np.concatenate([zero, np.cumsum(contrib, axis=-1)], axis=-1)
    cum_cnt = np.concatenate([zero, np.cumsum(either, axis=-1)], axis=-1)
    cum_g = np.concatenate([np.zeros((G, 1)), np.cumsum(g_on, axis=-1)], axis=-1)
    cum_e = np.concatenate([np.zeros((E, 1)), np.cumsum(e_on, axis=-1)], axis=-1)

    out = np.empty(T)
    for k in range(T):
        lo = 0 if cfg.ospa_window is None else max(0, k + 1 - cfg.ospa_window)
        hi = k + 1
        g_live = np.flatnonzero(cum_g[:, hi] - cum_g[:, lo] > 0)
        e_live = np.flatnonzero(cum_e[:, hi] - cum_e[:, lo] > 0)
        sub_s = (cum_sum[:, :, hi] - cum_sum[:, :, lo])[np.ix_(g_live, e_live)]
        sub_n = (cum_cnt[:, :, hi] - cum_cnt[:, :, lo])[np.ix_(g_live, e_live)]
        D = (sub_s / np.maximum(sub_n, 1)) ** (1.0 / p)
        out[k] = _ospa_from_matrix(D, c, p)
    return out


def match_persons(gt: TrajectorySet, est: TrajectorySet, radius: float = 1.0, times=None) -> list[Match]:
    """Per-frame optimal one-to-one matching on the ground plane within ``radius``."""
    out = []
    frames = sorted(set(gt.times) & set(est.times)) if times is None else sorted(times)
    for t in frames:
        g, e = gt.at(t), est.at(t)
        gs, es = sorted(g), sorted(e)
        if not gs or not es:
            continue
        D = pairwise_distance([g[i] for i in gs], [e[j] for j in es])
        a = solve_assignment(np.where(D <= radius, D, np.inf))
        out.extend(Match(t, gs[r], es[c], float(D[r, c])) for r, c in enumerate(a) if c != MISS)
    return out


def _joint_errors(gt: TrajectorySet, est: TrajectorySet, cfg: MetricConfig, times) -> np.ndarray:
    errs = []
    for m in match_persons(gt, est, cfg.person_radius, times):
        a, b = gt.at(m.t)[m.gt_id].keypoints, est.at(m.t)[m.est_id].keypoints
        if a is None or b is None:
            continue
        if a.shape != b.shape:
            raise ValueError(f"skeleton sizes differ at t={m.t}: {a.shape} vs {b.shape}")
        e = np.linalg.norm(a - b, axis=1)
        errs.append(e[np.isfinite(e)])
    errs = np.concatenate(errs) if errs else np.zeros(0)
    if errs.size == 0:
        raise UndefinedMetricError("no matched persons with skeletons")
    return errs


def mpjpe(gt: TrajectorySet, est: TrajectorySet, cfg: MetricConfig = MetricConfig(), times=None) -> float:
    """Mean per-joint position error in millimetres."""
    return float(1000.0 * _joint_errors(gt, est, cfg, times).mean())


def pck(gt: TrajectorySet, est: TrajectorySet, cfg: MetricConfig = MetricConfig(), times=None, threshold: float | None = None) -> float:
    """Percentage of matched joints within ``threshold`` meters."""
    thr = cfg.pck_threshold if threshold is None else threshold
    return float(100.0 * np.mean(_joint_errors(gt, est, cfg, times) <= thr))


def evaluate(gt: TrajectorySet, est: TrajectorySet, cfg: MetricConfig = MetricConfig(), times: Iterable[int] | None = None) -> dict:
    """Every score in one record; pose scores are ``None`` when undefined."""
    mot = clearmot(gt, est, cfg)
    series = ospa2(gt, est, cfg)
    rec = {
        "mota": mot.mota,
        "fp": mot.fp,
        "fn": mot.fn,
        "ids": mot.ids,
        "idf1": idf1(gt, est, cfg),
        "ospa2": float(series[-1]) if series.size else 0.0,
        "n_gt": len(gt),
        "n_est": len(est),
    }
    for name, fn in (("rmse", ground_rmse), ("mpjpe", mpjpe), ("pck", pck)):
        try:
            rec[name] = fn(gt, est, cfg, times=times)
        except UndefinedMetricError:
            rec[name] = None
    return rec
