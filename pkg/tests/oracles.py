"""Reference computations written independently of the package internals.

They favour obviousness over speed: explicit loops, exhaustive enumeration,
brute-force sampling.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def project(M, p):
    h = M @ np.append(p, 1.0)
    return h[:2] / h[2]


def dense_ellipsoid_box(M, center, half_lengths, n=10_000):
    """Pixel box of ``n`` points spread over the ellipsoid surface (Fibonacci lattice)."""
    k = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * k / n)
    theta = np.pi * (1 + 5**0.5) * k
    unit = np.column_stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)])
    pts = np.asarray(center) + unit * np.asarray(half_lengths)
    uv = np.array([project(M, p) for p in pts])
    (l, t), (r, b) = uv.min(axis=0), uv.max(axis=0)
    return l, t, r, b


def gaussian_density(x, mean, cov):
    d = np.asarray(x) - np.asarray(mean)
    k = len(d)
    return math.exp(-0.5 * d @ np.linalg.solve(cov, d)) / math.sqrt((2 * math.pi) ** k * np.linalg.det(cov))


def mc_box_likelihood(b, mu, P, h, R, n=1_000_000, seed=0, chunk=100_000):
    """``E_x[N(b; h(x), R)]`` for ``x ~ N(mu, P)`` by plain Monte Carlo.

    ``h`` maps an ``(m, L)`` array of states to ``(m, D)`` measurements.
    """
    rng = np.random.default_rng(seed)
    Rinv = np.linalg.inv(R)
    norm = 1.0 / math.sqrt((2 * math.pi) ** len(b) * np.linalg.det(R))
    total = 0.0
    for start in range(0, n, chunk):
        x = rng.multivariate_normal(mu, P, size=min(chunk, n - start))
        d = np.asarray(b) - h(x)
        total += np.exp(-0.5 * np.einsum("ni,ij,nj->n", d, Rinv, d)).sum()
    return norm * total / n


def brute_force_assignment(C):
    """Best ``(n_matched, total_cost)`` over every injective partial row map."""
    C = np.asarray(C, dtype=float)
    n, m = C.shape
    best = (0, 0.0)
    for k in range(min(n, m), 0, -1):
        costs = []
        for rows in itertools.combinations(range(n), k):
            for cols in itertools.permutations(range(m), k):
                vals = [C[r, c] for r, c in zip(rows, cols)]
                if all(math.isfinite(v) for v in vals):
                    costs.append(sum(vals))
        if costs:
            return k, min(costs)
    return best


def kalman_update(mu, P, z, H, R):
    S = H @ P @ H.T + R
    K = P @ H.T @ np.linalg.inv(S)
    return mu + K @ (z - H @ mu), P - K @ S @ K.T


def triangulate(Ms, uvs):
    """Linear two-or-more-view triangulation (DLT)."""
    rows = []
    for M, (u, v) in zip(Ms, uvs):
        rows.append(u * M[2] - M[0])
        rows.append(v * M[2] - M[1])
    _, _, Vt = np.linalg.svd(np.array(rows))
    X = Vt[-1]
    return X[:3] / X[3]


def flat_mean_shift(points, bandwidth, tol=1e-6, max_iter=1000):
    """Mode of every point under a flat kernel, then greedy merge by support."""
    X = np.asarray(points, dtype=float)
    modes = []
    for x in X:
        m = x.copy()
        for _ in range(max_iter):
            near = [p for p in X if np.linalg.norm(p - m) <= bandwidth]
            new = np.mean(near, axis=0)
            done = np.linalg.norm(new - m) < tol
            m = new
            if done:
                break
        modes.append(m)
    support = [sum(np.linalg.norm(p - m) <= bandwidth for p in X) for m in modes]
    order = sorted(range(len(modes)), key=lambda i: (-support[i], i))
    kept = []
    for i in order:
        if all(np.linalg.norm(modes[i] - modes[k]) >= bandwidth / 2 for k in kept):
            kept.append(i)
    return np.array([modes[i] for i in kept])


def ospa_final(gt_tracks, est_tracks, cutoff=1.0):
    """OSPA(2), order 1, over the whole span, by exhaustive trajectory pairings.

    Tracks are ``{t: (x, y)}`` dicts.
    """
    times = sorted({t for tr in gt_tracks + est_tracks for t in tr})

    def pair_distance(a, b):
        total, count = 0.0, 0
        for t in times:
            if t in a and t in b:
                total += min(cutoff, math.dist(a[t], b[t]))
                count += 1
            elif t in a or t in b:
                total += cutoff
                count += 1
        return total / count if count else 0.0

    small, large = (gt_tracks, est_tracks) if len(gt_tracks) <= len(est_tracks) else (est_tracks, gt_tracks)
    n, m = len(small), len(large)
    if m == 0:
        return 0.0
    best = math.inf
    for perm in itertools.permutations(range(m), n):
        cost = sum(pair_distance(small[i], large[j]) for i, j in enumerate(perm))
        best = min(best, cost)
    return (best + cutoff * (m - n)) / m


def idf1_brute(gt_tracks, est_tracks, threshold=1.0):
    """IDF1 by trying every one-to-one trajectory pairing."""
    def overlap(a, b):
        return sum(1 for t in a if t in b and math.dist(a[t], b[t]) <= threshold)

    n_gt = sum(len(a) for a in gt_tracks)
    n_est = sum(len(b) for b in est_tracks)
    small, large, flip = (gt_tracks, est_tracks, False) if len(gt_tracks) <= len(est_tracks) else (est_tracks, gt_tracks, True)
    best = 0
    for perm in itertools.permutations(range(len(large)), len(small)):
        tp = sum(overlap(small[i], large[j]) if not flip else overlap(large[j], small[i]) for i, j in enumerate(perm))
        best = max(best, tp)
    return 2 * best / (n_gt + n_est)


def six_point_boxes(M, states):
    """``[l, t, log w, log h]`` from the six axis-extreme points of each 9-dim state."""
    states = np.atleast_2d(states)
    c, half = states[:, None, 0:3], np.exp(states[:, None, 6:9])
    signs = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]])
    pts = c + signs * half  # (n, 6, 3)
    h = np.einsum("ij,nkj->nki", M[:, :3], pts) + M[:, 3]
    uv = h[..., :2] / h[..., 2:]
    lo, hi = uv.min(axis=1), uv.max(axis=1)
    return np.column_stack([lo, np.log(hi - lo)])


def subset_dp_assignment(C):
    """Exhaustive ``(n_matched, total_cost)`` by dynamic programming over used-column sets.

    Each row either stays unmatched or takes a free finite column; every
    injective partial map is reachable, so the optimum equals full
    enumeration at a fraction of the cost for up to ~12 columns.
    """
    C = np.asarray(C, dtype=float)
    n, m = C.shape
    size = 1 << m
    count = np.full(size, -1)
    cost = np.full(size, np.inf)
    count[0], cost[0] = 0, 0.0
    masks = np.arange(size)
    for i in range(n):
        new_count, new_cost = count.copy(), cost.copy()
        for j in range(m):
            if not math.isfinite(C[i, j]):
                continue
            bit = 1 << j
            src = masks[(masks & bit == 0) & (count >= 0)]
            dst = src | bit
            cand_n, cand_c = count[src] + 1, cost[src] + C[i, j]
            better = (cand_n > new_count[dst]) | ((cand_n == new_count[dst]) & (cand_c < new_cost[dst]))
            new_count[dst[better]] = cand_n[better]
            new_cost[dst[better]] = cand_c[better]
        count, cost = new_count, new_cost
    k = count.max()
    return int(k), float(cost[count == k].min()) if k > 0 else 0.0
