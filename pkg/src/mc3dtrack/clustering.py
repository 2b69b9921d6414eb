"""Flat-kernel mean-shift used to group back-projected detections at birth."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted


def meanshift_cluster(points, bandwidth: float, tol: float = 1e-4, max_iter: int = 100):
    """Mode-seek from every point, merge modes closer than ``bandwidth / 2``.

    Returns ``(centroids, labels)``; each point joins its nearest mode.
    Modes are merged in order of decreasing support so the result does not
    depend on anything but the input order for exact ties.
    """
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    X = np.asarray(points, dtype=float)
    if X.ndim != 2:
        X = X.reshape(len(X), -1)
    if len(X) == 0:
        return np.empty((0, X.shape[1])), np.empty(0, dtype=int)

    modes = X.copy()
    active = np.ones(len(X), dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        d = np.linalg.norm(modes[idx, None, :] - X[None], axis=-1)
        W = d <= bandwidth
        counts = W.sum(axis=1)
        has = counts > 0
        new = modes[idx].copy()
        new[has] = (W[has] @ X) / counts[has, None]
        shift = np.linalg.norm(new - modes[idx], axis=1)
        modes[idx] = new
        active[idx[shift < tol]] = False

    support = (np.linalg.norm(modes[:, None, :] - X[None], axis=-1) <= bandwidth).sum(axis=1)
    order = np.lexsort((np.arange(len(modes)), -support))
    close = (np.linalg.norm(modes[:, None, :] - modes[None], axis=-1) < bandwidth / 2).tolist()
    kept: list[int] = []
    for i in order:
        if not any(close[i][k] for k in kept):
            kept.append(i)
    centroids = modes[kept]
    labels = np.argmin(np.linalg.norm(X[:, None, :] - centroids[None], axis=-1), axis=1)
    return centroids, labels


class FlatMeanShift(ClusterMixin, BaseEstimator):
    """Estimator wrapper around :func:`meanshift_cluster`.

    Parameters
    ----------
    bandwidth : float
        Radius of the flat kernel, in the units of the data (meters).
    tol : float
        Convergence tolerance on the per-iteration mode shift.
    max_iter : int
        Iteration cap for each mode.
    """

    def __init__(self, bandwidth: float = 0.5, tol: float = 1e-4, max_iter: int = 100):
        self.bandwidth = bandwidth
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=0)
        self.cluster_centers_, self.labels_ = meanshift_cluster(X, self.bandwidth, self.tol, self.max_iter)
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        X = check_array(X)
        return np.argmin(np.linalg.norm(X[:, None, :] - self.cluster_centers_[None], axis=-1), axis=1)
