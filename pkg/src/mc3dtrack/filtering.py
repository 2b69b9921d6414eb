"""Gaussian state machinery: prediction, unscented transform and UKF updates.

The kinematic/shape block is 9-dimensional ``[rho(3), rho_dot(3), s(3)]``;
every keypoint carries an independent 6-dimensional ``[p(3), p_dot(3)]``
block. The ``*_batch`` functions operate on stacks of states and are what
the tracker calls; the single-state functions are thin wrappers.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable

import numpy as np

from .geometry import EPS_DEPTH, CameraModel, homogeneous_project, project_ellipsoids

KS_DIM = 9
KP_DIM = 6
JITTER = 1e-9
EIG_FLOOR = 1e-9
LOG_2PI = np.log(2 * np.pi)


class NonPSDError(np.linalg.LinAlgError):
    pass


class NotObservableError(ValueError):
    """A track/camera pair cannot produce a measurement prediction."""


@dataclass(frozen=True)
class UTConfig:
    alpha: float = 1.0
    kappa: float = 2.0
    beta: float = 2.0

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")

    def lam(self, L: int) -> float:
        lam = self.alpha**2 * (L + self.kappa) - L
        if L + lam <= 0:
            raise ValueError("L + lambda must be positive")
        return lam

    def weights(self, L: int) -> tuple[np.ndarray, np.ndarray]:
        return _weights(L, self.alpha, self.kappa, self.beta)


@lru_cache(maxsize=64)
def _weights(L, alpha, kappa, beta):
    lam = UTConfig(alpha, kappa, beta).lam(L)
    wm = np.full(2 * L + 1, 1.0 / (2 * (L + lam)))
    wc = wm.copy()
    wm[0] = lam / (L + lam)
    wc[0] = wm[0] + 1 - alpha**2 + beta
    wm.setflags(write=False)
    wc.setflags(write=False)
    return wm, wc


@dataclass(frozen=True)
class MotionConfig:
    dt: float = 1.0 / 30.0
    sigma_a: float = 0.5
    sigma_shape: float = 0.05
    sigma_a_kp: float = 2.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.sigma_a_kp < self.sigma_a:
            raise ValueError("keypoint acceleration noise must be at least the kinematic one")


@dataclass(frozen=True)
class GaussianState:
    mean_ks: np.ndarray
    cov_ks: np.ndarray
    mean_kp: np.ndarray
    cov_kp: np.ndarray

    @property
    def n_keypoints(self) -> int:
        return self.mean_kp.shape[0]

    @property
    def position(self) -> np.ndarray:
        return self.mean_ks[0:3]

    @property
    def velocity(self) -> np.ndarray:
        return self.mean_ks[3:6]

    @property
    def log_shape(self) -> np.ndarray:
        return self.mean_ks[6:9]

    @property
    def keypoints(self) -> np.ndarray:
        return self.mean_kp[:, :3]


def symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + np.swapaxes(P, -1, -2))


def floor_eigenvalues(P: np.ndarray, floor: float = EIG_FLOOR) -> np.ndarray:
    w, V = np.linalg.eigh(symmetrize(P))
    return symmetrize((V * np.maximum(w, floor)[..., None, :]) @ np.swapaxes(V, -1, -2))


def cv_transition(dt: float, sigma: float) -> tuple[np.ndarray, np.ndarray]:
    """Constant-velocity transition and white-noise-acceleration noise for ``[p, v]`` in 3D."""
    I = np.eye(3)
    F = np.block([[I, dt * I], [np.zeros((3, 3)), I]])
    Q = sigma**2 * np.block([[dt**4 / 4 * I, dt**3 / 2 * I], [dt**3 / 2 * I, dt**2 * I]])
    return F, Q


@lru_cache(maxsize=16)
def _transition_mats(m: MotionConfig):
    F6, Q6 = cv_transition(m.dt, m.sigma_a)
    F_ks = np.eye(KS_DIM)
    F_ks[:6, :6] = F6
    Q_ks = np.zeros((KS_DIM, KS_DIM))
    Q_ks[:6, :6] = Q6
    Q_ks[6:, 6:] = m.sigma_shape**2 * np.eye(3)
    F_kp, Q_kp = cv_transition(m.dt, m.sigma_a_kp)
    return F_ks, Q_ks, F_kp, Q_kp


def predict_batch(mean_ks, cov_ks, mean_kp, cov_kp, m: MotionConfig):
    """Kalman prediction for stacks ``(n, 9)``, ``(n, 9, 9)``, ``(n, P, 6)``, ``(n, P, 6, 6)``."""
    F_ks, Q_ks, F_kp, Q_kp = _transition_mats(m)
    mean_ks = mean_ks @ F_ks.T
    cov_ks = symmetrize(F_ks @ cov_ks @ F_ks.T + Q_ks)
    mean_kp = mean_kp @ F_kp.T
    cov_kp = symmetrize(F_kp @ cov_kp @ F_kp.T + Q_kp)
    return mean_ks, cov_ks, mean_kp, cov_kp


def kalman_predict(x: GaussianState, m: MotionConfig) -> GaussianState:
    out = predict_batch(x.mean_ks[None], x.cov_ks[None], x.mean_kp[None], x.cov_kp[None], m)
    return GaussianState(*(a[0] for a in out))


@lru_cache(maxsize=8)
def _jitter(L: int) -> np.ndarray:
    J = JITTER * np.eye(L)
    J.setflags(write=False)
    return J


def sigma_points_batch(mu: np.ndarray, P: np.ndarray, cfg: UTConfig, repair: bool = True):
    """Sigma points for stacks ``mu (B, L)``, ``P (B, L, L)``; returns ``X (B, 2L+1, L)``.

    With ``repair`` a failed Cholesky is retried after flooring eigenvalues;
    otherwise :class:`NonPSDError` is raised.
    """
    L = mu.shape[-1]
    lam = cfg.lam(L)
    A = (L + lam) * P + _jitter(L)
    try:
        S = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        if not repair:
            raise NonPSDError("covariance is not positive semi-definite") from None
        S = np.linalg.cholesky(floor_eigenvalues(A))
    cols = np.swapaxes(S, -1, -2)  # row i is the i-th column of the factor
    X = np.concatenate([np.zeros_like(mu)[..., None, :], cols, -cols], axis=-2)
    X += mu[..., None, :]
    return X


def unscented_transform(mu, P, cfg: UTConfig = UTConfig()):
    """Sigma points and weights ``(X, w_m, w_c)`` for one Gaussian."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    X = sigma_points_batch(mu[None], P[None], cfg, repair=False)[0]
    wm, wc = cfg.weights(mu.shape[0])
    return X, wm.copy(), wc.copy()


MeasurementFn = Callable[[np.ndarray], "tuple[np.ndarray, np.ndarray]"]


def moments_from_sigma(mu, X, Y, R, cfg: UTConfig):
    """UT moments from sigma points ``X (..., K, L)`` and their images ``Y (..., K, D)``.

    Leading axes broadcast, so one set of sigma points can serve several
    measurement functions. Returns ``(ybar, S, Pxy)``.
    """
    wm, wc = cfg.weights(mu.shape[-1])
    ybar = np.einsum("k,...kd->...d", wm, Y)
    dY = Y - ybar[..., None, :]
    wdY = dY * wc[:, None]
    S = symmetrize(np.swapaxes(wdY, -1, -2) @ dY) + R
    Pxy = np.swapaxes(X - mu[..., None, :], -1, -2) @ wdY
    return ybar, S, Pxy


def unscented_moments(mu, P, h: MeasurementFn, R, cfg: UTConfig):
    """Predicted measurement mean, innovation covariance and cross covariance.

    ``h`` maps sigma points ``(B, K, L)`` to ``(Y (B, K, D), ok (B,))``.
    Returns ``(ybar, S, Pxy, ok)``.
    """
    X = sigma_points_batch(mu, P, cfg)
    Y, ok = h(X)
    return (*moments_from_sigma(mu, X, Y, R, cfg), ok)


def _inverse_2x2(S):
    a, b, c, d = S[..., 0, 0], S[..., 0, 1], S[..., 1, 0], S[..., 1, 1]
    det = a * d - b * c
    good = (det != 0) & np.isfinite(det)
    r = 1.0 / np.where(good, det, 1.0)
    Sinv = np.stack([np.stack([d * r, -b * r], axis=-1), np.stack([-c * r, a * r], axis=-1)], axis=-2)
    return Sinv, good


def _inverse(S):
    """Batched inverse with a per-matrix validity flag instead of an exception."""
    if S.shape[-1] == 2:
        # keypoint innovations are 2x2; the closed form avoids a LAPACK call per batch
        return _inverse_2x2(S)
    try:
        Sinv = np.linalg.inv(S)
    except np.linalg.LinAlgError:
        sign, _ = np.linalg.slogdet(S)
        good = sign > 0
        Sinv = np.linalg.inv(np.where(good[:, None, None], S, np.eye(S.shape[-1])))
        return Sinv, good
    return Sinv, np.isfinite(Sinv).all(axis=(-2, -1))


def precision(S):
    """``(S^-1, log det S, ok)`` for a stack of covariances; ``ok`` is false where ``S`` is singular."""
    Sinv, good = _inverse(S)
    with np.errstate(invalid="ignore", divide="ignore"):
        logdet = np.log(np.linalg.det(S))
    return Sinv, logdet, good & np.isfinite(logdet)


def gaussian_logpdf_batch(z, ybar, S, prec=None):
    """Log density of ``z`` under ``N(ybar, S)``; ``z`` may carry extra middle axes.

    ``ybar (B, D)``, ``S (B, D, D)``, ``z (B, D)`` or ``(B, m, D)``. Singular
    ``S`` rows give ``-inf``. ``prec`` takes a precomputed :func:`precision`.
    """
    D = ybar.shape[-1]
    Sinv, logdet, good = precision(S) if prec is None else prec
    if z.ndim == 2:
        d = z - ybar
        maha = np.einsum("bi,bij,bj->b", d, Sinv, d)
    else:
        d = z - ybar[:, None, :]
        maha = np.einsum("bmi,bij,bmj->bm", d, Sinv, d)
        logdet, good = logdet[:, None], good[:, None]
    return np.where(good, -0.5 * (maha + logdet + D * LOG_2PI), -np.inf)


def kalman_correct_batch(mu, P, z, ybar, S, Pxy, prec=None):
    """Standard UKF correction; returns ``(mu', P', ok)`` with ``ok`` false for singular ``S``.

    ``prec`` takes a precomputed :func:`precision` of ``S``.
    """
    Sinv, ok = _inverse(S) if prec is None else (prec[0], prec[2])
    K = Pxy @ Sinv
    mu_new = mu + np.einsum("bij,bj->bi", K, z - ybar)
    P_new = symmetrize(P - K @ np.swapaxes(Pxy, -1, -2))
    if not ok.all():
        mu_new = np.where(ok[:, None], mu_new, mu)
        P_new = np.where(ok[:, None, None], P_new, P)
    return mu_new, P_new, ok


def predict_measurement(mu, P, h: MeasurementFn, R, cfg: UTConfig = UTConfig()):
    """Single-state :func:`unscented_moments`; raises :class:`NotObservableError`."""
    ybar, S, Pxy, ok = unscented_moments(np.asarray(mu, float)[None], np.asarray(P, float)[None], h, R, cfg)
    if not ok[0]:
        raise NotObservableError("measurement function failed on a sigma point")
    return ybar[0], S[0], Pxy[0]


def ukf_update(z, mu, P, h: MeasurementFn, R, cfg: UTConfig = UTConfig()):
    """Generic single-state UKF update; returns ``(log q, mu', P')``."""
    mu = np.asarray(mu, float)[None]
    P = np.asarray(P, float)[None]
    z = np.asarray(z, float)[None]
    ybar, S, Pxy, ok = unscented_moments(mu, P, h, R, cfg)
    if not ok[0]:
        return -np.inf, mu[0], P[0]
    logq = gaussian_logpdf_batch(z, ybar, S)[0]
    mu_new, P_new, good = kalman_correct_batch(mu, P, z, ybar, S, Pxy)
    if not good[0]:
        return -np.inf, mu[0], P[0]
    return logq, mu_new[0], P_new[0]


def bbox_measurement(M: np.ndarray) -> MeasurementFn:
    """Sigma points of the 9-dim block to ``[l, t, log w, log h]`` boxes."""

    def h(X):
        boxes, ok = project_ellipsoids(M, X[..., 0:3], X[..., 6:9])
        return boxes, ok.all(axis=-1)

    return h


def keypoint_measurement(M: np.ndarray) -> MeasurementFn:
    """Sigma points of a 6-dim keypoint block to pixels."""

    def h(X):
        hp = homogeneous_project(M, X[..., 0:3])
        depth = hp[..., 2]
        ok = np.all(depth > EPS_DEPTH, axis=-1)
        safe = np.where(depth > EPS_DEPTH, depth, 1.0)
        return hp[..., :2] / safe[..., None], ok

    return h


def ks_moments_batch(mean_ks, cov_ks, cam: CameraModel, cfg: UTConfig):
    return unscented_moments(mean_ks, cov_ks, bbox_measurement(cam.matrix), cam.R_b, cfg)


def predict_measurement_ks(x: GaussianState, cam: CameraModel, cfg: UTConfig = UTConfig()):
    """UT prediction of the box measurement: ``(ybar, S, P_xy)``."""
    return predict_measurement(x.mean_ks, x.cov_ks, bbox_measurement(cam.matrix), cam.R_b, cfg)


def likelihood_q(b, ybar, S) -> float:
    """Gaussian density of box ``b`` under the predicted measurement ``N(ybar, S)``."""
    logq = gaussian_logpdf_batch(np.asarray(b, float)[None], np.asarray(ybar, float)[None], np.asarray(S, float)[None])
    return float(np.exp(logq[0]))


def ukf_update_ks(b, x: GaussianState, cam: CameraModel, cfg: UTConfig = UTConfig()):
    """Update the kinematic/shape block with one box; returns ``(q, x')``.

    A track that cannot be observed by ``cam`` or has a singular innovation
    is returned unchanged with ``q = 0``.
    """
    logq, mu, P = ukf_update(b, x.mean_ks, x.cov_ks, bbox_measurement(cam.matrix), cam.R_b, cfg)
    if not np.isfinite(logq):
        return 0.0, x
    return float(np.exp(logq)), replace(x, mean_ks=mu, cov_ks=P)


def kp_update_batch(mean, cov, z, cam: CameraModel, cfg: UTConfig):
    """Independent 6-dim keypoint updates for stacks ``(B, 6)``, ``(B, 6, 6)``, ``z (B, 2)``."""
    ybar, S, Pxy, ok = unscented_moments(mean, cov, keypoint_measurement(cam.matrix), cam.R_k, cfg)
    mu_new, P_new, good = kalman_correct_batch(mean, cov, z, ybar, S, Pxy)
    keep = ok & good
    if not keep.all():
        mu_new = np.where(keep[:, None], mu_new, mean)
        P_new = np.where(keep[:, None, None], P_new, cov)
    return mu_new, P_new, keep


def ukf_update_kp(keypoints, visible, x: GaussianState, cam: CameraModel, cfg: UTConfig = UTConfig()) -> GaussianState:
    """Update every visible keypoint block with its pixel measurement."""
    visible = np.asarray(visible, dtype=bool)
    if not visible.any():
        return x
    idx = np.flatnonzero(visible)
    z = np.asarray(keypoints, dtype=float)[idx]
    mu, P, _ = kp_update_batch(x.mean_kp[idx], x.cov_kp[idx], z, cam, cfg)
    mean_kp = x.mean_kp.copy()
    cov_kp = x.cov_kp.copy()
    mean_kp[idx] = mu
    cov_kp[idx] = P
    return replace(x, mean_kp=mean_kp, cov_kp=cov_kp)
