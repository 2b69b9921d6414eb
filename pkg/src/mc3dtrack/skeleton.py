"""Standing-pose keypoint templates.

Coordinates are for a 1.8 m person facing +y with +x on their right and the
origin on the ground between the feet. ``swing`` marks how a joint moves in
the simulated gait: positive values swing forward with the left leg.
"""

from __future__ import annotations

import numpy as np

REFERENCE_HALF_LENGTHS = np.array([0.3, 0.3, 0.9])

# name, x, y, z, swing
_MPII15 = [
    ("head_top", 0.0, 0.0, 1.78, 0.0),
    ("neck", 0.0, 0.0, 1.52, 0.0),
    ("r_shoulder", 0.19, 0.0, 1.45, 0.0),
    ("r_elbow", 0.22, 0.0, 1.15, 0.3),
    ("r_wrist", 0.24, 0.0, 0.88, 0.6),
    ("l_shoulder", -0.19, 0.0, 1.45, 0.0),
    ("l_elbow", -0.22, 0.0, 1.15, -0.3),
    ("l_wrist", -0.24, 0.0, 0.88, -0.6),
    ("r_hip", 0.1, 0.0, 0.95, 0.0),
    ("r_knee", 0.1, 0.0, 0.52, -0.5),
    ("r_ankle", 0.1, 0.0, 0.08, -1.0),
    ("l_hip", -0.1, 0.0, 0.95, 0.0),
    ("l_knee", -0.1, 0.0, 0.52, 0.5),
    ("l_ankle", -0.1, 0.0, 0.08, 1.0),
    ("pelvis", 0.0, 0.0, 0.95, 0.0),
]

_COCO18 = [
    ("nose", 0.0, 0.1, 1.65, 0.0),
    ("neck", 0.0, 0.0, 1.52, 0.0),
    ("r_shoulder", 0.19, 0.0, 1.45, 0.0),
    ("r_elbow", 0.22, 0.0, 1.15, 0.3),
    ("r_wrist", 0.24, 0.0, 0.88, 0.6),
    ("l_shoulder", -0.19, 0.0, 1.45, 0.0),
    ("l_elbow", -0.22, 0.0, 1.15, -0.3),
    ("l_wrist", -0.24, 0.0, 0.88, -0.6),
    ("r_hip", 0.1, 0.0, 0.95, 0.0),
    ("r_knee", 0.1, 0.0, 0.52, -0.5),
    ("r_ankle", 0.1, 0.0, 0.08, -1.0),
    ("l_hip", -0.1, 0.0, 0.95, 0.0),
    ("l_knee", -0.1, 0.0, 0.52, 0.5),
    ("l_ankle", -0.1, 0.0, 0.08, 1.0),
    ("r_eye", 0.03, 0.08, 1.69, 0.0),
    ("l_eye", -0.03, 0.08, 1.69, 0.0),
    ("r_ear", 0.07, 0.0, 1.67, 0.0),
    ("l_ear", -0.07, 0.0, 1.67, 0.0),
]

_BODY25 = [
    ("nose", 0.0, 0.1, 1.65, 0.0),
    ("neck", 0.0, 0.0, 1.52, 0.0),
    ("r_shoulder", 0.19, 0.0, 1.45, 0.0),
    ("r_elbow", 0.22, 0.0, 1.15, 0.3),
    ("r_wrist", 0.24, 0.0, 0.88, 0.6),
    ("l_shoulder", -0.19, 0.0, 1.45, 0.0),
    ("l_elbow", -0.22, 0.0, 1.15, -0.3),
    ("l_wrist", -0.24, 0.0, 0.88, -0.6),
    ("mid_hip", 0.0, 0.0, 0.95, 0.0),
    ("r_hip", 0.1, 0.0, 0.95, 0.0),
    ("r_knee", 0.1, 0.0, 0.52, -0.5),
    ("r_ankle", 0.1, 0.0, 0.08, -1.0),
    ("l_hip", -0.1, 0.0, 0.95, 0.0),
    ("l_knee", -0.1, 0.0, 0.52, 0.5),
    ("l_ankle", -0.1, 0.0, 0.08, 1.0),
    ("r_eye", 0.03, 0.08, 1.69, 0.0),
    ("l_eye", -0.03, 0.08, 1.69, 0.0),
    ("r_ear", 0.07, 0.0, 1.67, 0.0),
    ("l_ear", -0.07, 0.0, 1.67, 0.0),
    ("l_big_toe", -0.12, 0.15, 0.03, 1.0),
    ("l_small_toe", -0.16, 0.13, 0.03, 1.0),
    ("l_heel", -0.1, -0.05, 0.03, 1.0),
    ("r_big_toe", 0.12, 0.15, 0.03, -1.0),
    ("r_small_toe", 0.16, 0.13, 0.03, -1.0),
    ("r_heel", 0.1, -0.05, 0.03, -1.0),
]

CONVENTIONS = {15: _MPII15, 18: _COCO18, 25: _BODY25}


def _table(n_keypoints: int):
    try:
        return CONVENTIONS[n_keypoints]
    except KeyError:
        raise ValueError(f"unsupported keypoint count {n_keypoints}; expected one of {sorted(CONVENTIONS)}") from None


def joint_names(n_keypoints: int) -> list[str]:
    return [row[0] for row in _table(n_keypoints)]


def swing_weights(n_keypoints: int) -> np.ndarray:
    return np.array([row[4] for row in _table(n_keypoints)])


def standing_template(n_keypoints: int = 15, half_lengths=REFERENCE_HALF_LENGTHS) -> np.ndarray:
    """Joint positions ``(P, 3)`` relative to the ground point under the body centre."""
    pts = np.array([row[1:4] for row in _table(n_keypoints)], dtype=float)
    return pts * (np.asarray(half_lengths, dtype=float) / REFERENCE_HALF_LENGTHS)
