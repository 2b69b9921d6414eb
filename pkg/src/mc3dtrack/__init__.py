"""Online multi-camera 3D multi-object tracking and pose estimation."""

from .association import MISS, GatingConfig, associate_all, build_cost_matrix, solve_assignment
from .clustering import FlatMeanShift, meanshift_cluster
from .estimator import MultiCameraTracker
from .filtering import GaussianState, MotionConfig, UTConfig
from .geometry import CameraModel, load_calibration
from .metrics import MetricConfig, TrajectorySet, evaluate
from .simulator import Scenario, simulate, standard_scenario
from .tracker import BirthConfig, Detection, TerminationConfig, TrackerConfig, TrackPool, step

__version__ = "0.1.0"

__all__ = [
    "MISS",
    "BirthConfig",
    "CameraModel",
    "Detection",
    "FlatMeanShift",
    "GatingConfig",
    "GaussianState",
    "MetricConfig",
    "MotionConfig",
    "MultiCameraTracker",
    "Scenario",
    "TerminationConfig",
    "TrackPool",
    "TrackerConfig",
    "TrajectorySet",
    "UTConfig",
    "associate_all",
    "build_cost_matrix",
    "evaluate",
    "load_calibration",
    "meanshift_cluster",
    "simulate",
    "solve_assignment",
    "standard_scenario",
    "step",
]
