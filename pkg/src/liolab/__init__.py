"""SE(3)-manifold LiDAR-inertial odometry with uncertainty-aware deskewing.

Layers, bottom up: ``liegroup`` (rotation/transform primitives),
``state`` (filter state and tangent algebra), ``propagation`` (discrete
IMU models and error Jacobians), ``jointcov`` (correlated predicted
poses), ``uamc`` (probabilistic motion compensation), ``planarmap``
(voxelized plane map), ``eskf`` (the filter loop), ``sim`` and
``pipeline`` (synthetic experiments), ``io`` (file formats), ``cli``.
"""

from .liegroup import Pose3, se3_exp, se3_log, so3_exp, so3_log
from .state import BaselineNavState, ImuNoiseParams, ImuSample, NavState, boxminus, boxplus
from .propagation import (
    PropagationStep,
    error_jacobians,
    propagate_baseline,
    propagate_batch,
    propagate_covariance,
    propagate_se3,
)
from .jointcov import PoseHistory, RelCovResult, advance_history, relative_cov
from .uamc import ExtrinsicCalib, ProbabilisticPoint, RawPoint, undistort_point, undistort_scan
from .planarmap import PlanarMap, PlanarMapConfig, PlaneFeature
from .eskf import FilterConfig, LioFilter, ScanResult, update
from .sim import TwistProfile, WorldModel, ground_truth_trajectory, synthesize_imu, synthesize_scan

__version__ = "0.1.0"

__all__ = [
    "Pose3",
    "se3_exp",
    "se3_log",
    "so3_exp",
    "so3_log",
    "NavState",
    "BaselineNavState",
    "ImuSample",
    "ImuNoiseParams",
    "boxplus",
    "boxminus",
    "PropagationStep",
    "propagate_se3",
    "propagate_baseline",
    "propagate_batch",
    "propagate_covariance",
    "error_jacobians",
    "PoseHistory",
    "RelCovResult",
    "advance_history",
    "relative_cov",
    "RawPoint",
    "ProbabilisticPoint",
    "ExtrinsicCalib",
    "undistort_point",
    "undistort_scan",
    "PlanarMap",
    "PlanarMapConfig",
    "PlaneFeature",
    "FilterConfig",
    "LioFilter",
    "ScanResult",
    "update",
    "TwistProfile",
    "WorldModel",
    "ground_truth_trajectory",
    "synthesize_imu",
    "synthesize_scan",
]
