"""Uncertainty-aware motion compensation (deskewing) of LiDAR scans.

Each time-stamped point is transformed into the IMU frame at the scan
end using the relative transform between the scan-end pose and the pose
at the point's acquisition time.  The attached 3x3 covariance combines
the relative-transform uncertainty, mapped through the point's lever
arm, with the rotated raw sensor noise:

    cov = A S_rel A^T + R S_raw R^T

where A is the upper 3x6 block of ``T_rel @ dot_operator(p_homog)`` and
R is the net rotation applied to the raw return.

Per-point poses interpolate geodesically between the bracketing
predicted poses; per-point covariance is looked up at the bracketing
entry, where the within-interval increment is second-order small.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .liegroup import Pose3, dot_operator, interpolate_pose
from .jointcov import PoseHistory, relative_cov


@dataclass(frozen=True)
class RawPoint:
    """Time-stamped LiDAR return in the sensor frame with its noise model."""

    xyz: np.ndarray
    t: float
    sigma_raw: np.ndarray


@dataclass(frozen=True)
class ProbabilisticPoint:
    """Deskewed point in the scan-end IMU frame with its covariance."""

    xyz: np.ndarray
    cov: np.ndarray
    t: float


@dataclass(frozen=True)
class ExtrinsicCalib:
    """Rigid transform from the LiDAR frame into the IMU frame."""

    T_imu_lidar: Pose3

    @staticmethod
    def identity() -> "ExtrinsicCalib":
        return ExtrinsicCalib(Pose3.identity())


def pose_at_time(h: PoseHistory, rho: float) -> tuple[Pose3, int]:
    """Pose at time rho within the history span, plus the bracketing index.

    Returns the geodesic interpolation between the bracketing entries
    and the left entry's index, which owns the covariance lookup.
    """
    times = [e.t for e in h.entries]
    if not times or rho < times[0] - 1e-12 or rho > times[-1] + 1e-12:
        raise ValueError(f"time {rho} outside history span [{times[0]}, {times[-1]}]")
    i = bisect_right(times, rho) - 1
    if i < 0:
        i = 0
    if i >= len(times) - 1:
        return h.entries[-1].pose_nominal, max(len(times) - 2, 0)
    e0, e1 = h.entries[i], h.entries[i + 1]
    s = (rho - e0.t) / (e1.t - e0.t)
    if s <= 0.0:
        return e0.pose_nominal, i
    return interpolate_pose(e0.pose_nominal, e1.pose_nominal, s), i


class _RelCovCache:
    """Memoizes per-entry relative covariances during one scan's deskew."""

    def __init__(self, h: PoseHistory, with_cross: bool):
        self.h = h
        self.with_cross = with_cross
        self._cache: dict[int, np.ndarray] = {}

    def cov(self, i: int) -> np.ndarray:
        if i not in self._cache:
            self._cache[i] = relative_cov(self.h, i, self.with_cross).cov
        return self._cache[i]


def undistort_point(
    pt: RawPoint,
    h: PoseHistory,
    ext: ExtrinsicCalib,
    with_cross: bool = True,
    with_rel_uncertainty: bool = True,
    snap_to_left: bool = False,
    _cache: _RelCovCache | None = None,
) -> ProbabilisticPoint:
    """Deskew one raw point into the scan-end IMU frame.

    ``with_rel_uncertainty=False`` drops the relative-transform term and
    returns only the rotated raw noise (plain motion compensation).
    ``snap_to_left`` evaluates the pose at the bracketing entry instead
    of interpolating, for A/B comparison.
    """
    pose_rho, i = pose_at_time(h, pt.t)
    if snap_to_left:
        pose_rho = h.entries[i].pose_nominal
    t_rel = h.entries[-1].pose_nominal.inverse() @ pose_rho
    p_imu = ext.T_imu_lidar.apply(pt.xyz)
    xyz = t_rel.apply(p_imu)

    r_net = t_rel.rot @ ext.T_imu_lidar.rot
    cov = r_net @ pt.sigma_raw @ r_net.T
    if with_rel_uncertainty:
        cache = _cache if _cache is not None else _RelCovCache(h, with_cross)
        sig_rel = cache.cov(i)
        a = t_rel.matrix() @ dot_operator(np.concatenate([p_imu, [1.0]]))
        a3 = a[0:3, :]
        cov = cov + a3 @ sig_rel @ a3.T
    return ProbabilisticPoint(xyz, 0.5 * (cov + cov.T), pt.t)


def undistort_scan(
    scan: list[RawPoint],
    h: PoseHistory,
    ext: ExtrinsicCalib,
    with_cross: bool = True,
    with_rel_uncertainty: bool = True,
    snap_to_left: bool = False,
) -> list[ProbabilisticPoint]:
    """Order-preserving deskew of a whole scan."""
    cache = _RelCovCache(h, with_cross)
    out = []
    for idx, pt in enumerate(scan):
        try:
            out.append(
                undistort_point(
                    pt, h, ext, with_cross, with_rel_uncertainty, snap_to_left, cache
                )
            )
        except ValueError as exc:
            raise ValueError(f"point {idx}: {exc}") from exc
    return out
