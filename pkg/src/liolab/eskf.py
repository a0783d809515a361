"""Error-state Kalman filter loop: propagate, deskew, match, update.

One scan iteration propagates the IMU stream to the scan end, deskews
the cloud against the predicted pose history, matches points to map
planes, and solves the MAP problem

    min_dx  ||dx||^2_{P^-1} + sum_j ||r_j + H_j dx||^2_{R_j^-1}

by iterated relinearization in Kalman gain form.  The covariance update
uses the final-iteration Jacobians in Joseph form, followed by the
right-Jacobian reset of the pose block.  Pose-history correlations are
dropped after every update, since the stored cross terms are no longer
valid once states are conditioned on the measurement.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .liegroup import Pose3, dot_operator, se3_right_jacobian, skew, so3_right_jacobian
from .state import (
    BaselineNavState,
    ImuNoiseParams,
    ImuSample,
    NavState,
    baseline_boxplus,
    boxplus,
)
from .propagation import propagate_batch, propagate_batch_baseline, PropagationStep
from .jointcov import PoseHistory, advance_history
from .planarmap import PlanarMap, PlanarMapConfig, PlaneFeature
from .uamc import ExtrinsicCalib, ProbabilisticPoint, RawPoint, undistort_scan


@dataclass
class FilterConfig:
    imu_noise: ImuNoiseParams = field(default_factory=ImuNoiseParams)
    ext: ExtrinsicCalib = field(default_factory=ExtrinsicCalib.identity)
    max_update_iters: int = 3
    convergence_eps: float = 1e-6
    gate_chi2: float = 25.0
    with_cross_terms: bool = True
    with_uamc: bool = True
    with_se3_propagation: bool = True
    map: PlanarMapConfig = field(default_factory=PlanarMapConfig)

    def __post_init__(self):
        if self.max_update_iters < 1:
            raise ValueError("max_update_iters must be >= 1")


@dataclass
class ScanResult:
    t: float
    posterior: NavState
    P_post: np.ndarray
    n_residuals: int
    n_rejected: int


def residual_and_jacobians(
    x: NavState, pt: ProbabilisticPoint, plane: PlaneFeature
) -> tuple[float, np.ndarray, float]:
    """Point-to-plane residual, its 1x15 Jacobian row, and noise variance.

    Only the six pose columns are populated; the row is the derivative
    under the right-perturbation convention.  The noise variance folds
    the point covariance through the world rotation onto the normal.
    """
    u = plane.normal
    t_wk = x.pose
    p_world = t_wk.apply(pt.xyz)
    r = float(u @ (p_world - plane.centroid))
    u_h = np.concatenate([u, [0.0]])
    h_row = np.zeros(15)
    h_row[0:6] = u_h @ t_wk.matrix() @ dot_operator(np.concatenate([pt.xyz, [1.0]]))
    w = t_wk.rot.T @ u
    noise_var = float(w @ pt.cov @ w)
    return r, h_row, noise_var


def residual_and_jacobians_baseline(
    x: BaselineNavState, pt: ProbabilisticPoint, plane: PlaneFeature
) -> tuple[float, np.ndarray, float]:
    """Baseline-state counterpart; dpose columns read (dtrans, drot)."""
    u = plane.normal
    p_world = x.rot @ pt.xyz + x.trans
    r = float(u @ (p_world - plane.centroid))
    h_row = np.zeros(15)
    h_row[0:3] = u
    h_row[3:6] = -(u @ x.rot) @ skew(pt.xyz)
    w = x.rot.T @ u
    noise_var = float(w @ pt.cov @ w)
    return r, h_row, noise_var


@dataclass
class Correspondence:
    point: ProbabilisticPoint
    plane: PlaneFeature


def _solve_iterated(
    p_prior: np.ndarray,
    linearize,
    boxplus_fn,
    x_prior,
    cfg: FilterConfig,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gauss-Newton iterations of the MAP cost; returns (dx, K, H)."""
    p_inv = np.linalg.inv(p_prior)
    dx = np.zeros(p_prior.shape[0])
    h_mat = r_vec = r_inv = None
    for _ in range(cfg.max_update_iters):
        x_lin = boxplus_fn(x_prior, dx)
        h_mat, r_vec, noise_vars = linearize(x_lin)
        r_inv = 1.0 / noise_vars
        a = p_inv + h_mat.T @ (h_mat * r_inv[:, None])
        b = h_mat.T @ (r_inv * (h_mat @ dx - r_vec))
        dx_new = np.linalg.solve(a, b)
        step = np.linalg.norm(dx_new - dx)
        dx = dx_new
        if step < cfg.convergence_eps:
            break
    a = p_inv + h_mat.T @ (h_mat * r_inv[:, None])
    gain = np.linalg.solve(a, h_mat.T * r_inv[None, :])
    return dx, gain, h_mat


def _joseph_update(
    p_prior: np.ndarray, gain: np.ndarray, h_mat: np.ndarray, noise_vars: np.ndarray
) -> np.ndarray:
    ikh = np.eye(p_prior.shape[0]) - gain @ h_mat
    p_post = ikh @ p_prior @ ikh.T + (gain * noise_vars[None, :]) @ gain.T
    return 0.5 * (p_post + p_post.T)


def update(
    x_prior: NavState,
    p_prior: np.ndarray,
    residuals: list[Correspondence],
    cfg: FilterConfig,
) -> tuple[NavState, np.ndarray]:
    """Iterated measurement update of the SE(3) state.

    With no surviving residuals the prior is returned unchanged.
    """
    if not residuals:
        return x_prior, p_prior.copy()

    def linearize(x_lin: NavState):
        rows = [residual_and_jacobians(x_lin, c.point, c.plane) for c in residuals]
        return (
            np.array([h for _, h, _ in rows]),
            np.array([r for r, _, _ in rows]),
            np.array([v for _, _, v in rows]),
        )

    dx, gain, h_mat = _solve_iterated(p_prior, linearize, boxplus, x_prior, cfg)
    noise_vars = linearize(boxplus(x_prior, dx))[2]
    p_post = _joseph_update(p_prior, gain, h_mat, noise_vars)
    reset = np.eye(15)
    reset[0:6, 0:6] = se3_right_jacobian(dx[0:6])
    p_post = reset @ p_post @ reset.T
    return boxplus(x_prior, dx), 0.5 * (p_post + p_post.T)


def _update_baseline(
    x_prior: BaselineNavState,
    p_prior: np.ndarray,
    residuals: list[Correspondence],
    cfg: FilterConfig,
) -> tuple[BaselineNavState, np.ndarray]:
    if not residuals:
        return x_prior, p_prior.copy()

    def linearize(x_lin: BaselineNavState):
        rows = [residual_and_jacobians_baseline(x_lin, c.point, c.plane) for c in residuals]
        return (
            np.array([h for _, h, _ in rows]),
            np.array([r for r, _, _ in rows]),
            np.array([v for _, _, v in rows]),
        )

    dx, gain, h_mat = _solve_iterated(p_prior, linearize, baseline_boxplus, x_prior, cfg)
    noise_vars = linearize(baseline_boxplus(x_prior, dx))[2]
    p_post = _joseph_update(p_prior, gain, h_mat, noise_vars)
    reset = np.eye(15)
    reset[3:6, 3:6] = so3_right_jacobian(dx[3:6])
    p_post = reset @ p_post @ reset.T
    return baseline_boxplus(x_prior, dx), 0.5 * (p_post + p_post.T)


class LioFilter:
    """Stateful scan-by-scan LIO loop over a planar voxel map."""

    def __init__(
        self,
        cfg: FilterConfig,
        x0: NavState | BaselineNavState,
        p0: np.ndarray,
        t0: float,
    ):
        self.cfg = cfg
        if cfg.with_se3_propagation and not isinstance(x0, NavState):
            raise TypeError("SE(3) mode requires a NavState initial state")
        if not cfg.with_se3_propagation and isinstance(x0, NavState):
            x0 = BaselineNavState(
                x0.pose.rot.copy(),
                x0.pose.trans.copy(),
                x0.pose.rot @ x0.vel_body,
                x0.bias_gyro.copy(),
                x0.bias_acc.copy(),
            )
        self.x = x0
        self.P = np.asarray(p0, dtype=float).copy()
        self.t = float(t0)
        self.map = PlanarMap(cfg.map)
        self.timing: dict[str, float] = {
            "propagation": 0.0,
            "deskew": 0.0,
            "match": 0.0,
            "update": 0.0,
            "map": 0.0,
        }

    def _pose(self) -> Pose3:
        return self.x.pose if isinstance(self.x, NavState) else self.x.pose()

    def _propagate(self, imu: list[ImuSample], t_end: float) -> PoseHistory:
        history = PoseHistory.start(self.t, self._pose(), self.P)
        if self.cfg.with_se3_propagation:
            steps = propagate_batch(self.x, self.P, imu, self.cfg.imu_noise, t_end)
            for s in steps:
                advance_history(history, s)
            self.x = steps[-1].state_after
            self.P = steps[-1].P_after
        else:
            recs = propagate_batch_baseline(self.x, self.P, imu, self.cfg.imu_noise, t_end)
            for t, xb, f_x, f_w, q, dt, p_after in recs:
                step = PropagationStep(
                    t,
                    NavState(xb.pose(), xb.rot.T @ xb.vel_world, xb.bias_gyro, xb.bias_acc),
                    f_x,
                    f_w,
                    q,
                    dt,
                    p_after,
                )
                advance_history(history, step)
            self.x = recs[-1][1]
            self.P = recs[-1][6]
        self.t = t_end
        return history

    def process_scan(
        self, imu: list[ImuSample], scan: list[RawPoint], t_scan_end: float
    ) -> ScanResult:
        """Run the full pipeline for one scan arriving at ``t_scan_end``.

        IMU samples must start at or after the previous scan's end time
        and end before ``t_scan_end``; each applies forward to the next.
        """
        if not imu:
            raise ValueError("empty IMU span for scan")
        if imu[0].t < self.t - 1e-9:
            raise ValueError(
                f"IMU stream starts at {imu[0].t} before filter time {self.t}"
            )
        for pt in scan:
            if not (self.t - 1e-9 <= pt.t <= t_scan_end + 1e-9):
                raise ValueError(
                    f"scan point at t={pt.t} outside IMU span [{self.t}, {t_scan_end}]"
                )

        tic = time.perf_counter()
        history = self._propagate(imu, t_scan_end)
        self.timing["propagation"] += time.perf_counter() - tic

        tic = time.perf_counter()
        rel_uncertainty = self.cfg.with_uamc and self.cfg.with_se3_propagation
        points = undistort_scan(
            scan,
            history,
            self.cfg.ext,
            with_cross=self.cfg.with_cross_terms,
            with_rel_uncertainty=rel_uncertainty,
        )
        self.timing["deskew"] += time.perf_counter() - tic

        tic = time.perf_counter()
        prior_pose = self._pose()
        viewpoint = prior_pose.trans
        accepted: list[Correspondence] = []
        n_rejected = 0
        res_fn = (
            residual_and_jacobians
            if self.cfg.with_se3_propagation
            else residual_and_jacobians_baseline
        )
        for pt in points:
            plane = self.map.match_plane(prior_pose.apply(pt.xyz), viewpoint)
            if plane is None:
                continue
            r, _, var = res_fn(self.x, pt, plane)
            if var > 0.0 and r * r / var > self.cfg.gate_chi2:
                n_rejected += 1
                continue
            accepted.append(Correspondence(pt, plane))
        self.timing["match"] += time.perf_counter() - tic

        tic = time.perf_counter()
        if self.cfg.with_se3_propagation:
            self.x, self.P = update(self.x, self.P, accepted, self.cfg)
        else:
            self.x, self.P = _update_baseline(self.x, self.P, accepted, self.cfg)
        self.timing["update"] += time.perf_counter() - tic

        tic = time.perf_counter()
        post_pose = self._pose()
        if points:
            self.map.insert_points(post_pose.apply(np.array([p.xyz for p in points])))
        self.timing["map"] += time.perf_counter() - tic

        posterior = (
            self.x.copy()
            if isinstance(self.x, NavState)
            else NavState(
                self.x.pose(),
                self.x.rot.T @ self.x.vel_world,
                self.x.bias_gyro.copy(),
                self.x.bias_acc.copy(),
            )
        )
        return ScanResult(t_scan_end, posterior, self.P.copy(), len(accepted), n_rejected)
