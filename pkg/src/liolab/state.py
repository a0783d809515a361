"""Filter state containers and tangent-space (error-state) algebra.

The 15-dimensional error state is a flat numpy vector with layout

    [ dpose (6) | dvel (3) | dbg (3) | dba (3) ]

where ``dpose`` is an SE(3) tangent twist in (linear, angular) ordering.
The pose perturbation convention is right (body-frame):
``pose = nominal_pose @ se3_exp(dpose)``.  Velocity and biases perturb
additively.  The same slice layout is reused by the conventional
SO(3) x R^3 state, with ``dpose`` read as (translation, rotation vector).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .liegroup import Pose3, se3_exp, se3_log, so3_log

# Slices into the 15-dim error state.
DPOSE = slice(0, 6)
DVEL = slice(6, 9)
DBG = slice(9, 12)
DBA = slice(12, 15)

ERROR_DIM = 15
NOISE_DIM = 12

GRAVITY = np.array([0.0, 0.0, -9.81])


@dataclass
class NavState:
    """SE(3)-manifold filter state: pose (world<-body), body velocity, biases."""

    pose: Pose3
    vel_body: np.ndarray
    bias_gyro: np.ndarray
    bias_acc: np.ndarray

    @staticmethod
    def identity() -> "NavState":
        return NavState(Pose3.identity(), np.zeros(3), np.zeros(3), np.zeros(3))

    def copy(self) -> "NavState":
        return NavState(
            Pose3(self.pose.rot.copy(), self.pose.trans.copy()),
            self.vel_body.copy(),
            self.bias_gyro.copy(),
            self.bias_acc.copy(),
        )


@dataclass
class BaselineNavState:
    """Conventional state with rotation and translation held separately.

    Velocity lives in the world frame, matching the usual strapdown
    formulation where translation integrates world velocity directly.
    """

    rot: np.ndarray
    trans: np.ndarray
    vel_world: np.ndarray
    bias_gyro: np.ndarray
    bias_acc: np.ndarray

    @staticmethod
    def identity() -> "BaselineNavState":
        return BaselineNavState(np.eye(3), np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3))

    def copy(self) -> "BaselineNavState":
        return BaselineNavState(
            self.rot.copy(),
            self.trans.copy(),
            self.vel_world.copy(),
            self.bias_gyro.copy(),
            self.bias_acc.copy(),
        )

    def pose(self) -> Pose3:
        return Pose3(self.rot.copy(), self.trans.copy())


@dataclass(frozen=True)
class ImuSample:
    """One IMU measurement: time (s), gyro (rad/s), accel (m/s^2)."""

    t: float
    gyro: np.ndarray
    acc: np.ndarray


@dataclass
class ImuNoiseParams:
    """Continuous-time IMU noise densities and the gravity vector.

    sigma_gyro: rad/s/sqrt(Hz), sigma_acc: m/s^2/sqrt(Hz),
    sigma_bg_walk: rad/s^2/sqrt(Hz), sigma_ba_walk: m/s^3/sqrt(Hz).
    """

    sigma_gyro: float = 0.0
    sigma_acc: float = 0.0
    sigma_bg_walk: float = 0.0
    sigma_ba_walk: float = 0.0
    gravity: np.ndarray = field(default_factory=lambda: GRAVITY.copy())

    def __post_init__(self):
        for name in ("sigma_gyro", "sigma_acc", "sigma_bg_walk", "sigma_ba_walk"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        self.gravity = np.asarray(self.gravity, dtype=float)


def boxplus(x: NavState, dx: np.ndarray) -> NavState:
    """Retract a 15-dim tangent perturbation onto the state."""
    dx = np.asarray(dx, dtype=float)
    return NavState(
        x.pose @ se3_exp(dx[DPOSE]),
        x.vel_body + dx[DVEL],
        x.bias_gyro + dx[DBG],
        x.bias_acc + dx[DBA],
    )


def boxminus(x: NavState, y: NavState) -> np.ndarray:
    """Tangent difference such that boxplus(y, boxminus(x, y)) == x.

    Raises ValueError when the relative rotation angle reaches the edge
    of the chart (pi), where the local parameterization breaks down.
    """
    rel = y.pose.inverse() @ x.pose
    ang = np.linalg.norm(so3_log(rel.rot))
    if ang >= np.pi - 1e-6:
        raise ValueError(f"poses out of chart: relative rotation angle {ang:.6f} rad")
    dx = np.empty(ERROR_DIM)
    dx[DPOSE] = se3_log(rel)
    dx[DVEL] = x.vel_body - y.vel_body
    dx[DBG] = x.bias_gyro - y.bias_gyro
    dx[DBA] = x.bias_acc - y.bias_acc
    return dx


def baseline_boxplus(x: BaselineNavState, dx: np.ndarray) -> BaselineNavState:
    """Retraction for the SO(3) x R^3 state; dpose reads (dtrans, drot)."""
    from .liegroup import so3_exp

    dx = np.asarray(dx, dtype=float)
    return BaselineNavState(
        x.rot @ so3_exp(dx[3:6]),
        x.trans + dx[0:3],
        x.vel_world + dx[DVEL],
        x.bias_gyro + dx[DBG],
        x.bias_acc + dx[DBA],
    )


def baseline_boxminus(x: BaselineNavState, y: BaselineNavState) -> np.ndarray:
    dx = np.empty(ERROR_DIM)
    dx[0:3] = x.trans - y.trans
    dx[3:6] = so3_log(y.rot.T @ x.rot)
    dx[DVEL] = x.vel_world - y.vel_world
    dx[DBG] = x.bias_gyro - y.bias_gyro
    dx[DBA] = x.bias_acc - y.bias_acc
    return dx


def discrete_process_noise(p: ImuNoiseParams, dt: float) -> np.ndarray:
    """12x12 covariance of the discrete noise increments over one step.

    Block order matches the process-noise channels: integrated gyro white
    noise (rad), integrated accel white noise (m/s), gyro bias walk
    (rad/s), accel bias walk (m/s^2).  Each continuous density sigma
    discretizes to variance sigma^2 * dt.
    """
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    diag = np.concatenate(
        [
            np.full(3, p.sigma_gyro**2 * dt),
            np.full(3, p.sigma_acc**2 * dt),
            np.full(3, p.sigma_bg_walk**2 * dt),
            np.full(3, p.sigma_ba_walk**2 * dt),
        ]
    )
    return np.diag(diag)
