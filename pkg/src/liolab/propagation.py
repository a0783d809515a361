"""Discrete IMU propagation and error-state covariance transport.

Two kinematic models are provided: the SE(3) model, whose pose update
``pose' = pose @ Exp((v, w) * dt)`` couples rotation into translation,
and the conventional model that advances rotation and translation on
separate manifolds with a world-frame velocity.

Process noise enters as discrete increments over one step,

    w = [ gyro angle (rad) | accel velocity (m/s) | gyro-bias walk | accel-bias walk ]

matching the covariance blocks of :func:`liolab.state.discrete_process_noise`.
The noisy transition maps below define the meaning of ``w`` exactly; the
analytic Jacobians are derivatives of those maps and are checked against
central finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .liegroup import (
    Pose3,
    adjoint,
    se3_exp,
    se3_right_jacobian,
    skew,
    so3_exp,
    so3_right_jacobian,
    project_rotation,
)
from .state import (
    DBA,
    DBG,
    DPOSE,
    DVEL,
    ERROR_DIM,
    NOISE_DIM,
    BaselineNavState,
    ImuNoiseParams,
    ImuSample,
    NavState,
    discrete_process_noise,
)

# Re-orthonormalize stored rotations after this many compositions.
REPROJECT_EVERY = 1000


@dataclass
class PropagationStep:
    """Record of one discrete propagation step.

    ``F_x`` and ``F_w`` are the error-state Jacobians of the step,
    ``Q`` the discrete process-noise covariance it consumed, and
    ``P_after`` the covariance after the step (None when propagated
    without covariance tracking).
    """

    t: float
    state_after: NavState
    F_x: np.ndarray
    F_w: np.ndarray
    Q: np.ndarray
    dt: float
    P_after: np.ndarray | None = None


def propagate_se3_noisy(
    x: NavState, u: ImuSample, p: ImuNoiseParams, dt: float, w: np.ndarray
) -> NavState:
    """SE(3) transition with explicit noise increments (the defining map)."""
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    w = np.asarray(w, dtype=float)
    gyro_inc = (u.gyro - x.bias_gyro) * dt - w[0:3]
    acc_inc = (u.acc - x.bias_acc) * dt - w[3:6]
    r = x.pose.rot
    pose_inc = np.concatenate([x.vel_body * dt, gyro_inc])
    vel = so3_exp(-gyro_inc) @ (x.vel_body + acc_inc + r.T @ p.gravity * dt)
    return NavState(
        x.pose @ se3_exp(pose_inc),
        vel,
        x.bias_gyro + w[6:9],
        x.bias_acc + w[9:12],
    )


def propagate_se3(x: NavState, u: ImuSample, p: ImuNoiseParams, dt: float) -> NavState:
    """Nominal (noise-free) SE(3) propagation over one step."""
    return propagate_se3_noisy(x, u, p, dt, np.zeros(NOISE_DIM))


def propagate_baseline_noisy(
    x: BaselineNavState, u: ImuSample, p: ImuNoiseParams, dt: float, w: np.ndarray
) -> BaselineNavState:
    """Conventional SO(3) x R^3 transition with explicit noise increments."""
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    w = np.asarray(w, dtype=float)
    gyro_inc = (u.gyro - x.bias_gyro) * dt - w[0:3]
    acc_inc = (u.acc - x.bias_acc) * dt - w[3:6]
    return BaselineNavState(
        x.rot @ so3_exp(gyro_inc),
        x.trans + x.vel_world * dt,
        x.vel_world + x.rot @ acc_inc + p.gravity * dt,
        x.bias_gyro + w[6:9],
        x.bias_acc + w[9:12],
    )


def propagate_baseline(
    x: BaselineNavState, u: ImuSample, p: ImuNoiseParams, dt: float
) -> BaselineNavState:
    return propagate_baseline_noisy(x, u, p, dt, np.zeros(NOISE_DIM))


def error_jacobians(
    x: NavState, u: ImuSample, dt: float, gravity: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic Jacobians of the SE(3) error-state transition.

    Returns (F_x, F_w) with F_x 15x15 and F_w 15x12, evaluated at zero
    error and zero noise under the right-perturbation convention.  The
    pose block transports by the adjoint of the inverse increment; bias
    and noise enter through the SE(3)/SO(3) right Jacobians of the
    increment.
    """
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    g = np.asarray(gravity, dtype=float) if gravity is not None else np.array([0.0, 0.0, -9.81])
    gyro = u.gyro - x.bias_gyro
    acc = u.acc - x.bias_acc
    r = x.pose.rot
    xi_dt = np.concatenate([x.vel_body * dt, gyro * dt])

    jr6 = se3_right_jacobian(xi_dt)
    exp_neg = so3_exp(-gyro * dt)
    jr3_neg = so3_right_jacobian(-gyro * dt)
    bracket = x.vel_body + (acc + r.T @ g) * dt

    f_x = np.zeros((ERROR_DIM, ERROR_DIM))
    f_x[DPOSE, DPOSE] = adjoint(se3_exp(-xi_dt))
    f_x[DPOSE, DVEL] = jr6[:, 0:3] * dt
    f_x[DPOSE, DBG] = -jr6[:, 3:6] * dt
    f_x[DVEL, 3:6] = exp_neg @ skew(r.T @ g) * dt
    f_x[DVEL, DVEL] = exp_neg
    f_x[DVEL, DBG] = -exp_neg @ skew(bracket) @ jr3_neg * dt
    f_x[DVEL, DBA] = -exp_neg * dt
    f_x[DBG, DBG] = np.eye(3)
    f_x[DBA, DBA] = np.eye(3)

    f_w = np.zeros((ERROR_DIM, NOISE_DIM))
    f_w[DPOSE, 0:3] = -jr6[:, 3:6]
    f_w[DVEL, 0:3] = -exp_neg @ skew(bracket) @ jr3_neg
    f_w[DVEL, 3:6] = -exp_neg
    f_w[DBG, 6:9] = np.eye(3)
    f_w[DBA, 9:12] = np.eye(3)
    return f_x, f_w


def error_jacobians_baseline(
    x: BaselineNavState, u: ImuSample, dt: float, gravity: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic Jacobians of the SO(3) x R^3 error-state transition.

    Error layout mirrors the SE(3) one: [dtrans, drot, dvel, dbg, dba],
    with dtrans additive in the world frame.
    """
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    del gravity  # world-frame gravity cancels out of every baseline block
    gyro = u.gyro - x.bias_gyro
    acc = u.acc - x.bias_acc
    jr3 = so3_right_jacobian(gyro * dt)
    exp_neg = so3_exp(-gyro * dt)

    f_x = np.zeros((ERROR_DIM, ERROR_DIM))
    f_x[0:3, 0:3] = np.eye(3)
    f_x[0:3, DVEL] = np.eye(3) * dt
    f_x[3:6, 3:6] = exp_neg
    f_x[3:6, DBG] = -jr3 * dt
    f_x[DVEL, 3:6] = -x.rot @ skew(acc) * dt
    f_x[DVEL, DVEL] = np.eye(3)
    f_x[DVEL, DBA] = -x.rot * dt
    f_x[DBG, DBG] = np.eye(3)
    f_x[DBA, DBA] = np.eye(3)

    f_w = np.zeros((ERROR_DIM, NOISE_DIM))
    f_w[3:6, 0:3] = -jr3
    f_w[DVEL, 3:6] = -x.rot
    f_w[DBG, 6:9] = np.eye(3)
    f_w[DBA, 9:12] = np.eye(3)
    return f_x, f_w


def propagate_covariance(
    p_cov: np.ndarray, f_x: np.ndarray, f_w: np.ndarray, q: np.ndarray
) -> np.ndarray:
    """One covariance step F P F^T + Fw Q Fw^T, symmetrized."""
    out = f_x @ p_cov @ f_x.T + f_w @ q @ f_w.T
    return 0.5 * (out + out.T)


def propagate_batch(
    x0: NavState,
    p0: np.ndarray,
    imu: list[ImuSample],
    params: ImuNoiseParams,
    t_end: float | None = None,
) -> list[PropagationStep]:
    """Propagate state and covariance through a sequence of IMU samples.

    Each sample applies forward over the interval to the next sample's
    timestamp; ``t_end`` closes the final interval (when None, the last
    sample only terminates the batch and contributes no step).
    """
    if not imu:
        raise ValueError("need at least one IMU sample")
    times = [s.t for s in imu]
    if any(b <= a for a, b in zip(times, times[1:])):
        bad = next(i for i in range(len(times) - 1) if times[i + 1] <= times[i])
        raise ValueError(f"non-monotone IMU timestamps at index {bad + 1}")
    ends = times[1:] + ([t_end] if t_end is not None else [])
    if t_end is not None and t_end <= times[-1]:
        raise ValueError("t_end must be after the last IMU sample")

    x = x0
    p_cov = np.asarray(p0, dtype=float)
    steps: list[PropagationStep] = []
    for i, t_next in enumerate(ends):
        u = imu[i]
        dt = t_next - u.t
        f_x, f_w = error_jacobians(x, u, dt, params.gravity)
        q = discrete_process_noise(params, dt)
        x = propagate_se3(x, u, params, dt)
        if (i + 1) % REPROJECT_EVERY == 0:
            x = NavState(
                Pose3(project_rotation(x.pose.rot), x.pose.trans),
                x.vel_body,
                x.bias_gyro,
                x.bias_acc,
            )
        p_cov = propagate_covariance(p_cov, f_x, f_w, q)
        steps.append(PropagationStep(t_next, x, f_x, f_w, q, dt, p_cov))
    return steps


def propagate_batch_baseline(
    x0: BaselineNavState,
    p0: np.ndarray,
    imu: list[ImuSample],
    params: ImuNoiseParams,
    t_end: float | None = None,
) -> list[tuple[float, BaselineNavState, np.ndarray, np.ndarray, np.ndarray, float, np.ndarray]]:
    """Baseline-model counterpart of :func:`propagate_batch`.

    Returns tuples (t, state, F_x, F_w, Q, dt, P_after) so the filter can
    drive either model through the same bookkeeping.
    """
    if not imu:
        raise ValueError("need at least one IMU sample")
    times = [s.t for s in imu]
    if any(b <= a for a, b in zip(times, times[1:])):
        bad = next(i for i in range(len(times) - 1) if times[i + 1] <= times[i])
        raise ValueError(f"non-monotone IMU timestamps at index {bad + 1}")
    ends = times[1:] + ([t_end] if t_end is not None else [])
    if t_end is not None and t_end <= times[-1]:
        raise ValueError("t_end must be after the last IMU sample")

    x = x0
    p_cov = np.asarray(p0, dtype=float)
    out = []
    for i, t_next in enumerate(ends):
        u = imu[i]
        dt = t_next - u.t
        f_x, f_w = error_jacobians_baseline(x, u, dt, params.gravity)
        q = discrete_process_noise(params, dt)
        x = propagate_baseline(x, u, params, dt)
        if (i + 1) % REPROJECT_EVERY == 0:
            x = BaselineNavState(
                project_rotation(x.rot), x.trans, x.vel_world, x.bias_gyro, x.bias_acc
            )
        p_cov = propagate_covariance(p_cov, f_x, f_w, q)
        out.append((t_next, x, f_x, f_w, q, dt, p_cov))
    return out
