"""Rotation and rigid-transform primitives on SO(3) and SE(3).

Twists are plain length-6 numpy arrays ordered (linear, angular):
``xi = [vx, vy, vz, wx, wy, wz]``.  Rotation matrices are plain (3, 3)
arrays; rigid transforms are :class:`Pose3` values.  All functions are
pure and allocate fresh outputs.

Small rotation angles (below ``SMALL_ANGLE``) switch to Taylor series so
every map stays smooth through the origin; both branches agree to
double-precision roundoff at the threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Angle below which Taylor expansions replace the closed forms.
SMALL_ANGLE = 1e-4


def skew(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix such that skew(a) @ b == cross(a, b)."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def unskew(m: np.ndarray) -> np.ndarray:
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def so3_exp(w: np.ndarray) -> np.ndarray:
    """Rotation matrix of a rotation vector (Rodrigues formula)."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w)
    wx = skew(w)
    if theta < SMALL_ANGLE:
        # sin(t)/t and (1-cos(t))/t^2 expanded to O(t^4)
        a = 1.0 - theta**2 / 6.0
        b = 0.5 - theta**2 / 24.0
    else:
        a = np.sin(theta) / theta
        # 1 - cos(t) written as 2 sin^2(t/2) to avoid cancellation
        b = 2.0 * np.sin(0.5 * theta) ** 2 / theta**2
    return np.eye(3) + a * wx + b * (wx @ wx)


def so3_log(r: np.ndarray) -> np.ndarray:
    """Rotation vector of a rotation matrix, angle in [0, pi].

    The angle comes from atan2 of the skew/symmetric decomposition, which
    stays well conditioned near pi where acos of the trace does not.  At
    angles within 1e-3 of pi the axis is recovered from the symmetric
    part; an exact pi tie is broken by making the largest-magnitude axis
    component non-negative.
    """
    r = np.asarray(r, dtype=float)
    sk = 0.5 * (r - r.T)
    s_vec = unskew(sk)
    s = np.linalg.norm(s_vec)            # |sin(theta)|
    c = 0.5 * (np.trace(r) - 1.0)        # cos(theta)
    theta = np.arctan2(s, c)
    if theta < SMALL_ANGLE:
        # w = vee(R - R^T)/2 * theta/sin(theta), expanded near 0
        return s_vec * (1.0 + theta**2 / 6.0)
    if theta < np.pi - 1e-3:
        return s_vec * (theta / s)
    # Near-pi branch: uu^T = (sym(R) - cos(theta) I) / (1 - cos(theta))
    one_minus_c = 2.0 * np.sin(0.5 * theta) ** 2
    outer = (0.5 * (r + r.T) - c * np.eye(3)) / one_minus_c
    k = int(np.argmax(np.diag(outer)))
    axis = outer[:, k] / np.sqrt(max(outer[k, k], 1e-300))
    axis = axis / np.linalg.norm(axis)
    if s > 1e-12:
        # align with the skew part when it still carries sign information
        if np.dot(axis, s_vec) < 0.0:
            axis = -axis
    elif axis[int(np.argmax(np.abs(axis)))] < 0.0:
        axis = -axis
    return theta * axis


def so3_left_jacobian(w: np.ndarray) -> np.ndarray:
    """Left Jacobian of the SO(3) exponential map."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w)
    wx = skew(w)
    if theta < SMALL_ANGLE:
        a = 0.5 - theta**2 / 24.0
        b = 1.0 / 6.0 - theta**2 / 120.0
    else:
        a = 2.0 * np.sin(0.5 * theta) ** 2 / theta**2
        b = (theta - np.sin(theta)) / theta**3
    return np.eye(3) + a * wx + b * (wx @ wx)


def so3_left_jacobian_inv(w: np.ndarray) -> np.ndarray:
    """Inverse of the SO(3) left Jacobian; valid for ||w|| < 2*pi."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w)
    wx = skew(w)
    if theta < SMALL_ANGLE:
        b = 1.0 / 12.0 + theta**2 / 720.0
    else:
        half = 0.5 * theta
        # 1/t^2 - cot(t/2)/(2t), with cot written via sin/cos for stability
        b = (1.0 - half * np.cos(half) / np.sin(half)) / theta**2
    return np.eye(3) - 0.5 * wx + b * (wx @ wx)


def so3_right_jacobian(w: np.ndarray) -> np.ndarray:
    return so3_left_jacobian(-np.asarray(w, dtype=float))


def project_rotation(r: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix (polar decomposition via SVD)."""
    u, _, vt = np.linalg.svd(r)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


@dataclass(frozen=True)
class Pose3:
    """Rigid transform with rotation matrix ``rot`` and translation ``trans``.

    Composition follows the homogeneous-matrix convention
    ``[R t; 0 1]``; ``a @ b`` applies ``b`` first.
    """

    rot: np.ndarray
    trans: np.ndarray

    @staticmethod
    def identity() -> "Pose3":
        return Pose3(np.eye(3), np.zeros(3))

    def compose(self, other: "Pose3") -> "Pose3":
        return Pose3(self.rot @ other.rot, self.rot @ other.trans + self.trans)

    def __matmul__(self, other: "Pose3") -> "Pose3":
        return self.compose(other)

    def inverse(self) -> "Pose3":
        rt = self.rot.T
        return Pose3(rt, -rt @ self.trans)

    def apply(self, pts: np.ndarray) -> np.ndarray:
        """Transform one point (3,) or a stack of points (N, 3)."""
        pts = np.asarray(pts, dtype=float)
        if pts.ndim == 1:
            return self.rot @ pts + self.trans
        return pts @ self.rot.T + self.trans

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rot
        m[:3, 3] = self.trans
        return m

    @staticmethod
    def from_matrix(m: np.ndarray) -> "Pose3":
        m = np.asarray(m, dtype=float)
        if m.shape != (4, 4) or np.any(m[3] != np.array([0.0, 0.0, 0.0, 1.0])):
            raise ValueError("expected a homogeneous 4x4 matrix with exact (0,0,0,1) bottom row")
        return Pose3(m[:3, :3].copy(), m[:3, 3].copy())


def is_rotation(r: np.ndarray, tol: float = 1e-9) -> bool:
    r = np.asarray(r)
    if np.linalg.norm(r.T @ r - np.eye(3)) > tol:
        return False
    return abs(np.linalg.det(r) - 1.0) <= tol


def se3_hat(xi: np.ndarray) -> np.ndarray:
    """4x4 matrix form of a twist: [[skew(w), v], [0, 0]]."""
    xi = np.asarray(xi, dtype=float)
    m = np.zeros((4, 4))
    m[:3, :3] = skew(xi[3:6])
    m[:3, 3] = xi[0:3]
    return m


def se3_exp(xi: np.ndarray) -> Pose3:
    """Exponential map of a twist (linear, angular) to a rigid transform."""
    xi = np.asarray(xi, dtype=float)
    w = xi[3:6]
    return Pose3(so3_exp(w), so3_left_jacobian(w) @ xi[0:3])


def se3_log(p: Pose3) -> np.ndarray:
    """Twist such that se3_exp(se3_log(p)) == p; rotation angle in [0, pi]."""
    w = so3_log(p.rot)
    v = so3_left_jacobian_inv(w) @ p.trans
    return np.concatenate([v, w])


def adjoint(p: Pose3) -> np.ndarray:
    """6x6 adjoint of a transform in (linear, angular) twist ordering."""
    ad = np.zeros((6, 6))
    ad[0:3, 0:3] = p.rot
    ad[0:3, 3:6] = skew(p.trans) @ p.rot
    ad[3:6, 3:6] = p.rot
    return ad


def curly_wedge(xi: np.ndarray) -> np.ndarray:
    """6x6 adjoint of a twist: the generator of adjoint(se3_exp(s*xi))."""
    xi = np.asarray(xi, dtype=float)
    m = np.zeros((6, 6))
    wx = skew(xi[3:6])
    m[0:3, 0:3] = wx
    m[0:3, 3:6] = skew(xi[0:3])
    m[3:6, 3:6] = wx
    return m


def _se3_q_matrix(rho: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Upper-right block of the SE(3) left Jacobian (closed form)."""
    theta = np.linalg.norm(phi)
    rx = skew(rho)
    px = skew(phi)
    if theta < 1e-2:
        # the closed-form coefficients cancel catastrophically below ~1e-2,
        # so this block switches earlier than the other maps
        t2 = theta**2
        c1 = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
        c2 = 1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0
        c3 = 1.0 / 120.0 - t2 / 2520.0 + t2 * t2 / 120960.0
    else:
        st = np.sin(theta)
        t2, t3 = theta**2, theta**3
        c1 = (theta - st) / t3
        # 0.5 t^2 + cos(t) - 1 written via 2 sin^2(t/2) to limit cancellation
        c2 = (0.5 * t2 - 2.0 * np.sin(0.5 * theta) ** 2) / (t2 * t2)
        c3 = 0.5 * (c2 + 3.0 * (theta - st - t3 / 6.0) / (t3 * t2))
    pr = px @ rx
    rp = rx @ px
    prp = pr @ px
    return (
        0.5 * rx
        + c1 * (pr + rp + prp)
        + c2 * (px @ pr + rp @ px - 3.0 * prp)
        + c3 * (prp @ px + px @ prp)
    )


def se3_left_jacobian(xi: np.ndarray) -> np.ndarray:
    """Left Jacobian of the SE(3) exponential map, (linear, angular) ordering."""
    xi = np.asarray(xi, dtype=float)
    rho, phi = xi[0:3], xi[3:6]
    j = so3_left_jacobian(phi)
    out = np.zeros((6, 6))
    out[0:3, 0:3] = j
    out[3:6, 3:6] = j
    out[0:3, 3:6] = _se3_q_matrix(rho, phi)
    return out


def se3_right_jacobian(xi: np.ndarray) -> np.ndarray:
    return se3_left_jacobian(-np.asarray(xi, dtype=float))


def dot_operator(ph: np.ndarray) -> np.ndarray:
    """4x6 matrix with se3_hat(xi) @ ph == dot_operator(ph) @ xi for all twists."""
    ph = np.asarray(ph, dtype=float)
    out = np.zeros((4, 6))
    out[0:3, 0:3] = ph[3] * np.eye(3)
    out[0:3, 3:6] = -skew(ph[0:3])
    return out


def dilation(n: np.ndarray) -> np.ndarray:
    """Embed a 3-vector noise term in homogeneous coordinates (4th component 0)."""
    n = np.asarray(n, dtype=float)
    return np.concatenate([n, [0.0]])


def interpolate_pose(a: Pose3, b: Pose3, s: float) -> Pose3:
    """Geodesic interpolation a * Exp(s * Log(a^-1 b)); s=0 gives a, s=1 gives b."""
    return a @ se3_exp(s * se3_log(a.inverse() @ b))
