"""Rotation / pose / screw algebra on plain numpy arrays.

Conventions used throughout the package:

- rotations are 3x3 matrices, poses are 4x4 homogeneous matrices
- a screw is a 6-vector ``(direction, moment)``: ``(omega, v)`` for a twist,
  ``(f, m)`` for a wrench
- ``screw_transform(T)`` is the 6x6 adjoint-style matrix that re-expresses a
  twist or wrench from the frame described by ``T`` into the base frame
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ROT_TOL = 1e-10
SMALL_ANGLE = 1e-8


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix: skew(v) @ u == cross(v, u)."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def unskew(m: np.ndarray) -> np.ndarray:
    """Inverse of skew for (near-)skew-symmetric matrices."""
    return 0.5 * np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])


def rot_exp(w: np.ndarray) -> np.ndarray:
    """Exponential map so(3) -> SO(3) via Rodrigues' formula.

    Below SMALL_ANGLE the sin/cos coefficients are replaced with their
    2nd-order Taylor expansions so the map stays smooth at w = 0.
    """
    w = np.asarray(w, dtype=float)
    th2 = float(w @ w)
    th = np.sqrt(th2)
    W = skew(w)
    if th < SMALL_ANGLE:
        a = 1.0 - th2 / 6.0
        b = 0.5 - th2 / 24.0
    else:
        a = np.sin(th) / th
        b = (1.0 - np.cos(th)) / th2
    return np.eye(3) + a * W + b * (W @ W)


def rot_log(R: np.ndarray) -> np.ndarray:
    """Logarithm SO(3) -> so(3), returned as a rotation vector."""
    tr = np.clip((np.trace(R) - 1.0) * 0.5, -1.0, 1.0)
    th = np.arccos(tr)
    if th < SMALL_ANGLE:
        return unskew(R)
    if np.pi - th < 1e-6:
        # near a half turn the axis comes from the symmetric part
        A = 0.5 * (R + np.eye(3))
        axis = np.sqrt(np.clip(np.diag(A), 0.0, None))
        k = int(np.argmax(axis))
        axis = A[:, k] / A[k, k] * axis[k]
        axis /= np.linalg.norm(axis)
        # resolve the sign using the skew part (may vanish at exactly pi)
        s = unskew(R)
        if s @ axis < 0.0:
            axis = -axis
        return axis * th
    return unskew(R) * (th / np.sin(th))


def so3_jac_right(w: np.ndarray) -> np.ndarray:
    """Right Jacobian of the SO(3) exponential.

    Satisfies rot_exp(w + dw) ~= rot_exp(w) @ rot_exp(J_r(w) dw).
    """
    w = np.asarray(w, dtype=float)
    th2 = float(w @ w)
    th = np.sqrt(th2)
    W = skew(w)
    if th < SMALL_ANGLE:
        return np.eye(3) - 0.5 * W + (W @ W) / 6.0
    a = (1.0 - np.cos(th)) / th2
    b = (th - np.sin(th)) / (th2 * th)
    return np.eye(3) - a * W + b * (W @ W)


def so3_v_matrix(w: np.ndarray) -> np.ndarray:
    """Left Jacobian of SO(3); couples rotation and translation in se3_exp."""
    w = np.asarray(w, dtype=float)
    th2 = float(w @ w)
    th = np.sqrt(th2)
    W = skew(w)
    if th < SMALL_ANGLE:
        return np.eye(3) + 0.5 * W + (W @ W) / 6.0
    a = (1.0 - np.cos(th)) / th2
    b = (th - np.sin(th)) / (th2 * th)
    return np.eye(3) + a * W + b * (W @ W)


def se3_exp(xi: np.ndarray, dxi: float = 1.0) -> np.ndarray:
    """Exponential map se(3) -> SE(3) for a screw step ``xi * dxi``.

    ``xi`` is a 6-vector (direction, moment) = (omega, v); the pure
    translation case (omega = 0) is exact.
    """
    xi = np.asarray(xi, dtype=float) * dxi
    w, v = xi[:3], xi[3:]
    T = np.eye(4)
    T[:3, :3] = rot_exp(w)
    T[:3, 3] = so3_v_matrix(w) @ v
    return T


def se3_log(T: np.ndarray) -> np.ndarray:
    """Logarithm SE(3) -> se(3), returned as a 6-vector (omega, v)."""
    w = rot_log(T[:3, :3])
    v = np.linalg.solve(so3_v_matrix(w), T[:3, 3])
    return np.concatenate([w, v])


def se3_hat(xi: np.ndarray) -> np.ndarray:
    """4x4 matrix form of a twist: [[skew(w), v], [0, 0]]."""
    H = np.zeros((4, 4))
    H[:3, :3] = skew(xi[:3])
    H[:3, 3] = xi[3:]
    return H


def ad_se3(xi: np.ndarray) -> np.ndarray:
    """6x6 adjoint of a screw: ad(x) @ y equals the se(3) bracket [x, y]."""
    W = skew(xi[:3])
    A = np.zeros((6, 6))
    A[:3, :3] = W
    A[3:, 3:] = W
    A[3:, :3] = skew(xi[3:])
    return A


def se3_jac_right(xi: np.ndarray, n_terms: int = 20) -> np.ndarray:
    """Right Jacobian of the SE(3) exponential, by its power series.

    J_r(xi) = sum_n (-ad(xi))^n / (n+1)! which converges quickly for the
    small integration steps used by the rollouts.
    """
    A = -ad_se3(np.asarray(xi, dtype=float))
    J = np.eye(6)
    term = np.eye(6)
    for n in range(1, n_terms + 1):
        term = term @ A / (n + 1.0)
        J += term
        if np.max(np.abs(term)) < 1e-17:
            break
    return J


def se3_jac_left(xi: np.ndarray) -> np.ndarray:
    return se3_jac_right(-np.asarray(xi, dtype=float))


def skew_many(v: np.ndarray) -> np.ndarray:
    """Batched skew: (M, 3) -> (M, 3, 3)."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _sincos_coeffs(th2: np.ndarray):
    """Rodrigues coefficients a = sin(t)/t, b = (1-cos t)/t^2, series at 0."""
    th = np.sqrt(th2)
    small = th < SMALL_ANGLE
    th2s = np.where(small, 1.0, th2)
    a = np.where(small, 1.0 - th2 / 6.0, np.sin(th) / np.where(small, 1.0, th))
    b = np.where(small, 0.5 - th2 / 24.0, (1.0 - np.cos(th)) / th2s)
    c = np.where(small, 1.0 / 6.0 - th2 / 120.0, (th - np.sin(th)) / (th2s * np.where(small, 1.0, th)))
    return a, b, c


def rot_exp_many(w: np.ndarray) -> np.ndarray:
    """Batched Rodrigues formula: (M, 3) -> (M, 3, 3)."""
    w = np.asarray(w, dtype=float)
    th2 = np.einsum("...i,...i->...", w, w)
    a, b, _ = _sincos_coeffs(th2)
    W = skew_many(w)
    W2 = W @ W
    return np.eye(3) + a[..., None, None] * W + b[..., None, None] * W2


def se3_exp_many(xi: np.ndarray, dxi: float = 1.0) -> np.ndarray:
    """Batched SE(3) exponential: (M, 6) -> (M, 4, 4)."""
    xi = np.asarray(xi, dtype=float) * dxi
    w, v = xi[..., :3], xi[..., 3:]
    th2 = np.einsum("...i,...i->...", w, w)
    a, b, c = _sincos_coeffs(th2)
    W = skew_many(w)
    W2 = W @ W
    R = np.eye(3) + a[..., None, None] * W + b[..., None, None] * W2
    V = np.eye(3) + b[..., None, None] * W + c[..., None, None] * W2
    out = np.zeros(xi.shape[:-1] + (4, 4))
    out[..., :3, :3] = R
    out[..., :3, 3] = np.einsum("...ij,...j->...i", V, v)
    out[..., 3, 3] = 1.0
    return out


def ad_se3_many(s: np.ndarray) -> np.ndarray:
    """Batched screw adjoint: (M, 6) -> (M, 6, 6)."""
    s = np.asarray(s, dtype=float)
    out = np.zeros(s.shape[:-1] + (6, 6))
    W = skew_many(s[..., :3])
    out[..., :3, :3] = W
    out[..., 3:, 3:] = W
    out[..., 3:, :3] = skew_many(s[..., 3:])
    return out


def se3_jac_right_many(xi: np.ndarray, n_terms: int = 14) -> np.ndarray:
    """Batched right Jacobian series: (M, 6) -> (M, 6, 6)."""
    A = -ad_se3_many(xi)
    J = np.tile(np.eye(6), xi.shape[:-1] + (1, 1))
    term = J.copy()
    for n in range(1, n_terms + 1):
        term = term @ A / (n + 1.0)
        J += term
        if np.max(np.abs(term)) < 1e-17:
            break
    return J


def pose_inverse_many(T: np.ndarray) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    out = np.zeros_like(T)
    Rt = np.swapaxes(T[..., :3, :3], -1, -2)
    out[..., :3, :3] = Rt
    out[..., :3, 3] = -np.einsum("...ij,...j->...i", Rt, T[..., :3, 3])
    out[..., 3, 3] = 1.0
    return out


def screw_transform_many(T: np.ndarray) -> np.ndarray:
    """Batched screw transformation matrices: (M, 4, 4) -> (M, 6, 6)."""
    T = np.asarray(T, dtype=float)
    R = T[..., :3, :3]
    S = np.zeros(T.shape[:-2] + (6, 6))
    S[..., :3, :3] = R
    S[..., 3:, 3:] = R
    S[..., 3:, :3] = skew_many(T[..., :3, 3]) @ R
    return S


def screw_transform(T: np.ndarray) -> np.ndarray:
    """6x6 screw transformation matrix S(T) = [[R, 0], [skew(p) R, R]]."""
    R = T[:3, :3]
    p = T[:3, 3]
    S = np.zeros((6, 6))
    S[:3, :3] = R
    S[3:, 3:] = R
    S[3:, :3] = skew(p) @ R
    return S


def apply_screw_transform(T: np.ndarray, s: np.ndarray) -> np.ndarray:
    """screw_transform(T) @ s without building the 6x6 matrix."""
    R = T[:3, :3]
    p = T[:3, 3]
    a = R @ s[:3]
    return np.concatenate([a, R @ s[3:] + np.cross(p, a)])


def pose_inverse(T: np.ndarray) -> np.ndarray:
    Ti = np.eye(4)
    R = T[:3, :3]
    Ti[:3, :3] = R.T
    Ti[:3, 3] = -R.T @ T[:3, 3]
    return Ti


def rot_distance(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """Squared Frobenius distance ||Ra^T Rb - I||_F^2 between rotations."""
    D = Ra.T @ Rb - np.eye(3)
    return float(np.sum(D * D))


def rotation_mse_bound(angle: float) -> float:
    """Per-sample bound on ||R_meas^T R - I||_F^2 for an angular tolerance.

    Single source of truth for the angle <-> Frobenius conversion:
    a relative rotation by ``angle`` has squared Frobenius distance
    4 (1 - cos(angle)) from the identity.
    """
    return 4.0 * (1.0 - np.cos(angle))


def project_rotation(M: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix (polar projection); used at I/O boundaries."""
    U, _, Vt = np.linalg.svd(M)
    R = U @ Vt
    if np.linalg.det(R) < 0.0:
        R = U @ np.diag([1.0, 1.0, -1.0]) @ Vt
    return R


def is_rotation(R: np.ndarray, tol: float = ROT_TOL) -> bool:
    return (
        R.shape == (3, 3)
        and np.allclose(R.T @ R, np.eye(3), atol=tol)
        and abs(np.linalg.det(R) - 1.0) < tol
    )


def rot_interp(Ra: np.ndarray, Rb: np.ndarray, alpha: float) -> np.ndarray:
    """Geodesic interpolation between two rotations (alpha in [0, 1])."""
    return Ra @ rot_exp(alpha * rot_log(Ra.T @ Rb))


@dataclass(frozen=True)
class Pose:
    """Rigid-body pose: rotation matrix plus position vector [m]."""

    rotation: np.ndarray
    position: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T: np.ndarray) -> "Pose":
        return cls(np.array(T[:3, :3]), np.array(T[:3, 3]))

    @property
    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.position
        return T

    def compose(self, other: "Pose") -> "Pose":
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.position + self.position)

    def inverse(self) -> "Pose":
        return Pose(self.rotation.T, -self.rotation.T @ self.position)

    def is_valid(self, tol: float = ROT_TOL) -> bool:
        return is_rotation(self.rotation, tol) and bool(np.all(np.isfinite(self.position)))


TWIST = "twist"
WRENCH = "wrench"


@dataclass(frozen=True)
class Screw:
    """6-vector screw: a direction part and a moment part plus its kind.

    For a twist the direction is the rotational velocity and the moment the
    translational velocity; for a wrench they are force and moment.  The kind
    is fixed at construction.
    """

    direction: np.ndarray
    moment: np.ndarray
    kind: str = field(default=TWIST)

    def __post_init__(self):
        if self.kind not in (TWIST, WRENCH):
            raise ValueError(f"unknown screw kind: {self.kind!r}")
        object.__setattr__(self, "direction", np.asarray(self.direction, dtype=float))
        object.__setattr__(self, "moment", np.asarray(self.moment, dtype=float))
        if not (np.all(np.isfinite(self.direction)) and np.all(np.isfinite(self.moment))):
            raise ValueError("screw entries must be finite")

    @classmethod
    def from_array(cls, s: np.ndarray, kind: str = TWIST) -> "Screw":
        s = np.asarray(s, dtype=float)
        return cls(s[:3], s[3:], kind)

    @property
    def array(self) -> np.ndarray:
        return np.concatenate([self.direction, self.moment])

    def transformed(self, T: np.ndarray) -> "Screw":
        s = apply_screw_transform(T, self.array)
        return Screw(s[:3], s[3:], self.kind)
