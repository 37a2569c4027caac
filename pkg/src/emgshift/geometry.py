"""Rigid alignment of a triangulated marker space to a ground-aligned body frame.

A reference frame is given by three arrow vectors and an origin.  The
alignment rotation maps the (orthonormalized) arrows onto the canonical
basis; the translation then moves the origin to zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ARROW_LENGTH_M = 0.2


class DegenerateFrameError(ValueError):
    pass


@dataclass(frozen=True)
class Frame3:
    x_arrow: np.ndarray
    y_arrow: np.ndarray
    z_arrow: np.ndarray
    origin: np.ndarray

    def __post_init__(self):
        for name in ("x_arrow", "y_arrow", "z_arrow", "origin"):
            v = np.asarray(getattr(self, name), dtype=np.float64)
            if v.shape != (3,) or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be a finite 3-vector")
            object.__setattr__(self, name, v)

    @classmethod
    def from_points(cls, origin, x_tip, y_tip, z_tip) -> "Frame3":
        o = np.asarray(origin, dtype=np.float64)
        return cls(np.asarray(x_tip) - o, np.asarray(y_tip) - o, np.asarray(z_tip) - o, o)

    def axes(self) -> np.ndarray:
        """Arrows as matrix columns."""
        return np.column_stack([self.x_arrow, self.y_arrow, self.z_arrow])

    def unit_tips(self) -> np.ndarray:
        """Origin plus each unit-length arrow, as rows."""
        a = self.axes().T
        return self.origin + a / np.linalg.norm(a, axis=1, keepdims=True)


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        if R.shape != (3, 3) or t.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation a 3-vector")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def is_proper(self, tol: float = 1e-9) -> bool:
        R = self.rotation
        return bool(np.abs(R.T @ R - np.eye(3)).max() <= tol and abs(np.linalg.det(R) - 1) <= tol)


def apply(tf: RigidTransform, p) -> np.ndarray:
    """``R p + t`` for a point or an ``(n, 3)`` array of points."""
    p = np.asarray(p, dtype=np.float64)
    return p @ tf.rotation.T + tf.translation


def roll(theta_x: float) -> np.ndarray:
    c, s = np.cos(theta_x), np.sin(theta_x)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def pitch(theta_y: float) -> np.ndarray:
    c, s = np.cos(theta_y), np.sin(theta_y)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def yaw(theta_z: float) -> np.ndarray:
    c, s = np.cos(theta_z), np.sin(theta_z)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def rot(theta_x: float, theta_y: float, theta_z: float) -> np.ndarray:
    """Roll-pitch-yaw rotation ``Yaw(z) @ Pitch(y) @ Roll(x)``."""
    return yaw(theta_z) @ pitch(theta_y) @ roll(theta_x)


def gram_schmidt(frame: Frame3, cond_tol: float = 1e-6) -> Frame3:
    """Orthonormalize the arrows keeping the x direction.

    Projections are removed in the order x from y, x from z, then y from z.
    Raises :class:`DegenerateFrameError` when an arrow is (nearly) zero or
    (nearly) dependent on the earlier ones.
    """
    x, y, z = (a.copy() for a in (frame.x_arrow, frame.y_arrow, frame.z_arrow))
    scale = max(np.linalg.norm(x), np.linalg.norm(y), np.linalg.norm(z))
    if scale == 0:
        raise DegenerateFrameError("zero arrows")

    def unit(v, ref):
        n = np.linalg.norm(v)
        if n <= cond_tol * ref:
            raise DegenerateFrameError("arrows are (nearly) linearly dependent")
        return v / n

    x = unit(x, scale)
    y = unit(y - (y @ x) * x, np.linalg.norm(y) or scale)
    z0 = np.linalg.norm(z)
    z = z - (z @ x) * x
    z = unit(z - (z @ y) * y, z0 or scale)
    return Frame3(x, y, z, frame.origin)


def _rho(p_main, p_side, angle):
    """Length of the in-plane projection, taking whichever of cos/sin is
    better conditioned."""
    c, s = np.cos(angle), np.sin(angle)
    return p_main / c if abs(c) >= abs(s) else p_side / s


def sequential_rotation(axes: np.ndarray) -> np.ndarray:
    """Rotation built one axis at a time from roll/pitch/yaw angles.

    ``axes`` holds orthonormal right-handed arrows as columns.  The first
    stage turns the x arrow onto e_x (pitch then yaw), the second turns the y
    arrow onto e_y about e_x (roll), the third only fixes the z sign.
    """
    P1 = np.asarray(axes, dtype=np.float64)
    vx, vy, vz = P1[:, 0]
    ty1 = np.arctan2(vz, vx)
    tz1 = np.arctan2(-vy, _rho(vx, vz, ty1))
    Rx = rot(0.0, ty1, tz1)

    P2 = Rx @ P1
    wx, wy, wz = P2[:, 1]
    tx2 = np.arctan2(-wz, wy)
    tz2 = np.arctan2(wx, _rho(wy, -wz, tx2))
    Ry = rot(tx2, 0.0, tz2)

    P3 = Ry @ P2
    ux, uy, uz = P3[:, 2]
    tx3 = np.arctan2(-uy, uz)
    ty3 = np.arctan2(ux, _rho(uz, -uy, tx3))
    Rz = np.diag([1.0, 1.0, rot(tx3, ty3, 0.0)[2, 2]])
    return Rz @ Ry @ Rx


def alignment_transform(frame: Frame3, method: str = "transpose",
                        cross_check_tol: float | None = 1e-6) -> RigidTransform:
    """Transform mapping the frame's axes to the canonical basis and its
    origin to zero.

    ``method="transpose"`` uses the orthonormalized axes directly;
    ``method="sequential"`` composes per-axis roll/pitch/yaw rotations.  With
    ``cross_check_tol`` set, the two constructions must agree.
    """
    g = gram_schmidt(frame)
    Q = g.axes()
    if np.linalg.det(Q) < 0:
        raise DegenerateFrameError("arrows form a left-handed frame")
    R_t = Q.T
    R_s = sequential_rotation(Q) if (method == "sequential" or cross_check_tol is not None) else None
    if method == "transpose":
        R = R_t
    elif method == "sequential":
        R = R_s
    else:
        raise ValueError(f"unknown method {method!r}")
    if cross_check_tol is not None and np.abs(R_s - R_t).max() > cross_check_tol:
        raise ArithmeticError("sequential and transpose rotations disagree")
    return RigidTransform(R, -R @ frame.origin)


def arrow_points(cam_rotation: np.ndarray, origin, length: float = ARROW_LENGTH_M) -> np.ndarray:
    """Origin followed by the three arrow tips for a board with the given
    orientation, as a ``(4, 3)`` array."""
    o = np.asarray(origin, dtype=np.float64)
    return np.vstack([o, o + length * np.asarray(cam_rotation, dtype=np.float64).T])
