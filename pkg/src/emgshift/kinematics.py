"""Two-link planar arm kinematics and minimum-jerk target tasks.

Angles are radians throughout.  The shoulder sits at the origin of the
movement plane; ``theta_elb = 0`` is a straight arm and positive elbow
velocity is flexion.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TASK_RATE_HZ = 120.0
TASK_DURATION_S = 60.0
N_TASK_KINDS = 5


class UnreachableError(ValueError):
    pass


@dataclass(frozen=True)
class ArmGeometry:
    l_sld: float = 0.3
    l_elb: float = 0.3

    def __post_init__(self):
        if not (self.l_sld > 0 and self.l_elb > 0):
            raise ValueError("link lengths must be positive")

    @property
    def reach(self) -> float:
        return self.l_sld + self.l_elb


@dataclass(frozen=True)
class JointState:
    theta_sld: float
    theta_elb: float


@dataclass(frozen=True)
class WristTarget:
    x: float
    y: float


@dataclass
class MinJerkSegment:
    """Boundary conditions of one quintic piece.

    ``start`` and ``end`` are ``(position, velocity, acceleration)``; each
    entry is a scalar or an array with one value per coordinate.
    """

    t0: float
    t1: float
    start: tuple
    end: tuple = None

    def __post_init__(self):
        if self.end is None:
            self.end = (self.start[0], 0.0, 0.0)
        if len(self.start) == 1:
            self.start = (self.start[0], 0.0, 0.0)
        if len(self.end) == 1:
            self.end = (self.end[0], 0.0, 0.0)


def min_jerk_coeffs(seg: MinJerkSegment) -> np.ndarray:
    """Quintic coefficients ``a[k]`` of ``p(t) = sum_k a[k] (t - t0)**k``.

    Solves the 6x6 boundary system.  Returns shape ``(6,)`` for scalar
    boundaries, ``(6, n_coords)`` otherwise.
    """
    T = float(seg.t1) - float(seg.t0)
    if not T > 0:
        raise ValueError(f"segment needs t1 > t0 (got duration {T})")
    p0, v0, a0 = (np.asarray(v, dtype=np.float64) for v in seg.start)
    p1, v1, a1 = (np.asarray(v, dtype=np.float64) for v in seg.end)
    A = np.array([
        [1, 0, 0, 0, 0, 0],
        [0, 1, 0, 0, 0, 0],
        [0, 0, 2, 0, 0, 0],
        [1, T, T**2, T**3, T**4, T**5],
        [0, 1, 2 * T, 3 * T**2, 4 * T**3, 5 * T**4],
        [0, 0, 2, 6 * T, 12 * T**2, 20 * T**3],
    ])
    b = np.stack(np.broadcast_arrays(p0, v0, a0, p1, v1, a1))
    return np.linalg.solve(A, b.reshape(6, -1)).reshape(b.shape)


def min_jerk_eval(coeffs: np.ndarray, t0: float, t, deriv: int = 0) -> np.ndarray:
    """Evaluate the quintic (or its ``deriv``-th derivative) at times ``t``."""
    tau = np.asarray(t, dtype=np.float64) - t0
    c = np.asarray(coeffs, dtype=np.float64)
    for _ in range(deriv):
        k = np.arange(1, c.shape[0]).reshape((-1,) + (1,) * (c.ndim - 1))
        c = c[1:] * k
    out = np.zeros(np.shape(tau) + c.shape[1:])
    for ck in c[::-1]:  # Horner
        out = out * (tau[..., None] if c.ndim > 1 else tau) + ck
    return out


def forward_kinematics(joints: JointState, arm: ArmGeometry = ArmGeometry()) -> WristTarget:
    x, y = fk_arrays(joints.theta_sld, joints.theta_elb, arm)
    return WristTarget(float(x), float(y))


def fk_arrays(theta_sld, theta_elb, arm: ArmGeometry = ArmGeometry()):
    s = np.asarray(theta_sld, dtype=np.float64)
    e = np.asarray(theta_elb, dtype=np.float64)
    x = arm.l_sld * np.cos(s) + arm.l_elb * np.cos(s + e)
    y = arm.l_sld * np.sin(s) + arm.l_elb * np.sin(s + e)
    return x, y


def ik_arrays(x, y, arm: ArmGeometry = ArmGeometry(), shoulder=(0.0, 0.0), tol: float = 1e-12):
    """Vectorized elbow-up inverse kinematics.

    With ``a``/``b`` the wrist offsets from the shoulder along y/x and
    ``c``/``d`` the projections of the wrist distance onto the upper arm and
    forearm, the shoulder angle is ``atan2(a, b) - atan2(sqrt(r2 - c2), c)``
    and the elbow angle ``atan2(sqrt(r2 - c2), c) + atan2(sqrt(r2 - d2), d)``.
    Radicands are clamped at zero so the fully extended arm is accepted.
    """
    a = np.asarray(y, dtype=np.float64) - shoulder[1]
    b = np.asarray(x, dtype=np.float64) - shoulder[0]
    L1, L2 = arm.l_sld, arm.l_elb
    r2 = a**2 + b**2
    r = np.sqrt(r2)
    if np.any(r > L1 + L2 + tol) or np.any(r < abs(L1 - L2) - tol):
        raise UnreachableError("wrist target outside the reachable annulus")
    if np.any(r2 == 0):
        raise UnreachableError("wrist at the shoulder: shoulder angle undefined")
    c = (r2 + L1**2 - L2**2) / (2 * L1)
    d = (r2 - L1**2 + L2**2) / (2 * L2)
    alpha = np.arctan2(np.sqrt(np.maximum(r2 - c**2, 0.0)), c)
    beta = np.arctan2(np.sqrt(np.maximum(r2 - d**2, 0.0)), d)
    return np.arctan2(a, b) - alpha, alpha + beta


def inverse_kinematics(target: WristTarget, arm: ArmGeometry = ArmGeometry()) -> JointState:
    s, e = ik_arrays(target.x, target.y, arm)
    return JointState(float(s), float(e))


def jacobian(theta_sld, theta_elb, arm: ArmGeometry = ArmGeometry()) -> np.ndarray:
    """Wrist Jacobian d(x, y)/d(theta_sld, theta_elb), shape ``(..., 2, 2)``."""
    s = np.asarray(theta_sld, dtype=np.float64)
    se = s + np.asarray(theta_elb, dtype=np.float64)
    J = np.empty(s.shape + (2, 2))
    J[..., 0, 0] = -arm.l_sld * np.sin(s) - arm.l_elb * np.sin(se)
    J[..., 0, 1] = -arm.l_elb * np.sin(se)
    J[..., 1, 0] = arm.l_sld * np.cos(s) + arm.l_elb * np.cos(se)
    J[..., 1, 1] = arm.l_elb * np.cos(se)
    return J


# ---------------------------------------------------------------------------
# tasks


@dataclass
class TaskSegment:
    t0: float
    t1: float
    space: str  # "wrist" or "joint"
    coeffs: np.ndarray  # (6, 2): x/y or sld/elb


@dataclass
class Task:
    kind: int
    t: np.ndarray
    theta_sld: np.ndarray
    theta_elb: np.ndarray
    x: np.ndarray
    y: np.ndarray
    segments: list[TaskSegment] = field(default_factory=list)
    arm: ArmGeometry = ArmGeometry()

    @property
    def sample_rate_hz(self) -> float:
        return TASK_RATE_HZ

    def moving_fraction(self) -> float:
        busy = sum(s.t1 - s.t0 for s in self.segments)
        return busy / (self.t[-1] + 1.0 / TASK_RATE_HZ)

    def joint_derivatives(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Analytic joint velocity and acceleration, each ``(n, 2)``.

        Zero outside movement segments (the arm holds still between them).
        """
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        vel = np.zeros((t.size, 2))
        acc = np.zeros((t.size, 2))
        for seg in self.segments:
            m = (t >= seg.t0) & (t <= seg.t1)
            if not m.any():
                continue
            tt = t[m]
            p = min_jerk_eval(seg.coeffs, seg.t0, tt)
            dp = min_jerk_eval(seg.coeffs, seg.t0, tt, 1)
            ddp = min_jerk_eval(seg.coeffs, seg.t0, tt, 2)
            if seg.space == "joint":
                vel[m], acc[m] = dp, ddp
                continue
            s, e = ik_arrays(p[:, 0], p[:, 1], self.arm)
            J = jacobian(s, e, self.arm)
            qd = np.linalg.solve(J, dp[..., None])[..., 0]
            # d/dt J along the path
            se = s + e
            wse = qd[:, 0] + qd[:, 1]
            Jd = np.empty_like(J)
            Jd[:, 0, 0] = -self.arm.l_sld * np.cos(s) * qd[:, 0] - self.arm.l_elb * np.cos(se) * wse
            Jd[:, 0, 1] = -self.arm.l_elb * np.cos(se) * wse
            Jd[:, 1, 0] = -self.arm.l_sld * np.sin(s) * qd[:, 0] - self.arm.l_elb * np.sin(se) * wse
            Jd[:, 1, 1] = -self.arm.l_elb * np.sin(se) * wse
            rhs = ddp - np.einsum("nij,nj->ni", Jd, qd)
            vel[m] = qd
            acc[m] = np.linalg.solve(J, rhs[..., None])[..., 0]
        return vel, acc


# per kind: (space, duration range s, elbow excursion range rad, back-to-back pair)
TASK_PROFILES = {
    1: ("wrist", (0.5, 0.7), (1.2, 1.7), False),    # point-to-point reaches
    2: ("wrist", (0.45, 0.6), (1.1, 1.5), False),   # fast short reaches
    3: ("wrist", (0.7, 0.9), (1.7, 2.1), False),    # long straight lines
    4: ("wrist", (0.45, 0.6), (1.0, 1.4), True),    # flexion straight into extension
    5: ("joint", (0.5, 0.7), (1.2, 1.7), False),    # curved, planned on joint angles
}
ELBOW_RANGE = (0.35, 2.6)
SHOULDER_RANGE = (-0.6, 0.9)


def _plan_move(rng, space, theta0, dur_rng, exc_rng, direction, arm):
    """Pick an end posture and return (theta1, duration)."""
    for _ in range(100):
        exc = rng.uniform(*exc_rng)
        e1 = np.clip(theta0[1] + direction * exc, *ELBOW_RANGE)
        s1 = np.clip(theta0[0] + rng.uniform(-0.35, 0.35), *SHOULDER_RANGE)
        th1 = np.array([s1, e1])
        if abs(e1 - theta0[1]) < 0.5 * exc_rng[0]:
            direction = -direction
            continue
        if space == "wrist":
            # straight wrist chord must stay clear of the shoulder singularity
            p0 = np.array(fk_arrays(*theta0, arm))
            p1 = np.array(fk_arrays(*th1, arm))
            d = p1 - p0
            lam = np.clip(-p0 @ d / max(d @ d, 1e-12), 0, 1)
            if np.linalg.norm(p0 + lam * d) < 0.12:
                continue
        return th1, rng.uniform(*dur_rng)
    raise RuntimeError("could not plan a reachable movement")


def generate_task(kind: int, seed: int | np.random.SeedSequence = 0, arm: ArmGeometry = ArmGeometry(),
                  duration_s: float = TASK_DURATION_S, rate_hz: float = TASK_RATE_HZ) -> Task:
    """Target-tracking task of ~60 s at 120 Hz with rest and movement in
    roughly equal measure.

    Kinds 1-4 move the wrist along straight lines; kind 5 interpolates the
    joint angles directly, which bends the wrist path.  Every movement starts
    and ends at rest (zero velocity and acceleration), so the joint-angle
    series is C2 at every join.
    """
    if kind not in TASK_PROFILES:
        raise ValueError(f"task kind must be 1..{N_TASK_KINDS}")
    rng = np.random.default_rng(seed)
    space, dur_rng, exc_rng, paired = TASK_PROFILES[kind]
    theta = np.array([rng.uniform(-0.2, 0.4), rng.uniform(0.5, 1.0)])
    t = rng.uniform(1.0, 2.0)
    direction = 1.0
    segments: list[TaskSegment] = []
    while True:
        moves = []
        th = theta.copy()
        tt = t
        for _ in range(2 if paired else 1):
            th1, dur = _plan_move(rng, space, th, dur_rng, exc_rng, direction, arm)
            moves.append((tt, tt + dur, th, th1))
            direction = -direction
            tt += dur
            th = th1
        busy = tt - t
        # labeled movement is shorter than the planned segment, so planned rest
        # is shortened to keep labeled rest and movement near 1:1
        rest = busy * rng.uniform(0.35, 0.5)
        if tt > duration_s - 0.25:
            break
        for t0, t1, a, b in moves:
            if space == "wrist":
                pa = np.array(fk_arrays(*a, arm))
                pb = np.array(fk_arrays(*b, arm))
                c = min_jerk_coeffs(MinJerkSegment(t0, t1, (pa, 0.0, 0.0), (pb, 0.0, 0.0)))
            else:
                c = min_jerk_coeffs(MinJerkSegment(t0, t1, (a, 0.0, 0.0), (b, 0.0, 0.0)))
            segments.append(TaskSegment(t0, t1, space, c))
        theta = th
        t = tt + rest
        direction = 1.0 if theta[1] < 1.4 else -1.0

    n = int(round(duration_s * rate_hz))
    ts = np.arange(n) / rate_hz
    q = np.empty((n, 2))
    # hold posture before the first movement and between movements
    q[:] = segments[0].coeffs[0] if segments[0].space == "joint" else np.array(
        ik_arrays(*segments[0].coeffs[0], arm))
    for seg in segments:
        end_pos = min_jerk_eval(seg.coeffs, seg.t0, seg.t1)
        if seg.space == "wrist":
            end_q = np.array(ik_arrays(*end_pos, arm))
        else:
            end_q = end_pos
        m = (ts >= seg.t0) & (ts <= seg.t1)
        p = min_jerk_eval(seg.coeffs, seg.t0, ts[m])
        if seg.space == "wrist":
            q[m] = np.stack(ik_arrays(p[:, 0], p[:, 1], arm), axis=1)
        else:
            q[m] = p
        q[ts > seg.t1] = end_q
    x, y = fk_arrays(q[:, 0], q[:, 1], arm)
    return Task(kind, ts, q[:, 0].copy(), q[:, 1].copy(), x, y, segments, arm)


def resample_task(task: Task, rate_hz: float) -> np.ndarray:
    """Elbow angle at ``rate_hz`` (must divide the task rate)."""
    step = TASK_RATE_HZ / rate_hz
    if abs(step - round(step)) > 1e-9:
        raise ValueError("rate must divide the task rate")
    return task.theta_elb[::int(round(step))]


def write_task_csv(task: Task, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "theta_sld_rad", "theta_elb_rad", "x_m", "y_m"])
        for row in zip(task.t, task.theta_sld, task.theta_elb, task.x, task.y):
            w.writerow([repr(float(v)) for v in row])
