"""Front-leg kinematics and the catching controller.

Each front leg is an abduction joint followed by a planar hip/knee chain.
In the leg frame, q = 0 hangs the straight leg along -z with the foot at
(0, side * l_hip, -(l_thigh + l_calf)).  The leg frame is attached to the
robot frame at ``shoulder_pos`` and rotated by the body pitch, since the
robot catches while standing on its rear legs.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .errors import InvalidInputError, InvalidReferenceError

OPEN = "open"
CLOSED = "closed"

Y_OPENED = 0.15
Y_CLOSED = 0.01
T_THRESH = 0.15
NOMINAL_Q = (0.0, 0.925, -1.77)


def _pitch_matrix(pitch: float) -> np.ndarray:
    """Rotation taking leg-frame vectors to the robot frame for a nose-up body pitch."""
    c, s = math.cos(pitch), math.sin(pitch)
    # R_y(-pitch)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


@dataclass(frozen=True)
class LegGeometry:
    """One front leg.

    ``side`` is +1 for the leg on the +y side and -1 for the other one.
    ``body_pitch`` is the nose-up pitch of the trunk (pi/2 when standing on
    the rear legs).  Joint order is (abduction, hip, knee).
    """

    l_hip: float = 0.08
    l_thigh: float = 0.213
    l_calf: float = 0.213
    side: int = 1
    shoulder_pos: Tuple[float, float, float] = (0.0, 0.047, -0.05)
    q_min: Tuple[float, float, float] = (-0.9, -0.15, -2.3)
    q_max: Tuple[float, float, float] = (0.6, 2.05, -0.5)
    body_pitch: float = math.pi / 2

    def __post_init__(self):
        if min(self.l_hip, self.l_thigh, self.l_calf) <= 0:
            raise InvalidInputError("link lengths must be positive")
        if any(lo >= hi for lo, hi in zip(self.q_min, self.q_max)):
            raise InvalidInputError("joint limits need min < max")
        if self.side not in (1, -1):
            raise InvalidInputError("side must be +1 or -1")
        for name in ("shoulder_pos", "q_min", "q_max"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        object.__setattr__(self, "rotation", _pitch_matrix(self.body_pitch))

    @property
    def total_length(self) -> float:
        return self.l_hip + self.l_thigh + self.l_calf

    def mirrored(self) -> "LegGeometry":
        """The same leg on the opposite side of the body."""
        sx, sy, sz = self.shoulder_pos
        lo, hi = self.q_min, self.q_max
        return LegGeometry(
            self.l_hip, self.l_thigh, self.l_calf, -self.side, (sx, -sy, sz),
            (-hi[0], lo[1], lo[2]), (-lo[0], hi[1], hi[2]), self.body_pitch,
        )

    def to_robot(self, p_leg) -> np.ndarray:
        return np.asarray(self.shoulder_pos) + self.rotation @ np.asarray(p_leg, dtype=float)

    def to_leg(self, p_robot) -> np.ndarray:
        return self.rotation.T @ (np.asarray(p_robot, dtype=float) - np.asarray(self.shoulder_pos))


@dataclass
class JointState:
    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).reshape(3)
        self.qd = np.asarray(self.qd, dtype=float).reshape(3)


@dataclass(frozen=True)
class CartesianGains:
    Kp: np.ndarray = field(default_factory=lambda: 400.0 * np.eye(3))
    Kd: np.ndarray = field(default_factory=lambda: 8.0 * np.eye(3))
    Kd_joint: np.ndarray = field(default_factory=lambda: 1.0 * np.eye(3))

    def __post_init__(self):
        for name in ("Kp", "Kd", "Kd_joint"):
            m = np.asarray(getattr(self, name), dtype=float)
            if m.ndim == 1:
                m = np.diag(m)
            if m.shape != (3, 3) or np.any(np.diag(m) < 0):
                raise InvalidInputError(f"{name} must be a 3x3 matrix with non-negative diagonal")
            object.__setattr__(self, name, m)

    @classmethod
    def isotropic(cls, kp: float, kd: float, kd_joint: float) -> "CartesianGains":
        return cls(kp * np.eye(3), kd * np.eye(3), kd_joint * np.eye(3))


@dataclass(frozen=True)
class FootTarget:
    p_d: np.ndarray
    closing: str = OPEN
    p_robot: Optional[np.ndarray] = None


def forward_kinematics(geom: LegGeometry, q) -> np.ndarray:
    """Foot position in the leg frame."""
    q1, q2, q3 = float(q[0]), float(q[1]), float(q[2])
    s1, c1 = math.sin(q1), math.cos(q1)
    s2, c2 = math.sin(q2), math.cos(q2)
    s23, c23 = math.sin(q2 + q3), math.cos(q2 + q3)
    px = -geom.l_thigh * s2 - geom.l_calf * s23
    pz = -geom.l_thigh * c2 - geom.l_calf * c23
    py = geom.side * geom.l_hip
    return np.array([px, c1 * py - s1 * pz, s1 * py + c1 * pz])


def foot_position_robot(geom: LegGeometry, q) -> np.ndarray:
    return geom.to_robot(forward_kinematics(geom, q))


def jacobian(geom: LegGeometry, q) -> np.ndarray:
    """d(forward_kinematics)/dq in the leg frame."""
    q1, q2, q3 = float(q[0]), float(q[1]), float(q[2])
    s1, c1 = math.sin(q1), math.cos(q1)
    s2, c2 = math.sin(q2), math.cos(q2)
    s23, c23 = math.sin(q2 + q3), math.cos(q2 + q3)
    l1, l2 = geom.l_thigh, geom.l_calf
    py = geom.side * geom.l_hip
    pz = -l1 * c2 - l2 * c23
    # planar partials of (px, pz)
    dpx2, dpx3 = -l1 * c2 - l2 * c23, -l2 * c23
    dpz2, dpz3 = l1 * s2 + l2 * s23, l2 * s23
    return np.array(
        [
            [0.0, dpx2, dpx3],
            [-s1 * py - c1 * pz, -s1 * dpz2, -s1 * dpz3],
            [c1 * py - s1 * pz, c1 * dpz2, c1 * dpz3],
        ]
    )


def fk_batch(geom: LegGeometry, Q: np.ndarray) -> np.ndarray:
    """Leg-frame foot positions for an (n, 3) array of configurations."""
    Q = np.asarray(Q, dtype=float)
    q1, q2, q3 = Q[:, 0], Q[:, 1], Q[:, 2]
    px = -geom.l_thigh * np.sin(q2) - geom.l_calf * np.sin(q2 + q3)
    pz = -geom.l_thigh * np.cos(q2) - geom.l_calf * np.cos(q2 + q3)
    py = geom.side * geom.l_hip
    return np.stack([px, np.cos(q1) * py - np.sin(q1) * pz, np.sin(q1) * py + np.cos(q1) * pz], axis=1)


@dataclass(frozen=True)
class WorkspaceBox:
    """Axis-aligned box in the robot frame that foot targets are clipped into."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))
        if np.any(self.lo > self.hi):
            raise InvalidInputError("workspace box needs lo <= hi")

    def clip(self, p) -> np.ndarray:
        return np.minimum(np.maximum(np.asarray(p, dtype=float), self.lo), self.hi)

    def contains(self, p, tol: float = 0.0) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.lo - tol) and np.all(p <= self.hi + tol))


def workspace_box(geom: LegGeometry, shrink: float = 0.10, samples: int = 25) -> WorkspaceBox:
    """Bounding box of reachable foot positions, shrunk about its centre.

    Reachability is sampled on a regular grid over the joint limits.
    """
    axes = [np.linspace(lo, hi, samples) for lo, hi in zip(geom.q_min, geom.q_max)]
    Q = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    pts = fk_batch(geom, Q) @ geom.rotation.T + np.asarray(geom.shoulder_pos)
    return shrink_box(WorkspaceBox(pts.min(axis=0), pts.max(axis=0)), shrink)


def inverse_kinematics(geom: LegGeometry, p_leg: np.ndarray) -> np.ndarray:
    """Joint angles placing the foot at leg-frame points ``p_leg`` (shape (n, 3)).

    Every abduction/knee branch is tried and the first one inside the joint
    limits is kept; rows without such a solution are NaN.
    """
    P = np.atleast_2d(np.asarray(p_leg, dtype=float))
    px, py, pz = P[:, 0], P[:, 1], P[:, 2]
    a = geom.side * geom.l_hip
    l1, l2 = geom.l_thigh, geom.l_calf
    lo, hi = np.asarray(geom.q_min), np.asarray(geom.q_max)
    out = np.full((len(P), 3), np.nan)
    with np.errstate(invalid="ignore"):
        r2 = py * py + pz * pz - a * a
        for zsign in (-1.0, 1.0):
            zp = zsign * np.sqrt(r2)
            q1 = np.arctan2(pz, py) - np.arctan2(zp, a)
            q1 = (q1 + np.pi) % (2 * np.pi) - np.pi
            # planar chain: (-zp, -px) = l1 (c2, s2) + l2 (c23, s23)
            X, Y = -zp, -px
            c3 = (X * X + Y * Y - l1 * l1 - l2 * l2) / (2 * l1 * l2)
            for ksign in (-1.0, 1.0):
                q3 = ksign * np.arccos(c3)
                q2 = np.arctan2(Y, X) - np.arctan2(l2 * np.sin(q3), l1 + l2 * np.cos(q3))
                q2 = (q2 + np.pi) % (2 * np.pi) - np.pi
                Q = np.stack([q1, q2, q3], axis=1)
                ok = np.all((Q >= lo - 1e-12) & (Q <= hi + 1e-12), axis=1) & np.isnan(out[:, 0])
                out[ok] = Q[ok]
    return out


def reachable(geom: LegGeometry, p_robot) -> np.ndarray:
    """Boolean mask of robot-frame points the foot can reach within joint limits."""
    P = np.atleast_2d(np.asarray(p_robot, dtype=float))
    P_leg = (P - np.asarray(geom.shoulder_pos)) @ geom.rotation
    return ~np.isnan(inverse_kinematics(geom, P_leg)[:, 0])


def _face_points(lo: np.ndarray, hi: np.ndarray, axis: int, value: float, spacing: float) -> np.ndarray:
    grids = []
    for k in range(3):
        if k == axis:
            grids.append(np.array([value]))
        else:
            n = max(2, int(math.ceil((hi[k] - lo[k]) / spacing)) + 1)
            grids.append(np.linspace(lo[k], hi[k], n))
    return np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1).reshape(-1, 3)


@functools.lru_cache(maxsize=32)
def inscribed_box(
    geom: LegGeometry, center: Tuple[float, float, float], step: float = 0.005, spacing: float = 0.005
) -> WorkspaceBox:
    """Grow an axis-aligned box from ``center`` while every face stays reachable.

    Faces are pushed outwards round-robin by ``step``; a move is kept only if
    a ``spacing`` grid over the new face is reachable.  The result is a box in
    which every clipped target is actually attainable.
    """
    lo = np.array(center, dtype=float)
    hi = lo.copy()
    if not reachable(geom, lo)[0]:
        raise InvalidInputError(f"box centre {center} is not reachable")
    grown = True
    while grown:
        grown = False
        for axis in range(3):
            for upper in (False, True):
                new_lo, new_hi = lo.copy(), hi.copy()
                if upper:
                    new_hi[axis] += step
                    value = new_hi[axis]
                else:
                    new_lo[axis] -= step
                    value = new_lo[axis]
                if reachable(geom, _face_points(new_lo, new_hi, axis, value, spacing)).all():
                    lo, hi = new_lo, new_hi
                    grown = True
    return WorkspaceBox(lo, hi)


def shrink_box(box: WorkspaceBox, shrink: float) -> WorkspaceBox:
    mid, half = 0.5 * (box.lo + box.hi), 0.5 * (box.hi - box.lo) * (1.0 - shrink)
    return WorkspaceBox(mid - half, mid + half)


def cartesian_pd_law(J: np.ndarray, p: np.ndarray, p_d: np.ndarray, qd: np.ndarray, gains: CartesianGains) -> np.ndarray:
    """tau = J^T [Kp (p_d - p) - Kd v] - Kd_joint qd, with v = J qd."""
    v = J @ qd
    return J.T @ (gains.Kp @ (p_d - p) - gains.Kd @ v) - gains.Kd_joint @ qd


def cartesian_pd_torque(geom: LegGeometry, state: JointState, target: FootTarget, gains: CartesianGains) -> np.ndarray:
    """Joint torques servoing the foot to ``target.p_d`` (leg frame) with zero desired velocity."""
    J = jacobian(geom, state.q)
    p = forward_kinematics(geom, state.q)
    return cartesian_pd_law(J, p, np.asarray(target.p_d, dtype=float), state.qd, gains)


def foot_targets_from_plan(
    x_catch,
    phase: str,
    legs: Tuple[LegGeometry, LegGeometry],
    boxes: Tuple[WorkspaceBox, WorkspaceBox],
    y_opened: float = Y_OPENED,
    y_closed: float = Y_CLOSED,
) -> Tuple[FootTarget, FootTarget]:
    """Place the two feet either side of the catch point.

    Args:
        x_catch: catch position in the robot frame (a CatchPlan's ``x_catch``).
        phase: OPEN or CLOSED; selects the lateral offset.
        legs: (+y leg, -y leg) geometries.
        boxes: matching workspace boxes, robot frame.

    Returns:
        Targets for the +y and -y legs, in their leg frames.
    """
    if phase not in (OPEN, CLOSED):
        raise InvalidInputError(f"unknown phase {phase!r}")
    off = y_opened if phase == OPEN else y_closed
    x, y, z = (float(v) for v in x_catch)
    out = []
    for geom, box in zip(legs, boxes):
        p_robot = box.clip([x, y + geom.side * off, z])
        out.append(FootTarget(geom.to_leg(p_robot), phase, p_robot))
    return out[0], out[1]


def closing_trigger(t_remain: float, t_thresh: float = T_THRESH, phase: str = OPEN) -> str:
    """Close once the time remaining drops below ``t_thresh``; stays closed afterwards."""
    if phase == CLOSED or t_remain < t_thresh:
        return CLOSED
    return OPEN


def joint_pd_tracking(q_d, qd_d, tau_d, state: JointState, Kp_joint, Kd_joint) -> np.ndarray:
    """Joint-space PD tracking with torque feedforward."""
    q_d, qd_d, tau_d = (np.asarray(a, dtype=float) for a in (q_d, qd_d, tau_d))
    if not (q_d.shape == qd_d.shape == tau_d.shape == state.q.shape):
        raise InvalidInputError("reference arrays must match the joint state")
    Kp, Kd = np.asarray(Kp_joint, dtype=float), np.asarray(Kd_joint, dtype=float)
    if Kp.ndim == 1:
        Kp = np.diag(Kp)
    if Kd.ndim == 1:
        Kd = np.diag(Kd)
    return Kp @ (q_d - state.q) + Kd @ (qd_d - state.qd) + tau_d


def interpolate_reference(times, values, dt_out: float = 1e-3) -> Tuple[np.ndarray, np.ndarray]:
    """Piecewise-linear upsampling of a uniformly sampled reference.

    The input spacing must be uniform and an integer multiple of ``dt_out``;
    every input knot is reproduced exactly in the output.

    Returns:
        (times, values) at the output rate; values keep their trailing shape.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(t) < 2 or len(v) != len(t):
        raise InvalidReferenceError("need at least two samples with matching times")
    steps = np.diff(t)
    dt_in = steps[0]
    if dt_in <= 0 or not np.allclose(steps, dt_in, rtol=1e-9, atol=1e-12):
        raise InvalidReferenceError("reference samples are not uniformly spaced")
    ratio = dt_in / dt_out
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > 1e-9 * max(1.0, ratio):
        raise InvalidReferenceError(f"input spacing {dt_in} is not a multiple of {dt_out}")
    frac = (np.arange(n) / n).reshape((1, n) + (1,) * (v.ndim - 1))
    seg = v[:-1, None] + (v[1:, None] - v[:-1, None]) * frac
    out_v = np.concatenate([seg.reshape((-1,) + v.shape[1:]), v[-1:]], axis=0)
    out_t = t[0] + np.arange(len(out_v)) * (dt_in / n)
    return out_t, out_v
