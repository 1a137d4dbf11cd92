"""Gravity-informed least-squares fit of a ballistic trajectory.

x and y are fitted as lines in time, z as a parabola whose quadratic
coefficient is pulled towards -g/2 by a ridge term of weight ``lam``.  All
fits are computed from running power/moment sums, so re-solving after each
new frame costs O(1).  Times are rebased to the first ingested observation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from .errors import AlreadyPassedError, DegenerateDataError, InsufficientDataError, NoCrossingError
from .frames import RobotPoint

MIN_POINTS = 3
_MAX_COND = 1e12


@dataclass
class RegressionAccumulators:
    """Running sums for the x/y/z normal equations.

    ``s1..s4`` are sums of t**k and the remaining fields are moment sums.
    Ingested points are kept in ``points`` as ``(t, x, y, z)`` with rebased t.
    """

    n: int = 0
    t_ref: Optional[float] = None
    s1: float = 0.0
    s2: float = 0.0
    s3: float = 0.0
    s4: float = 0.0
    sx: float = 0.0
    sxt: float = 0.0
    sy: float = 0.0
    syt: float = 0.0
    sz: float = 0.0
    szt: float = 0.0
    szt2: float = 0.0
    points: List[Tuple[float, float, float, float]] = field(default_factory=list)

    def copy(self) -> "RegressionAccumulators":
        return replace(self, points=list(self.points))


def ingest(acc: RegressionAccumulators, pt: RobotPoint) -> RegressionAccumulators:
    """Add one observation to ``acc`` in place and return it."""
    if not all(math.isfinite(v) for v in (pt.x, pt.y, pt.z, pt.stamp)):
        raise ValueError(f"non-finite observation {pt}")
    if acc.t_ref is None:
        acc.t_ref = pt.stamp
    t = pt.stamp - acc.t_ref
    t2 = t * t
    acc.n += 1
    acc.s1 += t
    acc.s2 += t2
    acc.s3 += t2 * t
    acc.s4 += t2 * t2
    acc.sx += pt.x
    acc.sxt += pt.x * t
    acc.sy += pt.y
    acc.syt += pt.y * t
    acc.sz += pt.z
    acc.szt += pt.z * t
    acc.szt2 += pt.z * t2
    acc.points.append((t, pt.x, pt.y, pt.z))
    return acc


@dataclass(frozen=True)
class TrajectoryFit:
    """Fitted model x=ax*t+bx, y=ay*t+by, z=az*t^2+bz*t+cz with t rebased to ``t_ref``."""

    ax: float
    bx: float
    ay: float
    by: float
    az: float
    bz: float
    cz: float
    lam: float = 1.0
    g: float = 9.81
    n_used: int = 0
    t_ref: float = 0.0

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def coefficients(self) -> np.ndarray:
        return np.array([self.ax, self.bx, self.ay, self.by, self.az, self.bz, self.cz])


def _spd_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        low = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise DegenerateDataError("normal matrix is not positive definite (repeated stamps?)") from None
    if np.linalg.cond(a) > _MAX_COND:
        raise DegenerateDataError("normal matrix is numerically singular (repeated stamps?)")
    y = np.linalg.solve(low, b)
    return np.linalg.solve(low.T, y)


def normal_matrices(acc: RegressionAccumulators, lam: float = 1.0, g: float = 9.81):
    """The 2x2 line system and the ridge-regularised 3x3 parabola system.

    Returns:
        ``(A2, rhs_x, rhs_y, A3, rhs_z)`` with unknown orders (b, a) and (c, b, a).
    """
    a2 = np.array([[acc.n, acc.s1], [acc.s1, acc.s2]], dtype=float)
    a3 = np.array(
        [
            [acc.n, acc.s1, acc.s2],
            [acc.s1, acc.s2, acc.s3],
            [acc.s2, acc.s3, acc.s4 + lam],
        ],
        dtype=float,
    )
    rhs_x = np.array([acc.sx, acc.sxt])
    rhs_y = np.array([acc.sy, acc.syt])
    rhs_z = np.array([acc.sz, acc.szt, acc.szt2 - lam * 0.5 * g])
    return a2, rhs_x, rhs_y, a3, rhs_z


def solve(acc: RegressionAccumulators, lam: float = 1.0, g: float = 9.81) -> TrajectoryFit:
    """Solve the normal equations held in ``acc``.

    Raises:
        InsufficientDataError: fewer than three observations.
        DegenerateDataError: the normal matrices are singular.
    """
    if acc.n < MIN_POINTS:
        raise InsufficientDataError(f"need at least {MIN_POINTS} observations, have {acc.n}")
    a2, rhs_x, rhs_y, a3, rhs_z = normal_matrices(acc, lam, g)
    bx, ax = _spd_solve(a2, rhs_x)
    by, ay = _spd_solve(a2, rhs_y)
    cz, bz, az = _spd_solve(a3, rhs_z)
    return TrajectoryFit(
        float(ax), float(bx), float(ay), float(by), float(az), float(bz), float(cz),
        lam=lam, g=g, n_used=acc.n, t_ref=float(acc.t_ref),
    )


def fit_points(points, lam: float = 1.0, g: float = 9.81) -> TrajectoryFit:
    """Convenience: ingest an iterable of RobotPoints and solve."""
    acc = RegressionAccumulators()
    for p in points:
        ingest(acc, p)
    return solve(acc, lam, g)


def predict_position(fit: TrajectoryFit, t: float) -> RobotPoint:
    """Position on the fitted trajectory at fit-relative time ``t``."""
    return RobotPoint(
        fit.ax * t + fit.bx,
        fit.ay * t + fit.by,
        (fit.az * t + fit.bz) * t + fit.cz,
        t,
    )


def predict_positions(fit: TrajectoryFit, t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return np.stack(
        [fit.ax * t + fit.bx, fit.ay * t + fit.by, (fit.az * t + fit.bz) * t + fit.cz], axis=-1
    )


def time_at_x(fit: TrajectoryFit, x_target: float, t_min: Optional[float] = None) -> float:
    """Fit-relative time at which the predicted x equals ``x_target``.

    Args:
        t_min: if given, crossings earlier than this time raise AlreadyPassedError.
    """
    if abs(fit.ax) < 1e-9:
        raise NoCrossingError("trajectory has no x velocity")
    t = (x_target - fit.bx) / fit.ax
    if t_min is not None and t < t_min:
        raise AlreadyPassedError(f"crossing at t={t:.4f} precedes t={t_min:.4f}")
    return t
