"""Catching-position selection on a fitted trajectory.

Three strategies map a :class:`TrajectoryFit` to a :class:`CatchPlan`:

* ``plane``   -- cross the vertical plane x = x_offset,
* ``mindist`` -- closest point to the nominal foot centre,
* ``gmm``     -- most likely point under the reachable-space mixture.

Along the parabola the residual to a fixed point is quadratic in t, so any
quadratic form of it is a quartic whose stationary points solve a cubic.
Both ``mindist`` and the single-component ``gmm`` case use that closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import AlreadyPassedError, InvalidInputError, NoCrossingError, PlanInfeasibleError
from .gmm import GaussianMixture, log_density
from .predictor import TrajectoryFit, predict_position, predict_positions, time_at_x

PLANE = "plane"
MINDIST = "mindist"
GMM = "gmm"
METHODS = (PLANE, MINDIST, GMM)

SCAN_STEP = 1e-3


@dataclass(frozen=True)
class CatchPlan:
    x_catch: Tuple[float, float, float]
    t_catch: float
    t_remain: float
    method: str
    t_ref: float = 0.0

    @property
    def t_catch_abs(self) -> float:
        """Catch time on the absolute clock."""
        return self.t_ref + self.t_catch

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "t_catch": self.t_catch,
            "t_remain": self.t_remain,
            "t_ref": self.t_ref,
            "x_catch": list(self.x_catch),
        }


@dataclass(frozen=True)
class SelectorContext:
    x_offset: float = 0.25
    x_c: Tuple[float, float, float] = (0.25, 0.0, 0.0)
    mixture: Optional[GaussianMixture] = None
    t_horizon: float = 3.0

    def __post_init__(self):
        if not self.t_horizon > 0:
            raise InvalidInputError("t_horizon must be positive")
        object.__setattr__(self, "x_c", tuple(float(v) for v in self.x_c))


def real_cubic_roots(a: float, b: float, c: float, d: float) -> List[float]:
    """Real roots of a*t^3 + b*t^2 + c*t + d, ascending.

    Falls back to the quadratic/linear case when the leading coefficients
    vanish relative to the others.  Each root gets up to two Newton polishing steps.
    """
    scale = max(abs(a), abs(b), abs(c), abs(d))
    if scale == 0.0:
        return []
    if abs(a) <= 1e-13 * scale:
        return _real_quadratic_roots(b, c, d)
    B, C, D = b / a, c / a, d / a
    shift = B / 3.0
    p = C - B * B / 3.0
    q = 2.0 * B ** 3 / 27.0 - B * C / 3.0 + D
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    if abs(p) <= 1e-14 * (1.0 + abs(C) + B * B):
        roots = [math.copysign(abs(q) ** (1.0 / 3.0), -q)]
    elif disc > 0:
        sq = math.sqrt(disc)
        u = -q / 2.0 + sq
        v = -q / 2.0 - sq
        roots = [math.copysign(abs(u) ** (1.0 / 3.0), u) + math.copysign(abs(v) ** (1.0 / 3.0), v)]
    else:
        # three real roots, trigonometric form
        r = 2.0 * math.sqrt(-p / 3.0)
        arg = 3.0 * q / (p * r)
        phi = math.acos(max(-1.0, min(1.0, arg)))
        roots = [r * math.cos((phi - 2.0 * math.pi * k) / 3.0) for k in range(3)]
    out = []
    for s in roots:
        t = s - shift
        f = ((a * t + b) * t + c) * t + d
        for _ in range(2):
            df = (3.0 * a * t + 2.0 * b) * t + c
            if df == 0.0:
                break
            t_new = t - f / df
            f_new = ((a * t_new + b) * t_new + c) * t_new + d
            # keep only steps that improve the residual
            if not abs(f_new) < abs(f):
                break
            t, f = t_new, f_new
        out.append(t)
    return sorted(out)


def _real_quadratic_roots(a: float, b: float, c: float) -> List[float]:
    scale = max(abs(a), abs(b), abs(c))
    if abs(a) <= 1e-13 * scale:
        return [] if b == 0.0 else [-c / b]
    disc = b * b - 4.0 * a * c
    if disc < 0:
        return []
    sq = math.sqrt(disc)
    # numerically stable pair
    qq = -0.5 * (b + math.copysign(sq, b))
    roots = [qq / a] if qq == 0.0 else [qq / a, c / qq]
    return sorted(roots)


def quadratic_form_argmin(
    fit: TrajectoryFit, center, metric: np.ndarray, t_lo: float, t_hi: float
) -> float:
    """Minimise (p(t) - center)^T metric (p(t) - center) over [t_lo, t_hi].

    ``metric`` must be symmetric positive semi-definite.  Candidates are the
    interval endpoints and the real stationary points inside the interval;
    ties resolve to the earliest time.
    """
    P = np.asarray(metric, dtype=float)
    A = np.array([0.0, 0.0, fit.az])
    Bv = np.array([fit.ax, fit.ay, fit.bz])
    Cv = np.array([fit.bx, fit.by, fit.cz]) - np.asarray(center, dtype=float)
    PA, PB, PC = P @ A, P @ Bv, P @ Cv
    aa, ab, ac, bb, bc, cc = A @ PA, A @ PB, A @ PC, Bv @ PB, Bv @ PC, Cv @ PC

    def cost(t: float) -> float:
        # expanded quartic, evaluated in Horner form
        return (((aa * t + 2 * ab) * t + (bb + 2 * ac)) * t + 2 * bc) * t + cc

    cands = [t_lo, t_hi]
    cands += [t for t in real_cubic_roots(2 * aa, 3 * ab, 2 * ac + bb, bc) if t_lo < t < t_hi]
    cands.sort()
    best_t, best_f = cands[0], cost(cands[0])
    for t in cands[1:]:
        f = cost(t)
        if f < best_f:
            best_t, best_f = t, f
    return best_t


def _make_plan(fit: TrajectoryFit, t_catch: float, t_now: float, method: str) -> CatchPlan:
    p = predict_position(fit, t_catch)
    return CatchPlan((p.x, p.y, p.z), t_catch, t_catch - t_now, method, fit.t_ref)


def plane_intersection(fit: TrajectoryFit, ctx: SelectorContext, t_now: float) -> CatchPlan:
    """Catch where the prediction crosses the vertical plane x = x_offset.

    Raises:
        PlanInfeasibleError: no crossing, or the crossing is already behind ``t_now``.
    """
    try:
        t_catch = time_at_x(fit, ctx.x_offset, t_min=t_now)
    except (NoCrossingError, AlreadyPassedError) as exc:
        raise PlanInfeasibleError(str(exc)) from exc
    plan = _make_plan(fit, t_catch, t_now, PLANE)
    # pin x exactly; the round trip through the line can be off by an ulp
    return CatchPlan((ctx.x_offset,) + plan.x_catch[1:], plan.t_catch, plan.t_remain, PLANE, fit.t_ref)


def min_distance_to_center(fit: TrajectoryFit, ctx: SelectorContext, t_now: float) -> CatchPlan:
    t = quadratic_form_argmin(fit, ctx.x_c, np.eye(3), t_now, t_now + ctx.t_horizon)
    return _make_plan(fit, t, t_now, MINDIST)


def _scan_argmax(fit: TrajectoryFit, mix: GaussianMixture, t_lo: float, t_hi: float) -> float:
    n = max(2, int(math.ceil((t_hi - t_lo) / SCAN_STEP)) + 1)
    ts = np.linspace(t_lo, t_hi, n)
    dens = log_density(mix, predict_positions(fit, ts))
    i = int(np.argmax(dens))
    lo, hi = ts[max(i - 1, 0)], ts[min(i + 1, n - 1)]
    res = minimize_scalar(
        lambda t: -float(log_density(mix, np.array(predict_position(fit, t).as_array()))),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-9},
    )
    if res.success and -res.fun > dens[i]:
        return float(res.x)
    return float(ts[i])


def gmm_max_likelihood(fit: TrajectoryFit, ctx: SelectorContext, t_now: float) -> CatchPlan:
    """Catch at the most likely point of the mixture along the future trajectory."""
    mix = ctx.mixture
    if mix is None:
        raise InvalidInputError("the gmm selector needs a mixture in its context")
    t_lo, t_hi = t_now, t_now + ctx.t_horizon
    if mix.K == 1:
        comp = mix.components[0]
        t = quadratic_form_argmin(fit, comp.mean, comp.precision, t_lo, t_hi)
    else:
        t = _scan_argmax(fit, mix, t_lo, t_hi)
    return _make_plan(fit, t, t_now, GMM)


_DISPATCH = {
    PLANE: plane_intersection,
    MINDIST: min_distance_to_center,
    GMM: gmm_max_likelihood,
}


def refresh(method: str, fit: TrajectoryFit, ctx: SelectorContext, t_now: float) -> CatchPlan:
    """Recompute the plan with the configured method for the latest fit."""
    try:
        fn = _DISPATCH[method]
    except KeyError:
        raise InvalidInputError(f"unknown method {method!r}; expected one of {METHODS}") from None
    return fn(fit, ctx, t_now)
