"""Closed-loop catching episodes.

A 1 kHz loop integrates two decoupled front legs under the Cartesian PD law
while the projectile follows its analytic trajectory.  On perception ticks
the synthetic detections are gated, ingested, re-fitted and turned into a
catch plan.  Contact is not simulated: success is a geometric test taken at
the moment the object is closest to the feet after the legs start closing.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .ballistics import NoiseModel, ThrowSpec, ThrowStartDetector, generate_observations
from .errors import DivergedEpisodeError, InsufficientDataError, DegenerateDataError, InvalidInputError, PlanInfeasibleError
from .frames import CameraIntrinsics, pixel_to_robot
from .gmm import GaussianMixture, select_k, synthetic_demos
from .leg_control import (
    CLOSED,
    NOMINAL_Q,
    OPEN,
    CartesianGains,
    LegGeometry,
    WorkspaceBox,
    closing_trigger,
    foot_position_robot,
    foot_targets_from_plan,
    inscribed_box,
    shrink_box,
    workspace_box,
)
from .predictor import RegressionAccumulators, ingest, solve
from .selector import GMM, METHODS, CatchPlan, SelectorContext, refresh

logger = logging.getLogger(__name__)

DEFAULT_DEMO_STD = (0.10, 0.07, 0.05)


def default_camera() -> CameraIntrinsics:
    # 1280x720 stream of a D455-class camera; values are synthetic defaults
    return CameraIntrinsics(fx=640.0, fy=640.0, ppx=640.0, ppy=360.0, tilt=0.1,
                            width=1280, height=720, min_depth=0.3)


def default_mixture(
    mean, catch_box: WorkspaceBox, std=DEFAULT_DEMO_STD, n: int = 100, seed: int = 0, k_max: int = 4
) -> GaussianMixture:
    """BIC-selected mixture over synthetic demonstrations restricted to the catch volume."""
    demos = synthetic_demos(
        mean, std, n=n, seed=seed, accept=lambda p: np.all((p >= catch_box.lo) & (p <= catch_box.hi), axis=1)
    )
    return select_k(demos, range(1, k_max + 1), seed=seed)


@dataclass
class SimConfig:
    """Everything one episode needs.

    Physical defaults that come from the catching literature: 1 kHz control,
    30 fps perception, gains 400/8/1, t_thresh 0.15 s, y_opened 0.15 m,
    y_closed 0.01 m, x_offset 0.25 m, lambda 1.  The rest (leg inertia,
    capture radius, camera, noise) are synthetic and reported with results.
    """

    control_dt: float = 1e-3
    perception_fps: float = 30.0
    joint_inertia: Tuple[float, float, float] = (0.03, 0.03, 0.03)
    joint_damping: float = 0.02
    capture_radius: float = 0.07
    object_halfwidth: float = 0.05
    max_episode_time: float = 2.0
    settle_time: float = 0.15
    latency_ticks: int = 1
    method: str = GMM

    gains: CartesianGains = field(default_factory=CartesianGains)
    t_thresh: float = 0.15
    y_opened: float = 0.15
    y_closed: float = 0.01

    lam: float = 1.0
    g: float = 9.81
    delta_min: float = 0.05
    pre_release_frames: int = 5

    camera: CameraIntrinsics = field(default_factory=default_camera)
    noise: NoiseModel = field(default_factory=lambda: NoiseModel(1.0, 0.01, 0.0))

    leg: LegGeometry = field(default_factory=LegGeometry)
    nominal_q: Tuple[float, float, float] = NOMINAL_Q
    workspace_mode: str = "inscribed"
    workspace_shrink: float = 0.0

    x_offset: float = 0.25
    t_horizon: float = 3.0
    mixture: Optional[GaussianMixture] = None
    demo_mean: Optional[Tuple[float, float, float]] = None
    demo_std: Tuple[float, float, float] = DEFAULT_DEMO_STD
    n_demos: int = 100
    demo_seed: int = 0
    k_max: int = 4
    qd_limit: float = 1e3

    def __post_init__(self):
        if not self.control_dt > 0:
            raise InvalidInputError("control_dt must be positive")
        if not self.perception_fps > 0:
            raise InvalidInputError("perception_fps must be positive")
        if self.method not in METHODS:
            raise InvalidInputError(f"unknown method {self.method!r}")
        if self.leg.side != 1:
            raise InvalidInputError("configure the +y leg; the other one is mirrored from it")
        ticks = max(1, int(round(1.0 / (self.perception_fps * self.control_dt))))
        period = ticks * self.control_dt
        if abs(period * self.perception_fps - 1.0) > 1e-12:
            logger.debug("perception period rounded to %d control ticks (%.6f s)", ticks, period)
        self.perception_ticks = ticks
        self.legs = (self.leg, self.leg.mirrored())
        feet = [foot_position_robot(g, self.nominal_q) for g in self.legs]
        self.nominal_feet = tuple(feet)
        self.x_c = tuple(float(v) for v in 0.5 * (feet[0] + feet[1]))
        if self.workspace_mode == "inscribed":
            boxes = [inscribed_box(g, tuple(float(v) for v in f)) for g, f in zip(self.legs, feet)]
        elif self.workspace_mode == "bounding":
            boxes = [workspace_box(g, 0.0) for g in self.legs]
        else:
            raise InvalidInputError(f"unknown workspace mode {self.workspace_mode!r}")
        self.boxes = tuple(shrink_box(b, self.workspace_shrink) for b in boxes)
        # both feet must reach the object for the legs to close around it
        self.catch_box = WorkspaceBox(
            np.maximum(self.boxes[0].lo, self.boxes[1].lo), np.minimum(self.boxes[0].hi, self.boxes[1].hi)
        )
        if self.mixture is None:
            mean = self.x_c if self.demo_mean is None else self.demo_mean
            self.mixture = default_mixture(
                mean, self.catch_box, self.demo_std, self.n_demos, self.demo_seed, self.k_max
            )
        self.context = SelectorContext(self.x_offset, self.x_c, self.mixture, self.t_horizon)

    @property
    def perception_period(self) -> float:
        return self.perception_ticks * self.control_dt

    def with_method(self, method: str) -> "SimConfig":
        """Copy sharing the fitted mixture, with a different selector."""
        out = object.__new__(SimConfig)
        out.__dict__.update(self.__dict__)
        if method not in METHODS:
            raise InvalidInputError(f"unknown method {method!r}")
        out.method = method
        return out


@dataclass
class EpisodeTrace:
    """Per-tick samples; leg arrays have shape (n, 2, 3) with the +y leg first."""

    t: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    tau: np.ndarray
    feet: np.ndarray
    obj: np.ndarray
    closed: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    def subsample(self, k: int) -> "EpisodeTrace":
        return EpisodeTrace(*(getattr(self, f)[::k] for f in self.__dataclass_fields__))

    def to_records(self) -> List[dict]:
        return [
            {
                "t": float(self.t[i]),
                "q": self.q[i].tolist(),
                "qd": self.qd[i].tolist(),
                "tau": self.tau[i].tolist(),
                "feet": self.feet[i].tolist(),
                "object": self.obj[i].tolist(),
                "closed": bool(self.closed[i]),
            }
            for i in range(len(self.t))
        ]


@dataclass
class EpisodeResult:
    caught: bool
    catch_error: float
    mean_power: float
    plan_history: List[CatchPlan]
    trace: EpisodeTrace
    method: str = GMM
    t_trigger: Optional[float] = None
    t_eval: Optional[float] = None
    lateral_gap: Tuple[float, float] = (math.inf, math.inf)
    object_reachable: bool = False

    @property
    def final_plan(self) -> Optional[CatchPlan]:
        return self.plan_history[-1] if self.plan_history else None


def mean_total_power(trace: EpisodeTrace) -> float:
    """Mean over ticks of sum_j |tau_j * qd_j| across both legs, watts."""
    if len(trace) == 0:
        raise InvalidInputError("empty trace")
    return float(np.mean(np.sum(np.abs(trace.tau * trace.qd), axis=(1, 2))))


class EpisodeState:
    """Mutable state of one episode, advanced by :func:`step`."""

    def __init__(self, throw: ThrowSpec, config: SimConfig, seed: Optional[int], phase: float = 0.0):
        self.throw = throw
        self.tick = 0
        self.q = np.array([config.nominal_q, config.nominal_q], dtype=float)
        self.qd = np.zeros((2, 3))
        self.tau = np.zeros((2, 3))
        self.feet = np.array(config.nominal_feet)
        self.targets = [g.to_leg(p) for g, p in zip(config.legs, config.nominal_feet)]
        self.phase = OPEN
        self.plan: Optional[CatchPlan] = None
        self.plan_history: List[CatchPlan] = []
        self.acc = RegressionAccumulators()
        self.gate = ThrowStartDetector(config.delta_min)
        self.t_trigger: Optional[float] = None

        noise = NoiseModel(config.noise.sigma_px, config.noise.sigma_depth, config.noise.drop_prob, seed)
        stream = generate_observations(
            throw, config.camera, noise, fps=1.0 / config.perception_period,
            pre_release_frames=config.pre_release_frames,
            duration=config.max_episode_time - throw.t0, phase=phase,
        )
        dt = config.control_dt
        self.pending = [
            (max(0, int(math.ceil(d.stamp / dt - 1e-9))) + config.latency_ticks, d) for d in stream
        ]
        self._next = 0

    def object_position(self, t: float) -> np.ndarray:
        th = self.throw
        tau = t - th.t0
        if tau <= 0:
            return np.array(th.p0)
        return np.array(
            [th.p0[0] + th.v0[0] * tau, th.p0[1] + th.v0[1] * tau,
             th.p0[2] + th.v0[2] * tau - 0.5 * th.g * tau * tau]
        )


def _perceive(state: EpisodeState, config: SimConfig, t: float) -> None:
    while state._next < len(state.pending) and state.pending[state._next][0] <= state.tick:
        det = state.pending[state._next][1]
        state._next += 1
        pt = pixel_to_robot(det, config.camera)
        if not state.gate.update(pt):
            continue
        ingest(state.acc, pt)
        try:
            fit = solve(state.acc, config.lam, config.g)
            plan = refresh(config.method, fit, config.context, t - fit.t_ref)
        except (InsufficientDataError, DegenerateDataError, PlanInfeasibleError):
            continue
        state.plan = plan
        state.plan_history.append(plan)


def _update_targets(state: EpisodeState, config: SimConfig, t: float) -> None:
    if state.plan is None:
        return
    phase = closing_trigger(state.plan.t_catch_abs - t, config.t_thresh, state.phase)
    if phase == CLOSED and state.phase == OPEN:
        state.t_trigger = t
    state.phase = phase
    tl, tr = foot_targets_from_plan(
        state.plan.x_catch, phase, config.legs, config.boxes, config.y_opened, config.y_closed
    )
    state.targets = [tl.p_d, tr.p_d]


def _leg_torque(geom: LegGeometry, q, qd, p_d, gains: CartesianGains) -> Tuple[np.ndarray, np.ndarray]:
    # inlined forward_kinematics/jacobian: this runs twice per control tick
    s1, c1 = math.sin(q[0]), math.cos(q[0])
    s2, c2 = math.sin(q[1]), math.cos(q[1])
    s23, c23 = math.sin(q[1] + q[2]), math.cos(q[1] + q[2])
    l1, l2 = geom.l_thigh, geom.l_calf
    py = geom.side * geom.l_hip
    px = -l1 * s2 - l2 * s23
    pz = -l1 * c2 - l2 * c23
    p = np.array([px, c1 * py - s1 * pz, s1 * py + c1 * pz])
    dpz2, dpz3 = l1 * s2 + l2 * s23, l2 * s23
    J = np.array(
        [
            [0.0, pz, -l2 * c23],
            [-p[2], -s1 * dpz2, -s1 * dpz3],
            [p[1], c1 * dpz2, c1 * dpz3],
        ]
    )
    v = J @ qd
    tau = J.T @ (gains.Kp @ (p_d - p) - gains.Kd @ v) - gains.Kd_joint @ qd
    return tau, p


def step(state: EpisodeState, config: SimConfig, t: float) -> EpisodeState:
    """Advance one control tick starting at time ``t``.

    Raises:
        DivergedEpisodeError: a joint velocity exceeded ``config.qd_limit``.
    """
    _perceive(state, config, t)
    _update_targets(state, config, t)
    dt = config.control_dt
    inertia = np.asarray(config.joint_inertia)
    for i, geom in enumerate(config.legs):
        tau, p = _leg_torque(geom, state.q[i], state.qd[i], state.targets[i], config.gains)
        state.tau[i] = tau
        state.feet[i] = geom.to_robot(p)
        # semi-implicit Euler on decoupled joints
        qd = state.qd[i] + dt * (tau - config.joint_damping * state.qd[i]) / inertia
        q = state.q[i] + dt * qd
        lo, hi = np.asarray(geom.q_min), np.asarray(geom.q_max)
        hit = (q < lo) | (q > hi)
        if hit.any():
            q = np.clip(q, lo, hi)
            qd = np.where(hit, 0.0, qd)
        state.q[i], state.qd[i] = q, qd
    if np.abs(state.qd).max() > config.qd_limit:
        raise DivergedEpisodeError(f"joint velocity exceeded {config.qd_limit} rad/s at t={t:.3f}")
    state.tick += 1
    return state


def run_episode(
    throw: ThrowSpec, config: SimConfig, seed: Optional[int] = 0, phase: float = 0.0
) -> EpisodeResult:
    """Simulate one throw until the legs have closed and settled.

    Args:
        throw: true trajectory of the object (absolute clock starts at 0).
        config: simulation parameters; ``config.method`` picks the selector.
        seed: seed of the observation noise.
        phase: sub-frame offset of the first in-flight camera frame.

    Returns:
        The episode outcome. Same inputs always give the same result.
    """
    state = EpisodeState(throw, config, seed, phase)
    dt = config.control_dt
    n_max = int(math.floor(config.max_episode_time / dt + 1e-9))
    T = np.empty(n_max)
    Q, QD, TAU, FEET = (np.empty((n_max, 2, 3)) for _ in range(4))
    OBJ = np.empty((n_max, 3))
    CL = np.zeros(n_max, dtype=bool)

    best = (math.inf, None)
    t_end = math.inf
    n = 0
    while n < n_max:
        t = n * dt
        if t >= t_end:
            break
        step(state, config, t)
        obj = state.object_position(t + dt)
        T[n], Q[n], QD[n], TAU[n], FEET[n], OBJ[n] = t + dt, state.q, state.qd, state.tau, state.feet, obj
        CL[n] = state.phase == CLOSED
        if CL[n]:
            if state.t_trigger is not None and t_end == math.inf:
                t_end = state.t_trigger + config.t_thresh + config.settle_time
            mid = 0.5 * (state.feet[0] + state.feet[1])
            d = float(np.linalg.norm(obj - mid))
            if d < best[0]:
                best = (d, n)
        n += 1

    trace = EpisodeTrace(T[:n], Q[:n], QD[:n], TAU[:n], FEET[:n], OBJ[:n], CL[:n])
    if best[1] is None:
        # never closed: report the closest approach over the whole episode
        dists = np.linalg.norm(trace.obj - trace.feet.mean(axis=1), axis=1)
        k = int(np.argmin(dists))
        best = (float(dists[k]), k)
        closed = False
    else:
        closed = True
    err, k = best
    obj = trace.obj[k]
    gap = tuple(float(abs(trace.feet[k, i, 1] - obj[1])) for i in range(2))
    reachable = config.catch_box.contains(obj)
    lateral_ok = all(g <= 2 * config.y_closed + config.object_halfwidth for g in gap)
    caught = bool(closed and err <= config.capture_radius and lateral_ok and reachable)
    return EpisodeResult(
        caught=caught,
        catch_error=float(err),
        mean_power=mean_total_power(trace),
        plan_history=state.plan_history,
        trace=trace,
        method=config.method,
        t_trigger=state.t_trigger,
        t_eval=float(trace.t[k]),
        lateral_gap=gap,
        object_reachable=reachable,
    )
