"""Paired Monte-Carlo batches over the catching methods."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..ballistics import ThrowSpec
from ..errors import DivergedEpisodeError, InvalidInputError
from ..simulator import SimConfig, run_episode
from .scenarios import Scenario

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Trial:
    """One throw of a scenario, shared by every method."""

    index: int
    throw: ThrowSpec
    phase: float
    noise_seed: int


@dataclass
class EpisodeRow:
    index: int
    method: str
    caught: bool
    catch_error: float
    mean_power: float
    diverged: bool
    t_trigger: Optional[float]
    n_plans: int
    x_catch: Optional[Tuple[float, float, float]]
    plane_z: float
    below_floor: bool
    noise_seed: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["x_catch"] = None if self.x_catch is None else list(self.x_catch)
        return d


@dataclass
class MethodSummary:
    method: str
    caught: int
    n: int
    mean_power: float

    @property
    def rate(self) -> Fraction:
        return Fraction(self.caught, self.n)

    @property
    def percent(self) -> float:
        return 100.0 * self.caught / self.n


@dataclass
class Report:
    scenario: str
    seed: int
    rows: List[EpisodeRow]
    settings: Dict[str, object] = field(default_factory=dict)

    @property
    def methods(self) -> List[str]:
        seen: List[str] = []
        for r in self.rows:
            if r.method not in seen:
                seen.append(r.method)
        return seen

    def summary(self, method: str) -> MethodSummary:
        rows = [r for r in self.rows if r.method == method]
        if not rows:
            raise InvalidInputError(f"no rows for method {method!r}")
        powers = [r.mean_power for r in rows if r.caught]
        return MethodSummary(method, sum(r.caught for r in rows), len(rows), float(np.mean(powers)) if powers else math.nan)

    def summaries(self) -> List[MethodSummary]:
        return [self.summary(m) for m in self.methods]


def plane_crossing_height(throw: ThrowSpec, x_plane: float) -> float:
    """True height at which the throw crosses x = x_plane (nan if it never does)."""
    vx = throw.v0[0]
    if vx == 0.0:
        return math.nan
    tau = (x_plane - throw.p0[0]) / vx
    if tau < 0:
        return math.nan
    return throw.p0[2] + throw.v0[2] * tau - 0.5 * throw.g * tau * tau


def make_trials(scenario: Scenario, config: SimConfig) -> List[Trial]:
    """Draw the scenario's throws; trial ``i`` depends only on (seed, i)."""
    trials = []
    for i in range(scenario.n_throws):
        rng = np.random.default_rng(np.random.SeedSequence([scenario.seed, i]))
        throw = scenario.sampler.sample(rng, config.x_c)
        phase = float(rng.uniform(0.0, config.perception_period))
        noise_seed = int(rng.integers(2**31 - 1))
        trials.append(Trial(i, throw, phase, noise_seed))
    return trials


def scenario_config(scenario: Scenario, config: SimConfig) -> SimConfig:
    """Apply the scenario's noise and capture overrides without refitting the mixture."""
    cfg = config.with_method(config.method)
    if scenario.noise is not None:
        cfg.noise = scenario.noise
    if scenario.capture_radius is not None:
        cfg.capture_radius = scenario.capture_radius
    return cfg


def run_trial(trial: Trial, config: SimConfig, method: str) -> EpisodeRow:
    cfg = config.with_method(method)
    z_plane = plane_crossing_height(trial.throw, cfg.x_offset)
    below = bool(z_plane < cfg.catch_box.lo[2]) if not math.isnan(z_plane) else False
    try:
        res = run_episode(trial.throw, cfg, seed=trial.noise_seed, phase=trial.phase)
    except DivergedEpisodeError as exc:
        logger.warning("trial %d (%s) diverged: %s", trial.index, method, exc)
        return EpisodeRow(trial.index, method, False, math.nan, math.nan, True, None, 0, None, z_plane, below, trial.noise_seed)
    plan = res.final_plan
    return EpisodeRow(
        index=trial.index,
        method=method,
        caught=res.caught,
        catch_error=res.catch_error,
        mean_power=res.mean_power,
        diverged=False,
        t_trigger=res.t_trigger,
        n_plans=len(res.plan_history),
        x_catch=None if plan is None else tuple(float(v) for v in plan.x_catch),
        plane_z=z_plane,
        below_floor=below,
        noise_seed=trial.noise_seed,
    )


def _run_chunk(args):
    trials, config, methods = args
    return [run_trial(t, config, m) for t in trials for m in methods]


def run_scenario(
    scenario: Scenario,
    config: Optional[SimConfig] = None,
    methods: Optional[Sequence[str]] = None,
    workers: int = 1,
) -> Report:
    """Run every method on the same seeded throws.

    Rows are ordered by throw index, then by method in the order given, so
    the report does not depend on ``workers``.
    """
    config = config if config is not None else SimConfig()
    methods = tuple(methods) if methods is not None else scenario.methods
    cfg = scenario_config(scenario, config)
    trials = make_trials(scenario, cfg)
    if workers > 1 and len(trials) > 1:
        chunks = [trials[k::workers] for k in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, [(c, cfg, methods) for c in chunks if c]))
        rows = sorted((r for part in parts for r in part), key=lambda r: (r.index, methods.index(r.method)))
    else:
        rows = _run_chunk((trials, cfg, methods))
    settings = {
        "capture_radius": cfg.capture_radius,
        "object_halfwidth": cfg.object_halfwidth,
        "speed_range": list(scenario.sampler.speed_range),
        "sigma_px": cfg.noise.sigma_px,
        "sigma_depth": cfg.noise.sigma_depth,
        "drop_prob": cfg.noise.drop_prob,
        "n_throws": scenario.n_throws,
    }
    return Report(scenario.name, scenario.seed, rows, settings)


def combine(reports: Sequence[Report], name: Optional[str] = None) -> Report:
    """Concatenate reports (for example one per seed); throw indices are renumbered."""
    if not reports:
        raise InvalidInputError("nothing to combine")
    rows, offset = [], 0
    for rep in reports:
        n = max(r.index for r in rep.rows) + 1 if rep.rows else 0
        rows += [replace(r, index=r.index + offset) for r in rep.rows]
        offset += n
    settings = dict(reports[0].settings)
    settings["n_throws"] = offset
    settings["seeds"] = [rep.seed for rep in reports]
    return Report(name or reports[0].scenario, reports[0].seed, rows, settings)
