"""Throw distributions and the built-in scenario catalog."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from ..ballistics import GRAVITY, NoiseModel, ThrowSpec
from ..errors import InvalidInputError
from ..selector import METHODS


@dataclass(frozen=True)
class ThrowSampler:
    """Distribution over throws.

    The release point is ``distance`` in front of the camera with uniform
    lateral and height spreads.  Each throw aims at ``aim`` plus Gaussian
    aim noise (or, when ``aim_z_range`` is set, at a height drawn uniformly
    from that range).  Speed is uniform over ``speed_range``, raised to the
    minimum speed that still reaches the aim point; the flatter of the two
    ballistic solutions is used.
    """

    distance: float = 2.0
    lateral_range: Tuple[float, float] = (-0.15, 0.15)
    height_range: Tuple[float, float] = (0.3, 0.6)
    aim: Optional[Tuple[float, float, float]] = None
    aim_std: Tuple[float, float, float] = (0.03, 0.05, 0.05)
    aim_z_range: Optional[Tuple[float, float]] = None
    speed_range: Tuple[float, float] = (2.5, 4.5)
    release_time: float = 0.25
    g: float = GRAVITY

    def sample(self, rng: np.random.Generator, aim_default) -> ThrowSpec:
        aim = np.asarray(self.aim if self.aim is not None else aim_default, dtype=float)
        p0 = np.array(
            [self.distance, rng.uniform(*self.lateral_range), rng.uniform(*self.height_range)]
        )
        target = aim + rng.standard_normal(3) * np.asarray(self.aim_std)
        if self.aim_z_range is not None:
            target[2] = rng.uniform(*self.aim_z_range)
        speed = rng.uniform(*self.speed_range)
        return ballistic_throw(p0, target, speed, self.g, self.release_time)


def ballistic_throw(p0, target, speed: float, g: float = GRAVITY, t0: float = 0.0) -> ThrowSpec:
    """Throw from ``p0`` passing through ``target`` with launch speed ``speed``.

    If ``speed`` cannot reach the target the minimum feasible speed is used.
    """
    p0 = np.asarray(p0, dtype=float)
    d = np.asarray(target, dtype=float) - p0
    dist = float(np.linalg.norm(d))
    if dist == 0.0:
        raise InvalidInputError("target coincides with release point")
    s2_min = g * (dist + d[2])
    s2 = max(speed * speed, s2_min)
    b = s2 - d[2] * g
    disc = max(b * b - g * g * dist * dist, 0.0)
    u = (b - math.sqrt(disc)) / (0.5 * g * g)
    T = math.sqrt(u)
    v0 = d / T
    v0[2] += 0.5 * g * T
    return ThrowSpec(tuple(p0), tuple(v0), g, t0)


@dataclass(frozen=True)
class Scenario:
    name: str
    sampler: ThrowSampler = field(default_factory=ThrowSampler)
    n_throws: int = 50
    methods: Tuple[str, ...] = METHODS
    noise: Optional[NoiseModel] = None
    seed: int = 0
    capture_radius: Optional[float] = None

    def __post_init__(self):
        if self.n_throws < 1:
            raise InvalidInputError("n_throws must be >= 1")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise InvalidInputError(f"unknown methods {bad}")
        object.__setattr__(self, "methods", tuple(self.methods))


def catalog(shoulder_z: float = -0.05) -> Dict[str, Scenario]:
    """Built-in scenarios.

    ``centered-50``: 50 throws from 2 m aimed at the nominal foot centre.
    ``low-10``: 10 throws aimed 0.15-0.25 m below shoulder height.
    ``smoke``: one noiseless, perfectly aimed throw with a generous capture radius.
    """
    return {
        "centered-50": Scenario("centered-50", ThrowSampler(), n_throws=50),
        "low-10": Scenario(
            "low-10",
            ThrowSampler(aim_z_range=(shoulder_z - 0.25, shoulder_z - 0.15)),
            n_throws=10,
        ),
        "smoke": Scenario(
            "smoke",
            ThrowSampler(lateral_range=(0.0, 0.0), height_range=(0.45, 0.45), aim_std=(0.0, 0.0, 0.0),
                         speed_range=(3.8, 3.8)),
            n_throws=1,
            noise=NoiseModel(0.0, 0.0, 0.0),
            capture_radius=0.15,
        ),
    }
