"""Ground-truth projectile model and the synthetic detection stream.

The detector is replaced by projecting the true trajectory through the
camera model and perturbing pixels and depth with Gaussian noise, so depth
error grows with range after back-projection as it would on a stereo camera.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, TextIO, Tuple, Union

import numpy as np

from .errors import BeforeReleaseError, InvalidInputError, OutOfViewError
from .frames import CameraIntrinsics, PixelDetection, RobotPoint, pixel_to_robot, robot_to_pixel

GRAVITY = 9.81
DEFAULT_FPS = 30.0
DEFAULT_DELTA_MIN = 0.05


@dataclass(frozen=True)
class ThrowSpec:
    p0: Tuple[float, float, float]
    v0: Tuple[float, float, float]
    g: float = GRAVITY
    t0: float = 0.0

    def __post_init__(self):
        if not self.g > 0:
            raise InvalidInputError(f"gravity must be positive, got {self.g}")
        object.__setattr__(self, "p0", tuple(float(v) for v in self.p0))
        object.__setattr__(self, "v0", tuple(float(v) for v in self.v0))

    @property
    def speed(self) -> float:
        return math.sqrt(sum(v * v for v in self.v0))


@dataclass(frozen=True)
class NoiseModel:
    sigma_px: float = 0.0
    sigma_depth: float = 0.0
    drop_prob: float = 0.0
    seed: Optional[int] = None

    def __post_init__(self):
        if self.sigma_px < 0 or self.sigma_depth < 0:
            raise InvalidInputError("noise standard deviations must be >= 0")
        if not 0.0 <= self.drop_prob <= 1.0:
            raise InvalidInputError(f"drop_prob must be in [0, 1], got {self.drop_prob}")


@dataclass
class ObservationStream:
    detections: List[PixelDetection] = field(default_factory=list)
    fps: float = DEFAULT_FPS

    def __post_init__(self):
        stamps = [d.stamp for d in self.detections]
        if any(b <= a for a, b in zip(stamps, stamps[1:])):
            raise InvalidInputError("observation stamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.detections)

    def __iter__(self):
        return iter(self.detections)

    def __getitem__(self, i):
        return self.detections[i]


def truth_position(throw: ThrowSpec, t: float) -> RobotPoint:
    """Drag-free ballistic position at absolute time ``t``."""
    tau = t - throw.t0
    if tau < 0:
        raise BeforeReleaseError(f"t={t} precedes release at t0={throw.t0}")
    x0, y0, z0 = throw.p0
    vx, vy, vz = throw.v0
    return RobotPoint(
        x0 + vx * tau,
        y0 + vy * tau,
        z0 + vz * tau - 0.5 * throw.g * tau * tau,
        t,
    )


def truth_positions(throw: ThrowSpec, t: np.ndarray) -> np.ndarray:
    """Vectorised :func:`truth_position`; returns an (n, 3) array. No release check."""
    tau = np.asarray(t, dtype=float) - throw.t0
    p0 = np.asarray(throw.p0)
    v0 = np.asarray(throw.v0)
    out = p0[None, :] + tau[:, None] * v0[None, :]
    out[:, 2] -= 0.5 * throw.g * tau * tau
    return out


def _visible(pt: RobotPoint, intr: CameraIntrinsics) -> Optional[PixelDetection]:
    try:
        det = robot_to_pixel(pt, intr)
    except OutOfViewError:
        return None
    if det.depth < intr.min_depth or not intr.in_image(det.xp, det.yp):
        return None
    return det


def generate_observations(
    throw: ThrowSpec,
    intr: CameraIntrinsics,
    noise: NoiseModel,
    fps: float = DEFAULT_FPS,
    pre_release_frames: int = 0,
    duration: float = 1.5,
    phase: float = 0.0,
) -> ObservationStream:
    """Sample noisy detections of a throw on a uniform frame grid.

    Args:
        throw: the true trajectory.
        intr: camera used to project truth into pixels.
        noise: pixel/depth noise, drop probability and RNG seed.
        fps: frame rate.
        pre_release_frames: stationary frames at ``p0`` before release
            (the object still held by the thrower).
        duration: flight time covered after release, seconds.
        phase: offset of the first in-flight frame after ``t0``, in ``[0, 1/fps)``.

    Returns:
        Stream of detections; frames that are dropped or out of view are omitted.
    """
    if not fps > 0:
        raise InvalidInputError(f"fps must be positive, got {fps}")
    period = 1.0 / fps
    n_flight = int(math.floor((duration - phase) * fps)) + 1
    ks = np.arange(-pre_release_frames, max(n_flight, 0))
    stamps = throw.t0 + phase + ks * period

    rng = np.random.default_rng(noise.seed)
    # fixed draw count per frame keeps streams paired across configurations
    gauss = rng.standard_normal((len(ks), 3))
    drops = rng.random(len(ks))

    dets = []
    for i, (k, stamp) in enumerate(zip(ks, stamps)):
        if k < 0:
            x, y, z = throw.p0
            pt = RobotPoint(x, y, z, float(stamp))
        else:
            pt = truth_position(throw, float(stamp))
        det = _visible(pt, intr)
        if det is None or drops[i] < noise.drop_prob:
            continue
        depth = float(det.depth + noise.sigma_depth * gauss[i, 2])
        if depth <= 0:
            continue
        dets.append(
            PixelDetection(
                xp=float(det.xp + noise.sigma_px * gauss[i, 0]),
                yp=float(det.yp + noise.sigma_px * gauss[i, 1]),
                depth=depth,
                stamp=float(stamp),
            )
        )
    return ObservationStream(dets, fps)


class ThrowStartDetector:
    """Incremental throw-start gate.

    Feed robot-frame points in stamp order; :meth:`update` returns True for the
    first point whose per-coordinate jump from its predecessor exceeds
    ``delta_min`` and for every point after it.
    """

    def __init__(self, delta_min: float = DEFAULT_DELTA_MIN):
        if not delta_min > 0:
            raise InvalidInputError(f"delta_min must be positive, got {delta_min}")
        self.delta_min = delta_min
        self.started = False
        self._prev: Optional[RobotPoint] = None

    def update(self, pt: RobotPoint) -> bool:
        if self.started:
            return True
        prev, self._prev = self._prev, pt
        if prev is None:
            return False
        if max(abs(pt.x - prev.x), abs(pt.y - prev.y), abs(pt.z - prev.z)) > self.delta_min:
            self.started = True
        return self.started


def throw_start_filter(
    stream: ObservationStream, intr: CameraIntrinsics, delta_min: float = DEFAULT_DELTA_MIN
) -> ObservationStream:
    """Drop the detections taken while the object was still in the thrower's hand."""
    gate = ThrowStartDetector(delta_min)
    if len(stream) < 2:
        return ObservationStream([], stream.fps)
    for i, det in enumerate(stream):
        if gate.update(pixel_to_robot(det, intr)):
            return ObservationStream(list(stream.detections[i:]), stream.fps)
    return ObservationStream([], stream.fps)


def write_stream(stream: ObservationStream, dest: Union[str, Path, TextIO]) -> None:
    """Write one ``stamp xp yp depth`` record per line."""
    lines = [f"# fps {float(stream.fps)!r}"]
    lines += [f"{float(d.stamp)!r} {float(d.xp)!r} {float(d.yp)!r} {float(d.depth)!r}" for d in stream]
    text = "\n".join(lines) + "\n"
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(text)
    else:
        dest.write(text)


def read_stream(src: Union[str, Path, TextIO], fps: float = DEFAULT_FPS) -> ObservationStream:
    """Parse the format written by :func:`write_stream`; ``#`` starts a comment."""
    text = Path(src).read_text() if isinstance(src, (str, Path)) else src.read()
    dets = []
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.strip()
        if body.startswith("# fps"):
            fps = float(body.split()[2])
            continue
        body = body.split("#", 1)[0].strip()
        if not body:
            continue
        fields = body.split()
        if len(fields) != 4:
            raise InvalidInputError(f"line {lineno}: expected 4 fields (stamp xp yp depth), got {len(fields)}")
        try:
            stamp, xp, yp, depth = (float(f) for f in fields)
        except ValueError as exc:
            raise InvalidInputError(f"line {lineno}: {exc}") from None
        dets.append(PixelDetection(xp, yp, depth, stamp))
    return ObservationStream(dets, fps)
