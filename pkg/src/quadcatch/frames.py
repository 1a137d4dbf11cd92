"""Pinhole camera model with a pitched optical axis.

Converts bounding-box centres plus depth into robot-frame points and back.
The robot frame has x forward, z up; y follows the image column direction.
Depth is range along the optical axis, not Euclidean distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .errors import InvalidInputError, OutOfViewError


@dataclass(frozen=True)
class CameraIntrinsics:
    """Camera intrinsics plus mounting pose.

    Args:
        fx, fy: focal lengths in pixels.
        ppx, ppy: principal point (column, row) in pixels.
        tilt: angle of the optical axis below the horizontal, radians.
        width, height: image size in pixels; ``None`` means unbounded.
        min_depth: closest measurable depth, meters.
        offset: camera position in the robot frame, added after back-projection.
    """

    fx: float
    fy: float
    ppx: float
    ppy: float
    tilt: float
    width: Optional[int] = None
    height: Optional[int] = None
    min_depth: float = 0.0
    offset: Tuple[float, float, float] = field(default=(0.0, 0.0, 0.0))

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidInputError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not abs(self.tilt) < math.pi / 2:
            raise InvalidInputError(f"|tilt| must be < pi/2, got {self.tilt}")
        if self.min_depth < 0:
            raise InvalidInputError("min_depth must be >= 0")
        object.__setattr__(self, "offset", tuple(float(v) for v in self.offset))

    def in_image(self, xp: float, yp: float) -> bool:
        if self.width is not None and not 0.0 <= xp < self.width:
            return False
        if self.height is not None and not 0.0 <= yp < self.height:
            return False
        return True


@dataclass(frozen=True)
class PixelDetection:
    xp: float
    yp: float
    depth: float
    stamp: float
    confidence: float = 1.0

    def __post_init__(self):
        if not self.depth > 0:
            raise InvalidInputError(f"depth must be positive, got {self.depth}")
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidInputError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class RobotPoint:
    x: float
    y: float
    z: float
    stamp: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


def _check_finite(*values: float) -> None:
    if not all(math.isfinite(v) for v in values):
        raise InvalidInputError(f"non-finite input: {values}")


def pixel_to_robot(det: PixelDetection, intr: CameraIntrinsics) -> RobotPoint:
    """Back-project a detection into the robot frame.

    Args:
        det: bounding-box centre in pixels with its depth along the optical axis.
        intr: camera intrinsics and tilt.

    Returns:
        The robot-frame point, carrying the detection's timestamp.
    """
    _check_finite(det.xp, det.yp, det.depth, det.stamp)
    if det.depth <= 0:
        raise InvalidInputError(f"depth must be positive, got {det.depth}")
    d = det.depth
    row = (det.yp - intr.ppy) / intr.fy
    col = (det.xp - intr.ppx) / intr.fx
    s, c = math.sin(intr.tilt), math.cos(intr.tilt)
    x = d * c - d * row * s
    y = d * col
    z = -(d * s + d * row * c)
    ox, oy, oz = intr.offset
    return RobotPoint(x + ox, y + oy, z + oz, det.stamp)


def robot_to_pixel(pt: RobotPoint, intr: CameraIntrinsics, confidence: float = 1.0) -> PixelDetection:
    """Exact inverse of :func:`pixel_to_robot`.

    The x and z equations form a rotation in (depth, depth * row_offset), so
    both unknowns come out of a single 2x2 rotation; the column follows from y.

    Raises:
        OutOfViewError: the point is on or behind the image plane.
    """
    _check_finite(pt.x, pt.y, pt.z, pt.stamp)
    ox, oy, oz = intr.offset
    x, y, z = pt.x - ox, pt.y - oy, pt.z - oz
    s, c = math.sin(intr.tilt), math.cos(intr.tilt)
    depth = x * c - z * s
    if depth <= 0:
        raise OutOfViewError(f"point ({pt.x}, {pt.y}, {pt.z}) is behind the camera")
    u = -x * s - z * c
    return PixelDetection(
        xp=intr.ppx + intr.fx * y / depth,
        yp=intr.ppy + intr.fy * u / depth,
        depth=depth,
        stamp=pt.stamp,
        confidence=confidence,
    )
