"""Synthetic presenter trajectories and their observation as input frames.

Curves are given in centimetres in the presenter's torso frame. The observer sees
an affine projection of the (y, z) plane into normalized image coordinates with
additive Gaussian noise, encoded into the colour channel of the moving object.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Tuple

import numpy as np

from .config import DatasetSpec
from .errors import ConfigurationError, DataError
from .net_core import InputFrame, ObservationSequence, SequenceLabel


COLORS = ("yellow", "green")

# Extremes of y and z over all three curves on (-pi, pi].
Y_RANGE = (-4.0 * math.pi + 0.04, 4.0 * math.pi + 0.04)
Z_RANGE = (-3.9, 14.0)
IMAGE_RANGE = (0.1, 0.9)


@dataclass(frozen=True)
class Point3D:
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class CameraModel:
    scale_y: float
    scale_z: float
    offset_y: float
    offset_z: float
    noise_sigma: float = 0.0

    def __post_init__(self) -> None:
        if self.scale_y == 0.0 or self.scale_z == 0.0:
            raise ConfigurationError("camera scale must be nonzero")
        if self.noise_sigma < 0.0:
            raise ConfigurationError(f"noise_sigma must be >= 0 (got {self.noise_sigma})")

    @classmethod
    def default(cls, noise_sigma: float = 0.0) -> "CameraModel":
        """Maps every curve into ``IMAGE_RANGE`` on both axes."""
        lo, hi = IMAGE_RANGE
        scale_y = (hi - lo) / (Y_RANGE[1] - Y_RANGE[0])
        scale_z = (hi - lo) / (Z_RANGE[1] - Z_RANGE[0])
        return cls(
            scale_y=scale_y,
            scale_z=scale_z,
            offset_y=lo - scale_y * Y_RANGE[0],
            offset_z=lo - scale_z * Z_RANGE[0],
            noise_sigma=noise_sigma,
        )


def cosine_point(t: float) -> Point3D:
    return Point3D(12.0, 8.0 * (-t / 2.0) + 0.04, 4.0 * math.cos(2.0 * t) + 0.10)


def _square_y(t: float) -> float:
    if t <= -3.0 * math.pi / 4.0:
        return 0.0
    if t <= -math.pi / 4.0:
        return 16.0 / math.pi * t + 12.0
    if t <= math.pi / 4.0:
        return 8.0
    if t <= 3.0 * math.pi / 4.0:
        return -16.0 / math.pi * t + 12.0
    return 0.0


def _square_z(t: float) -> float:
    # The first branch does not meet the second at -3pi/4 (8 vs 14).
    if t <= -3.0 * math.pi / 4.0:
        return 16.0 / math.pi * t + 20.0
    if t <= -math.pi / 4.0:
        return 14.0
    if t <= math.pi / 4.0:
        return -16.0 / math.pi * t + 10.0
    if t <= 3.0 * math.pi / 4.0:
        return 6.0
    return 16.0 / math.pi * t - 6.0


def square_point(t: float) -> Point3D:
    return Point3D(12.0, _square_y(t), _square_z(t))


def circle_point(t: float) -> Point3D:
    return Point3D(12.0, 4.0 * math.sin(2.0 * t) + 0.04, 4.0 * math.cos(2.0 * t) + 0.10)


CURVES: Dict[str, Callable[[float], Point3D]] = {
    "cosine": cosine_point,
    "square": square_point,
    "circle": circle_point,
}


def sample_times(points_per_loop: int, speed_factor: float = 1.0) -> List[float]:
    """``t_k = -pi + (k+1) * 2pi/P * speed``, wrapped into (-pi, pi].

    The wrap works on the loop fraction so that full loops land exactly on pi.
    """
    times: List[float] = []
    for k in range(points_per_loop):
        fraction = math.fmod((k + 1) * speed_factor / points_per_loop, 1.0)
        if fraction <= 0.0:
            fraction += 1.0
        times.append(-math.pi + 2.0 * math.pi * fraction)
    return times


def sample_trajectory(shape: str, spec: DatasetSpec) -> List[Point3D]:
    if shape not in CURVES:
        raise DataError(f"unknown shape '{shape}' (expected one of {', '.join(CURVES)})")
    curve = CURVES[shape]
    return [curve(t) for t in sample_times(spec.points_per_loop, spec.speed_factor)]


def project_to_image(p: Point3D, cam: CameraModel, rng: np.random.Generator | None = None) -> Tuple[float, float]:
    ix = cam.scale_y * p.y + cam.offset_y
    iy = cam.scale_z * p.z + cam.offset_z
    if cam.noise_sigma > 0.0:
        if rng is None:
            raise DataError("a random generator is required when noise_sigma > 0")
        nx, ny = rng.normal(0.0, cam.noise_sigma, size=2)
        ix += float(nx)
        iy += float(ny)
    return ix, iy


def encode_frame(image_point: Tuple[float, float], color: str) -> InputFrame:
    ix, iy = image_point
    if color == "yellow":
        return np.array([ix, iy, 0.0, 0.0])
    if color == "green":
        return np.array([0.0, 0.0, ix, iy])
    raise DataError(f"unknown color '{color}' (expected yellow or green)")


def observe(points: List[Point3D], color: str, cam: CameraModel, rng: np.random.Generator) -> np.ndarray:
    return np.array([encode_frame(project_to_image(p, cam, rng), color) for p in points])


def make_dataset(spec: DatasetSpec) -> List[ObservationSequence]:
    """All (shape, colour, repeat) combinations in that nesting order."""
    if not spec.shapes or not spec.colors:
        raise DataError("dataset needs at least one shape and one color")
    spec.check()
    cam = CameraModel.default(spec.noise_sigma)
    rng = np.random.default_rng(spec.seed)
    dataset: List[ObservationSequence] = []
    for shape in spec.shapes:
        points = sample_trajectory(shape, spec)
        for color in spec.colors:
            for repeat in range(spec.repeats):
                frames = observe(points, color, cam, rng)
                dataset.append(ObservationSequence(frames, SequenceLabel(shape, color, repeat)))
    return dataset
