"""Aggregate scenes: box-shaped particles on a flat work plane, plus sorting bins."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from ..dataset import Lithology, REPORT_ORDER
from ..geometry import RigidTransform, rot_z
from ..kinematics import FLIP

SUPPORTED_SIZE_RANGE_CM = (1.0, 4.0)
#: Annular placement region around the base (meters, radians).
REGION_R = (0.09, 0.21)
REGION_ANGLE = math.radians(100.0)
CLEARANCE_M = 0.005
ASPECT_DEG = (30.0, 60.0)
HEIGHT_FRACTION = (0.4, 0.8)
MAX_PLACEMENT_TRIES = 2000
#: Drop points for the four bins, behind the work area.
BIN_RADIUS = 0.18
BIN_DROP_Z = -0.05
BIN_ANGLES_DEG = {
    Lithology.LIMESTONE: 130.0,
    Lithology.GRANITE: 155.0,
    Lithology.SANDSTONE: -155.0,
    Lithology.MARBLE: -130.0,
}


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class AggregateSpec:
    """One particle: an axis-aligned box resting on the work plane.

    ``true_size`` holds (length x, width y, height z) in centimeters and
    ``pose`` places the box centroid in the base frame.
    """

    ident: int
    lithology: Lithology
    true_size: tuple[float, float, float]
    pose: RigidTransform

    @property
    def size_m(self) -> NDArray[np.float64]:
        return np.array(self.true_size) / 100.0

    @property
    def centroid(self) -> NDArray[np.float64]:
        return self.pose.translation.copy()

    @property
    def diagonal_cm(self) -> float:
        """Footprint diagonal, the quantity the grading works on."""
        return math.hypot(self.true_size[0], self.true_size[1])

    @property
    def top_center(self) -> NDArray[np.float64]:
        return self.centroid + np.array([0.0, 0.0, self.size_m[2] / 2])

    def bounds(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        half = self.size_m / 2
        c = self.centroid
        return c - half, c + half

    def corners(self) -> NDArray[np.float64]:
        lo, hi = self.bounds()
        return np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])


@dataclass(frozen=True)
class Scene:
    aggregates: tuple[AggregateSpec, ...]
    plane_z: float
    bins: tuple[tuple[Lithology, RigidTransform], ...]

    def aggregate(self, ident: int) -> AggregateSpec:
        for a in self.aggregates:
            if a.ident == ident:
                return a
        raise KeyError(ident)

    def bin_pose(self, lith: Lithology) -> RigidTransform:
        return dict(self.bins)[lith]

    def count(self, lith: Lithology) -> int:
        return sum(1 for a in self.aggregates if a.lithology is lith)


def downward_pose(position, yaw: float = 0.0) -> RigidTransform:
    """Tool pose with the approach axis pointing straight down."""
    return RigidTransform.from_rt(rot_z(yaw) @ FLIP, position)


def default_bins(reach: float) -> tuple[tuple[Lithology, RigidTransform], ...]:
    out = []
    for lith in REPORT_ORDER:
        ang = math.radians(BIN_ANGLES_DEG[lith])
        p = np.array([BIN_RADIUS * math.cos(ang), BIN_RADIUS * math.sin(ang), BIN_DROP_Z])
        if np.linalg.norm(p) > reach:
            raise SceneError(f"bin for {lith.label} at {p} is outside the arm reach {reach}")
        out.append((lith, downward_pose(p)))
    return tuple(out)


def _check_size_range(size_range: tuple[float, float], clamp: bool) -> tuple[float, float]:
    lo, hi = size_range
    plo, phi = SUPPORTED_SIZE_RANGE_CM
    if lo > hi:
        raise SceneError(f"size range is empty: {size_range}")
    if lo < plo or hi > phi:
        if not clamp:
            raise SceneError(f"size range {size_range} cm outside the supported [{plo}, {phi}] cm")
        lo, hi = max(lo, plo), min(hi, phi)
        if lo > hi:
            raise SceneError(f"size range {size_range} does not overlap [{plo}, {phi}] cm")
    return lo, hi


def generate_scene(
    rng: np.random.Generator,
    counts: tuple[int, ...] = (10, 10, 10, 10),
    size_range_cm: tuple[float, float] = SUPPORTED_SIZE_RANGE_CM,
    plane_z: float = -0.10,
    reach: float = 0.2588,
    clamp: bool = False,
) -> Scene:
    """Random non-overlapping aggregates; ``counts`` follow report order.

    Each particle's footprint diagonal is uniform over ``size_range_cm``; its
    aspect angle is uniform in [30, 60] degrees and its height a random
    fraction of the shorter footprint side.

    Raises:
        SceneError: on a bad size range or when placement keeps colliding.
    """
    if len(counts) != len(REPORT_ORDER) or any(c < 0 for c in counts):
        raise SceneError(f"counts must be {len(REPORT_ORDER)} non-negative integers, got {counts}")
    lo, hi = _check_size_range(size_range_cm, clamp)
    placed: list[AggregateSpec] = []
    boxes: list[tuple[NDArray[np.float64], NDArray[np.float64]]] = []
    ident = 0
    for lith, n in zip(REPORT_ORDER, counts):
        for _ in range(n):
            diag = rng.uniform(lo, hi)
            phi = math.radians(rng.uniform(*ASPECT_DEG))
            length, width = diag * math.cos(phi), diag * math.sin(phi)
            height = rng.uniform(*HEIGHT_FRACTION) * min(length, width)
            half = np.array([length, width]) / 200.0
            for _ in range(MAX_PLACEMENT_TRIES):
                r = math.sqrt(rng.uniform(REGION_R[0] ** 2, REGION_R[1] ** 2))
                ang = rng.uniform(-REGION_ANGLE, REGION_ANGLE)
                xy = np.array([r * math.cos(ang), r * math.sin(ang)])
                lo_xy, hi_xy = xy - half - CLEARANCE_M / 2, xy + half + CLEARANCE_M / 2
                if all(np.any(hi_xy <= b_lo) or np.any(lo_xy >= b_hi) for b_lo, b_hi in boxes):
                    break
            else:
                raise SceneError(f"could not place aggregate {ident} without overlap")
            boxes.append((lo_xy, hi_xy))
            centroid = (xy[0], xy[1], plane_z + height / 200.0)
            pose = RigidTransform.from_rt(np.eye(3), centroid)
            placed.append(AggregateSpec(ident, lith, (length, width, height), pose))
            ident += 1
    return Scene(tuple(placed), plane_z, default_bins(reach))
