"""Particle sizing from axis-aligned detection boxes and grade assignment."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class MerDimensions:
    """Box extents: ``a`` vertical, ``b`` horizontal, ``c`` diagonal."""

    a: float
    b: float
    c: float

    def scaled(self, factor: float) -> MerDimensions:
        return MerDimensions(self.a * factor, self.b * factor, self.c * factor)


def mer_dimensions(corner1: Sequence[float], corner2: Sequence[float]) -> MerDimensions:
    """Extents of the rectangle spanned by two opposite corners ``(x, y)``."""
    x1, y1 = map(float, corner1)
    x2, y2 = map(float, corner2)
    if not all(math.isfinite(v) for v in (x1, y1, x2, y2)):
        raise ValueError("corner coordinates must be finite")
    a = abs(y1 - y2)
    b = abs(x1 - x2)
    return MerDimensions(a, b, math.hypot(a, b))


def pixel_to_metric(length_px: float, depth: float, fx: float) -> float:
    """Fronto-parallel pinhole scaling: ``length_px * depth / fx`` (meters)."""
    if not depth > 0:
        raise ValueError(f"depth must be positive, got {depth}")
    if not fx > 0:
        raise ValueError(f"focal length must be positive, got {fx}")
    return length_px * depth / fx


class Grade(enum.Enum):
    REJECTED = 0
    ONE = 1
    TWO = 2
    THREE = 3

    def __str__(self) -> str:
        return "rejected" if self is Grade.REJECTED else str(self.value)


@dataclass(frozen=True)
class GradeBands:
    """Lower edges (cm) of grades 1, 2, 3; intervals are ``[lo, next)``.

    Diagonals above ``oversize_cm`` are flagged but still graded.
    """

    edges: tuple[float, float, float] = (1.0, 2.0, 3.0)
    oversize_cm: float = 4.0

    def __post_init__(self) -> None:
        e = tuple(float(v) for v in self.edges)
        if len(e) != 3 or not (0 <= e[0] < e[1] < e[2]):
            raise ValueError(f"grade edges must be three increasing non-negative values, got {self.edges}")
        object.__setattr__(self, "edges", e)


DEFAULT_BANDS = GradeBands()


@dataclass(frozen=True)
class GradeAssessment:
    grade: Grade
    oversize: bool


def assess(diagonal_cm: float, bands: GradeBands = DEFAULT_BANDS) -> GradeAssessment:
    if not diagonal_cm >= 0:
        raise ValueError(f"diagonal must be non-negative, got {diagonal_cm}")
    e1, e2, e3 = bands.edges
    if diagonal_cm < e1:
        g = Grade.REJECTED
    elif diagonal_cm < e2:
        g = Grade.ONE
    elif diagonal_cm < e3:
        g = Grade.TWO
    else:
        g = Grade.THREE
    return GradeAssessment(g, diagonal_cm > bands.oversize_cm)


def grade(diagonal_cm: float, bands: GradeBands = DEFAULT_BANDS) -> Grade:
    """Grade by box diagonal in centimeters; below the first edge is rejected."""
    return assess(diagonal_cm, bands).grade


def measure_box(corner1, corner2, depth: float, fx: float) -> MerDimensions:
    """Metric (meter) box extents from pixel corners and the depth at the box center."""
    return mer_dimensions(corner1, corner2).scaled(pixel_to_metric(1.0, depth, fx))
