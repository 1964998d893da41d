"""Detector interface and a ground-truth oracle with confusion and box noise."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .dataset import ClassMap, Lithology, REPORT_ORDER


@dataclass(frozen=True)
class Detection:
    class_index: int
    confidence: float
    box: tuple[float, float, float, float]  # x1, y1, x2, y2 in pixels
    source_id: int = -1
    truncated: bool = False

    def __post_init__(self) -> None:
        x1, y1, x2, y2 = (float(v) for v in self.box)
        if not (x1 <= x2 and y1 <= y2):
            raise ValueError(f"box corners out of order: {self.box}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence}")
        object.__setattr__(self, "box", (x1, y1, x2, y2))
        object.__setattr__(self, "confidence", float(self.confidence))

    @property
    def center(self) -> tuple[float, float]:
        x1, y1, x2, y2 = self.box
        return (0.5 * (x1 + x2), 0.5 * (y1 + y2))

    @property
    def corners(self) -> tuple[tuple[float, float], tuple[float, float]]:
        x1, y1, x2, y2 = self.box
        return (x1, y1), (x2, y2)


@dataclass(frozen=True)
class ConfusionSpec:
    """Row-stochastic matrix; rows are true lithologies, columns reported ones."""

    matrix: NDArray[np.float64]
    order: tuple[Lithology, ...] = REPORT_ORDER

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=float)
        n = len(self.order)
        if m.shape != (n, n):
            raise ValueError(f"confusion matrix must be {n}x{n}, got {m.shape}")
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise ValueError("confusion entries must be finite and non-negative")
        if np.max(np.abs(m.sum(axis=1) - 1.0)) > 1e-9:
            raise ValueError("confusion rows must sum to 1")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "order", tuple(self.order))

    @classmethod
    def identity(cls, order: Sequence[Lithology] = REPORT_ORDER) -> ConfusionSpec:
        return cls(np.eye(len(order)), tuple(order))

    @classmethod
    def with_errors(cls, errors: dict[tuple[Lithology, Lithology], float],
                    order: Sequence[Lithology] = REPORT_ORDER) -> ConfusionSpec:
        """Identity with probability moved from the diagonal to ``(true, reported)`` cells."""
        order = tuple(order)
        m = np.eye(len(order))
        for (true, rep), p in errors.items():
            i, j = order.index(true), order.index(rep)
            m[i, j] += p
            m[i, i] -= p
        return cls(m, order)

    def row(self, lith: Lithology) -> NDArray[np.float64]:
        return self.matrix[self.order.index(lith)]

    def sample(self, true: Lithology, rng: np.random.Generator) -> tuple[Lithology, float]:
        row = self.row(true)
        j = int(rng.choice(len(row), p=row))
        return self.order[j], float(row[j])

    def serialize(self) -> str:
        head = "# rows: true, columns: reported; order " + " ".join(l.code for l in self.order)
        body = "\n".join(" ".join(repr(float(v)) for v in r) for r in self.matrix)
        return head + "\n" + body + "\n"

    @classmethod
    def parse(cls, text: str, order: Sequence[Lithology] = REPORT_ORDER) -> ConfusionSpec:
        rows = []
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if line:
                rows.append([float(v) for v in line.split()])
        return cls(np.array(rows), tuple(order))

    @classmethod
    def load(cls, path: str | Path, order: Sequence[Lithology] = REPORT_ORDER) -> ConfusionSpec:
        return cls.parse(Path(path).read_text(encoding="utf-8"), order)


@dataclass(frozen=True)
class Silhouette:
    """Projected outline of one aggregate in an image."""

    source_id: int
    lithology: Lithology
    grade: int
    points_px: NDArray[np.float64]

    def __post_init__(self) -> None:
        p = np.array(self.points_px, dtype=float).reshape(-1, 2)
        p.setflags(write=False)
        object.__setattr__(self, "points_px", p)

    def bounds(self) -> tuple[float, float, float, float]:
        lo, hi = self.points_px.min(axis=0), self.points_px.max(axis=0)
        return (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


@dataclass(frozen=True)
class SceneView:
    width: int
    height: int
    silhouettes: tuple[Silhouette, ...]


class Detector(Protocol):
    def detect(self, view: SceneView, rng: np.random.Generator) -> list[Detection]: ...


@dataclass(frozen=True)
class OracleDetector:
    """Emits one detection per visible silhouette.

    The box is the silhouette's tight bound with each edge moved by an
    independent uniform offset in ``[-box_noise_px, box_noise_px]``, then
    clipped to the image. The class comes from the confusion row of the
    true lithology; confidence is that row's probability of the emitted class.
    """

    confusion: ConfusionSpec
    class_map: ClassMap = ClassMap.default()
    box_noise_px: float = 1.0

    def detect(self, view: SceneView, rng: np.random.Generator) -> list[Detection]:
        out = []
        for s in view.silhouettes:
            x1, y1, x2, y2 = s.bounds()
            if x2 < 0 or y2 < 0 or x1 > view.width or y1 > view.height:
                continue
            reported, conf = self.confusion.sample(s.lithology, rng)
            if self.box_noise_px > 0:
                e = rng.uniform(-self.box_noise_px, self.box_noise_px, size=4)
                x1, x2 = sorted((x1 + e[0], x2 + e[2]))
                y1, y2 = sorted((y1 + e[1], y2 + e[3]))
                if x2 < 0 or y2 < 0 or x1 > view.width or y1 > view.height:
                    continue
            truncated = x1 < 0 or y1 < 0 or x2 > view.width or y2 > view.height
            box = (max(x1, 0.0), max(y1, 0.0), min(x2, float(view.width)), min(y2, float(view.height)))
            out.append(Detection(self.class_map.index_of(reported, s.grade), conf, box, s.source_id, truncated))
        return out


def detect(view: SceneView, confusion: ConfusionSpec, seed: int | np.random.Generator | None = None,
           box_noise_px: float = 1.0, class_map: ClassMap | None = None) -> list[Detection]:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    det = OracleDetector(confusion, class_map or ClassMap.default(), box_noise_px)
    return det.detect(view, rng)


def box_from_points(points_px: ArrayLike) -> tuple[float, float, float, float]:
    p = np.asarray(points_px, dtype=float).reshape(-1, 2)
    lo, hi = p.min(axis=0), p.max(axis=0)
    return (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))
