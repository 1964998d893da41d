"""Rigid-body pose algebra.

Rotations are stored as 3x3 matrices and poses as 4x4 homogeneous
transforms. Everything here is in meters and radians.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
from numpy.typing import ArrayLike, NDArray

#: Rigidity tolerance for transforms produced by this library.
COMPUTED_TOL = 1e-9
#: Rigidity tolerance for transforms read from external files with few significant digits.
INGESTED_TOL = 1e-3


class RigidityError(ValueError):
    """Raised when a matrix is not a proper rigid transform."""


def hat(w: ArrayLike) -> NDArray[np.float64]:
    x, y, z = np.asarray(w, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rot_x(angle: float) -> NDArray[np.float64]:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> NDArray[np.float64]:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> NDArray[np.float64]:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def so3_exp(rotvec: ArrayLike) -> NDArray[np.float64]:
    """Rotation matrix for an axis-angle vector (Rodrigues)."""
    w = np.asarray(rotvec, dtype=float)
    theta = float(np.linalg.norm(w))
    W = hat(w)
    if theta < 1e-8:
        return np.eye(3) + W + 0.5 * (W @ W)
    return np.eye(3) + (np.sin(theta) / theta) * W + ((1.0 - np.cos(theta)) / theta**2) * (W @ W)


def so3_log(R: ArrayLike) -> NDArray[np.float64]:
    """Axis-angle vector of a rotation matrix, angle in [0, pi].

    Stable near both 0 and pi; the near-pi branch recovers the axis from
    the symmetric part of R.
    """
    R = np.asarray(R, dtype=float)
    cos_t = np.clip((np.trace(R) - 1.0) * 0.5, -1.0, 1.0)
    v = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    sin_t = float(np.linalg.norm(v))
    theta = float(np.arctan2(sin_t, cos_t))
    if theta < 1e-7:
        # first-order: R ~ I + hat(w)
        return v
    if np.pi - theta > 1e-4:
        return v * (theta / sin_t)
    # near pi: R ~ 2 n n^T - I
    B = (0.5 * (R + R.T) - cos_t * np.eye(3)) / (1.0 - cos_t)
    k = int(np.argmax(np.diag(B)))
    n = B[:, k] / np.sqrt(max(B[k, k], 1e-300))
    n /= np.linalg.norm(n)
    if np.dot(n, v) < 0:
        n = -n
    return n * theta


def rotation_angle(R: ArrayLike) -> float:
    """Geodesic angle of a rotation, in [0, pi]."""
    return float(np.linalg.norm(so3_log(R)))


def geodesic_distance(R1: ArrayLike, R2: ArrayLike) -> float:
    """Angle of the relative rotation R1^T R2, radians."""
    return rotation_angle(np.asarray(R1, dtype=float).T @ np.asarray(R2, dtype=float))


def project_to_so3(M: ArrayLike) -> NDArray[np.float64]:
    """Nearest proper rotation to M in the Frobenius sense."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=float))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


@dataclass(frozen=True)
class RigidityReport:
    """Outcome of :func:`validate_rigid`.

    ``orthonormality_residual`` is the spectral distance of the rotation
    block to the nearest orthogonal matrix, max |sigma_i - 1|.
    """

    passed: bool
    orthonormality_residual: float
    det_residual: float
    bottom_row_exact: bool
    finite: bool
    tol: float


def validate_rigid(M: ArrayLike, tol: float = COMPUTED_TOL) -> RigidityReport:
    """Check that a 4x4 matrix is a rigid transform. Never raises."""
    M = np.asarray(M, dtype=float)
    if M.shape != (4, 4):
        return RigidityReport(False, float("inf"), float("inf"), False, False, tol)
    finite = bool(np.all(np.isfinite(M)))
    if not finite:
        return RigidityReport(False, float("inf"), float("inf"), False, False, tol)
    R = M[:3, :3]
    sigma = np.linalg.svd(R, compute_uv=False)
    ortho = float(np.max(np.abs(sigma - 1.0)))
    det_res = float(abs(np.linalg.det(R) - 1.0))
    bottom = bool(np.array_equal(M[3], np.array([0.0, 0.0, 0.0, 1.0])))
    passed = ortho <= tol and det_res <= tol and bottom
    return RigidityReport(passed, ortho, det_res, bottom, finite, tol)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Homogeneous rigid transform ``[R t; 0 1]``.

    Immutable; the underlying arrays are flagged read-only. Construct with
    :meth:`from_matrix` or :meth:`from_rt` to get rigidity validation.
    """

    matrix: NDArray[np.float64]

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=float)
        if m.shape != (4, 4):
            raise RigidityError(f"transform must be 4x4, got {m.shape}")
        if not np.array_equal(m[3], np.array([0.0, 0.0, 0.0, 1.0])):
            raise RigidityError(f"bottom row must be exactly (0, 0, 0, 1), got {m[3]}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls(np.eye(4))

    @classmethod
    def from_matrix(cls, matrix: ArrayLike, tol: float = COMPUTED_TOL) -> RigidTransform:
        report = validate_rigid(matrix, tol)
        if not report.passed:
            raise RigidityError(
                f"not rigid at tol {tol:g}: orthonormality {report.orthonormality_residual:.3g}, "
                f"det {report.det_residual:.3g}, bottom row exact={report.bottom_row_exact}"
            )
        return cls(np.asarray(matrix, dtype=float))

    @classmethod
    def from_rt(
        cls, rotation: ArrayLike | None = None, translation: ArrayLike | None = None, tol: float = COMPUTED_TOL
    ) -> RigidTransform:
        m = np.eye(4)
        if rotation is not None:
            m[:3, :3] = np.asarray(rotation, dtype=float)
        if translation is not None:
            m[:3, 3] = np.asarray(translation, dtype=float).reshape(3)
        return cls.from_matrix(m, tol)

    @property
    def rotation(self) -> NDArray[np.float64]:
        return self.matrix[:3, :3]

    @property
    def translation(self) -> NDArray[np.float64]:
        return self.matrix[:3, 3]

    def __matmul__(self, other: RigidTransform) -> RigidTransform:
        if not isinstance(other, RigidTransform):
            return NotImplemented
        return compose(self, other)

    def inverse(self) -> RigidTransform:
        return invert(self)

    def apply(self, p: ArrayLike) -> NDArray[np.float64]:
        return transform_point(self, p)

    def allclose(self, other: RigidTransform, atol: float = 1e-12) -> bool:
        return bool(np.allclose(self.matrix, other.matrix, rtol=0.0, atol=atol))

    def __repr__(self) -> str:
        t = np.array2string(self.translation, precision=6)
        r = np.array2string(so3_log(self.rotation), precision=6)
        return f"RigidTransform(rotvec={r}, t={t})"


def translate(x: float, y: float, z: float) -> RigidTransform:
    return RigidTransform.from_rt(translation=(x, y, z))


def rotate(R: ArrayLike) -> RigidTransform:
    return RigidTransform.from_rt(rotation=R)


def compose(first: RigidTransform, second: RigidTransform) -> RigidTransform:
    """Matrix product ``first @ second`` (apply ``second``, then ``first``)."""
    m = first.matrix @ second.matrix
    m[3] = (0.0, 0.0, 0.0, 1.0)
    return RigidTransform(m)


def invert(T: RigidTransform) -> RigidTransform:
    Rt = T.rotation.T
    m = np.eye(4)
    m[:3, :3] = Rt
    m[:3, 3] = -Rt @ T.translation
    return RigidTransform(m)


def transform_point(T: RigidTransform, p: ArrayLike) -> NDArray[np.float64]:
    """``R p + t`` for a point (3,) or a batch of points (N, 3)."""
    p = np.asarray(p, dtype=float)
    if p.ndim == 1:
        if p.shape != (3,):
            raise ValueError(f"point must have 3 components, got {p.shape}")
        return T.rotation @ p + T.translation
    return p @ T.rotation.T + T.translation


# -- plain-text serialization: 16 numbers per line, row-major ---------------


def format_transform(T: RigidTransform | NDArray[np.float64]) -> str:
    m = T.matrix if isinstance(T, RigidTransform) else np.asarray(T, dtype=float)
    return " ".join(repr(float(v)) for v in m.reshape(-1))


def parse_transform_line(line: str, tol: float = INGESTED_TOL) -> RigidTransform:
    fields = line.split()
    if len(fields) != 16:
        raise ValueError(f"expected 16 numbers, got {len(fields)}")
    return RigidTransform.from_matrix(np.array([float(f) for f in fields]).reshape(4, 4), tol)


def dump_transforms(transforms: Iterable[RigidTransform]) -> str:
    return "".join(format_transform(T) + "\n" for T in transforms)


def load_transforms(text: str, tol: float = INGESTED_TOL) -> list[RigidTransform]:
    out = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            out.append(parse_transform_line(line, tol))
    return out


def read_transforms(path: str | Path, tol: float = INGESTED_TOL) -> list[RigidTransform]:
    return load_transforms(Path(path).read_text(encoding="utf-8"), tol)


def write_transforms(path: str | Path, transforms: Iterable[RigidTransform]) -> None:
    Path(path).write_text(dump_transforms(transforms), encoding="utf-8")


def random_transform(rng: np.random.Generator, max_translation: float = 1.0) -> RigidTransform:
    """Uniformly random rotation with a translation in a cube; for tests and synthesis."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    R = np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )
    t = rng.uniform(-max_translation, max_translation, size=3)
    return RigidTransform.from_rt(project_to_so3(R), t)
