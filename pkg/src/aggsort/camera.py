"""Pinhole camera with radial/tangential distortion and planar-target calibration.

Pixel coordinates follow the usual convention: ``u`` grows to the right,
``v`` grows downward, the optical axis is +z.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import least_squares

from .geometry import (
    INGESTED_TOL,
    RigidTransform,
    RigidityError,
    format_transform,
    parse_transform_line,
    project_to_so3,
    so3_exp,
    so3_log,
    validate_rigid,
)
from .textio import floats, fmt, parse_kv

CALIBRATION_GATE_PX = 1.5
UNDISTORT_MAX_ITER = 20
UNDISTORT_TOL = 1e-10


class NonPositiveDepthError(ValueError):
    pass


class UndistortError(RuntimeError):
    pass


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    skew: float = 0.0

    def __post_init__(self) -> None:
        for name in ("fx", "fy", "cx", "cy", "skew"):
            object.__setattr__(self, name, float(getattr(self, name)))
        vals = (self.fx, self.fy, self.cx, self.cy, self.skew)
        if not all(np.isfinite(vals)):
            raise ValueError(f"intrinsics must be finite: {vals}")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @property
    def K(self) -> NDArray[np.float64]:
        return np.array([[self.fx, self.skew, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @classmethod
    def from_matrix(cls, K: ArrayLike) -> Intrinsics:
        K = np.asarray(K, dtype=float).reshape(3, 3)
        if K[1, 0] != 0 or K[2, 0] != 0 or K[2, 1] != 0 or K[2, 2] != 1:
            raise ValueError(f"not an upper-triangular intrinsic matrix:\n{K}")
        return cls(K[0, 0], K[1, 1], K[0, 2], K[1, 2], K[0, 1])


@dataclass(frozen=True)
class Distortion:
    k1: float = 0.0
    k2: float = 0.0
    p1: float = 0.0
    p2: float = 0.0

    def __post_init__(self) -> None:
        for name in ("k1", "k2", "p1", "p2"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not all(np.isfinite(self.as_array())):
            raise ValueError("distortion coefficients must be finite")

    def as_array(self) -> NDArray[np.float64]:
        return np.array([self.k1, self.k2, self.p1, self.p2], dtype=float)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.as_array())


def distort_normalized(xy: ArrayLike, dist: Distortion) -> NDArray[np.float64]:
    """Apply the radial + tangential model to normalized coordinates (..., 2)."""
    xy = np.asarray(xy, dtype=float)
    x, y = xy[..., 0], xy[..., 1]
    r2 = x * x + y * y
    radial = 1.0 + dist.k1 * r2 + dist.k2 * r2 * r2
    xd = x * radial + 2.0 * dist.p1 * x * y + dist.p2 * (r2 + 2.0 * x * x)
    yd = y * radial + dist.p1 * (r2 + 2.0 * y * y) + 2.0 * dist.p2 * x * y
    return np.stack([xd, yd], axis=-1)


def _to_pixels(intr: Intrinsics, xy: NDArray[np.float64]) -> NDArray[np.float64]:
    u = intr.fx * xy[..., 0] + intr.skew * xy[..., 1] + intr.cx
    v = intr.fy * xy[..., 1] + intr.cy
    return np.stack([u, v], axis=-1)


def project(intr: Intrinsics, dist: Distortion, p_cam: ArrayLike) -> NDArray[np.float64]:
    """Pixel coordinates of camera-frame point(s), shape (3,) -> (2,) or (N, 3) -> (N, 2)."""
    p = np.asarray(p_cam, dtype=float)
    z = p[..., 2]
    if np.any(~(z > 0)):
        raise NonPositiveDepthError("point(s) at or behind the camera plane")
    xy = p[..., :2] / z[..., None]
    return _to_pixels(intr, distort_normalized(xy, dist))


def undistort(
    intr: Intrinsics,
    dist: Distortion,
    pixel: ArrayLike,
    max_iter: int = UNDISTORT_MAX_ITER,
    tol: float = UNDISTORT_TOL,
) -> NDArray[np.float64]:
    """Normalized image coordinates ``(x, y)`` whose projection is ``pixel``.

    Fixed-point iteration ``x <- (xd - tangential(x)) / radial(x)``. Works on
    (2,) or (N, 2) inputs.

    Raises:
        UndistortError: if any point fails to converge within ``max_iter``.
    """
    px = np.asarray(pixel, dtype=float)
    if not np.all(np.isfinite(px)):
        raise ValueError("pixel coordinates must be finite")
    yd = (px[..., 1] - intr.cy) / intr.fy
    xd = (px[..., 0] - intr.cx - intr.skew * yd) / intr.fx
    if dist.is_zero:
        return np.stack([xd, yd], axis=-1)
    x, y = xd.copy(), yd.copy()
    for _ in range(max_iter):
        r2 = x * x + y * y
        radial = 1.0 + dist.k1 * r2 + dist.k2 * r2 * r2
        dx = 2.0 * dist.p1 * x * y + dist.p2 * (r2 + 2.0 * x * x)
        dy = dist.p1 * (r2 + 2.0 * y * y) + 2.0 * dist.p2 * x * y
        xn, yn = (xd - dx) / radial, (yd - dy) / radial
        step = np.maximum(np.abs(xn - x), np.abs(yn - y))
        x, y = xn, yn
        if np.all(step < tol):
            return np.stack([x, y], axis=-1)
    raise UndistortError(f"undistortion did not converge in {max_iter} iterations")


def unproject(intr: Intrinsics, dist: Distortion, pixel: ArrayLike, depth: ArrayLike) -> NDArray[np.float64]:
    """Camera-frame point(s) at the given depth along the pixel ray."""
    xy = undistort(intr, dist, pixel)
    z = np.asarray(depth, dtype=float)
    return np.concatenate([xy * z[..., None], z[..., None] * np.ones_like(xy[..., :1])], axis=-1)


# -- stereo rig -------------------------------------------------------------


@dataclass(frozen=True)
class StereoRig:
    """Two calibrated cameras; ``rotation``/``translation`` map left-frame points
    into the right frame (``X_r = R X_l + t``), translation in meters."""

    left: Intrinsics
    left_dist: Distortion
    right: Intrinsics
    right_dist: Distortion
    rotation: NDArray[np.float64]
    translation: NDArray[np.float64]
    tol: float = INGESTED_TOL

    def __post_init__(self) -> None:
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        M = np.eye(4)
        M[:3, :3], M[:3, 3] = R, t
        rep = validate_rigid(M, self.tol)
        if not rep.passed:
            raise RigidityError(
                f"stereo rotation not rigid at tol {self.tol:g} "
                f"(orthonormality {rep.orthonormality_residual:.3g}, det {rep.det_residual:.3g})"
            )
        if not np.linalg.norm(t) > 0:
            raise ValueError("stereo baseline must be positive")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @property
    def baseline(self) -> float:
        return float(np.linalg.norm(self.translation))

    @classmethod
    def rectified(cls, intr: Intrinsics, baseline: float) -> StereoRig:
        """Ideal rectified pair: identical cameras, right camera shifted +x by ``baseline``."""
        return cls(intr, Distortion(), intr, Distortion(), np.eye(3), np.array([-baseline, 0.0, 0.0]), tol=1e-12)


@dataclass(frozen=True)
class StereoTables:
    """Stereo calibration numbers exactly as recorded, before any validation."""

    reprojection_error: float
    left_K: NDArray[np.float64]
    left_dist: NDArray[np.float64]
    right_K: NDArray[np.float64]
    right_dist: NDArray[np.float64]
    rotation: NDArray[np.float64]
    translation_mm: NDArray[np.float64]

    def to_rig(self, tol: float = INGESTED_TOL) -> StereoRig:
        """Validated rig; translation converted from millimeters to meters.

        Raises:
            RigidityError: if the recorded rotation is not orthonormal at ``tol``.
        """
        return StereoRig(
            Intrinsics.from_matrix(self.left_K),
            Distortion(*self.left_dist),
            Intrinsics.from_matrix(self.right_K),
            Distortion(*self.right_dist),
            self.rotation,
            self.translation_mm / 1000.0,
            tol=tol,
        )


def parse_stereo_tables(text: str) -> StereoTables:
    kv = parse_kv(text)
    try:
        return StereoTables(
            reprojection_error=float(kv["reprojection_error"]),
            left_K=floats(kv["left.K"], 9).reshape(3, 3),
            left_dist=floats(kv["left.dist"], 4),
            right_K=floats(kv["right.K"], 9).reshape(3, 3),
            right_dist=floats(kv["right.dist"], 4),
            rotation=floats(kv["rotation"], 9).reshape(3, 3),
            translation_mm=floats(kv["translation_mm"], 3),
        )
    except KeyError as exc:
        raise ValueError(f"stereo table missing key {exc}") from None


def load_stereo_tables(path: str | Path) -> StereoTables:
    return parse_stereo_tables(Path(path).read_text(encoding="utf-8"))


# -- planar target ----------------------------------------------------------


@dataclass(frozen=True)
class PlanarTarget:
    """Chessboard described by its inner-corner grid."""

    rows: int = 9
    cols: int = 6
    square_size: float = 0.027

    def __post_init__(self) -> None:
        if self.rows < 2 or self.cols < 2:
            raise ValueError("target needs at least 2x2 inner corners")
        if not self.square_size > 0:
            raise ValueError("square_size must be positive")

    def points(self) -> NDArray[np.float64]:
        """(rows*cols, 3) board-frame corners; corner (i, j) is at (i*s, j*s, 0), i fastest."""
        j, i = np.meshgrid(np.arange(self.cols), np.arange(self.rows), indexing="ij")
        pts = np.zeros((self.rows * self.cols, 3))
        pts[:, 0] = i.reshape(-1) * self.square_size
        pts[:, 1] = j.reshape(-1) * self.square_size
        return pts


@dataclass(frozen=True)
class TargetView:
    object_points: NDArray[np.float64]
    image_points: NDArray[np.float64]

    def __post_init__(self) -> None:
        obj = np.array(self.object_points, dtype=float)
        img = np.array(self.image_points, dtype=float)
        if obj.ndim != 2 or obj.shape[1] != 3 or img.shape != (obj.shape[0], 2):
            raise ValueError(f"mismatched correspondences {obj.shape} vs {img.shape}")
        obj.setflags(write=False)
        img.setflags(write=False)
        object.__setattr__(self, "object_points", obj)
        object.__setattr__(self, "image_points", img)


def synthesize_target_views(
    target: PlanarTarget,
    poses: Sequence[RigidTransform],
    intr: Intrinsics,
    dist: Distortion,
    noise_px: float = 0.0,
    seed: int | None = None,
) -> list[TargetView]:
    """Project the target through each board-to-camera pose.

    Raises:
        NonPositiveDepthError: if any corner lands behind the camera.
    """
    rng = np.random.default_rng(seed)
    obj = target.points()
    views = []
    for k, pose in enumerate(poses):
        p_cam = pose.apply(obj)
        if np.any(p_cam[:, 2] <= 0):
            raise NonPositiveDepthError(f"view {k}: board behind camera")
        px = project(intr, dist, p_cam)
        if noise_px > 0:
            px = px + rng.normal(scale=noise_px, size=px.shape)
        views.append(TargetView(obj, px))
    return views


def orbit_poses(n: int, distance: float = 0.5, tilt_deg: float = 25.0, seed: int = 0,
                center: ArrayLike = (0.108, 0.0675, 0.0)) -> list[RigidTransform]:
    """Board-to-camera poses looking at ``center`` of the board from varied tilts.

    Handy for generating well-conditioned synthetic calibration sets.
    """
    rng = np.random.default_rng(seed)
    c = np.asarray(center, dtype=float)
    poses = []
    for k in range(n):
        az = 2 * np.pi * k / n + rng.uniform(-0.2, 0.2)
        tilt = np.deg2rad(tilt_deg) * rng.uniform(0.5, 1.0)
        axis = np.array([np.cos(az), np.sin(az), 0.0])
        R = so3_exp(axis * tilt) @ so3_exp([0, 0, rng.uniform(-0.3, 0.3)])
        d = distance * rng.uniform(0.85, 1.15)
        # board center lands on the optical axis at depth d
        t = np.array([rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02), d]) - R @ c
        poses.append(RigidTransform.from_rt(R, t))
    return poses


# -- calibration ------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationResult:
    intrinsics: Intrinsics
    distortion: Distortion
    extrinsics: tuple[RigidTransform, ...]
    rms_reprojection: float
    iterations: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        if not self.rms_reprojection >= 0:
            raise ValueError("rms_reprojection must be non-negative")
        object.__setattr__(self, "extrinsics", tuple(self.extrinsics))


def _normalizer(pts: NDArray[np.float64]) -> NDArray[np.float64]:
    c = pts.mean(axis=0)
    scale = np.sqrt(2.0) / max(np.mean(np.linalg.norm(pts - c, axis=1)), 1e-300)
    return np.array([[scale, 0.0, -scale * c[0]], [0.0, scale, -scale * c[1]], [0.0, 0.0, 1.0]])


def estimate_homography(src: ArrayLike, dst: ArrayLike) -> NDArray[np.float64]:
    """Normalized DLT homography with ``dst ~ H src``; needs >= 4 points."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.shape[0] < 4:
        raise CalibrationError("homography needs at least 4 points")
    Ts, Td = _normalizer(src), _normalizer(dst)
    s = src @ Ts[:2, :2].T + Ts[:2, 2]
    d = dst @ Td[:2, :2].T + Td[:2, 2]
    n = len(s)
    A = np.zeros((2 * n, 9))
    A[0::2, 0:2], A[0::2, 2] = -s, -1.0
    A[1::2, 3:5], A[1::2, 5] = -s, -1.0
    A[0::2, 6:8] = d[:, :1] * s
    A[0::2, 8] = d[:, 0]
    A[1::2, 6:8] = d[:, 1:] * s
    A[1::2, 8] = d[:, 1]
    _, _, Vt = np.linalg.svd(A)
    Hn = Vt[-1].reshape(3, 3)
    H = np.linalg.solve(Td, Hn @ Ts)
    return H / H[2, 2]


def _v(H: NDArray[np.float64], i: int, j: int) -> NDArray[np.float64]:
    hi, hj = H[:, i], H[:, j]
    return np.array([
        hi[0] * hj[0],
        hi[0] * hj[1] + hi[1] * hj[0],
        hi[1] * hj[1],
        hi[2] * hj[0] + hi[0] * hj[2],
        hi[2] * hj[1] + hi[1] * hj[2],
        hi[2] * hj[2],
    ])


def intrinsics_from_homographies(Hs: Sequence[NDArray[np.float64]], zero_skew: bool = True) -> Intrinsics:
    """Closed-form intrinsics from the image of the absolute conic.

    Homographies are pre-conditioned by a pixel normalization so the linear
    system is well scaled.

    Raises:
        CalibrationError: when the views do not constrain the conic (e.g. all
            boards parallel).
    """
    # pixel normalization N, conic solved for K' = N K
    scale = float(np.mean([abs(H[0, 2] / H[2, 2]) + abs(H[1, 2] / H[2, 2]) for H in Hs])) or 1.0
    N = np.diag([1.0 / scale, 1.0 / scale, 1.0])
    rows = []
    for H in Hs:
        Hn = N @ H
        Hn = Hn / np.linalg.norm(Hn)
        rows.append(_v(Hn, 0, 1))
        rows.append(_v(Hn, 0, 0) - _v(Hn, 1, 1))
    if zero_skew:
        rows.append(np.array([0.0, 1.0, 0.0, 0.0, 0.0, 0.0]))
    V = np.array(rows)
    _, sv, Vt = np.linalg.svd(V)
    if sv[-2] < 1e-9 * sv[0]:
        raise CalibrationError("degenerate views: homographies do not constrain the intrinsics (parallel boards?)")
    b = Vt[-1]
    if b[0] < 0:
        b = -b
    B11, B12, B22, B13, B23, B33 = b
    den = B11 * B22 - B12 * B12
    if not (B11 > 0 and den > 0):
        raise CalibrationError("degenerate views: conic estimate is not positive definite")
    v0 = (B12 * B13 - B11 * B23) / den
    lam = B33 - (B13 * B13 + v0 * (B12 * B13 - B11 * B23)) / B11
    if not lam / B11 > 0:
        raise CalibrationError("degenerate views: conic estimate is not positive definite")
    alpha = np.sqrt(lam / B11)
    beta = np.sqrt(lam * B11 / den)
    gamma = -B12 * alpha * alpha * beta / lam
    u0 = gamma * v0 / beta - B13 * alpha * alpha / lam
    Kn = np.array([[alpha, gamma, u0], [0.0, beta, v0], [0.0, 0.0, 1.0]])
    K = np.linalg.solve(N, Kn)
    return Intrinsics(K[0, 0], K[1, 1], K[0, 2], K[1, 2], 0.0 if zero_skew else K[0, 1])


def extrinsics_from_homography(intr: Intrinsics, H: NDArray[np.float64]) -> RigidTransform:
    A = np.linalg.solve(intr.K, H)
    lam = 1.0 / np.linalg.norm(A[:, 0])
    if A[2, 2] * lam < 0:
        lam = -lam
    r1, r2, t = A[:, 0] * lam, A[:, 1] * lam, A[:, 2] * lam
    R = project_to_so3(np.column_stack([r1, r2, np.cross(r1, r2)]))
    return RigidTransform.from_rt(R, t)


_N_INTR = 9  # fx fy cx cy skew k1 k2 p1 p2


def _pack(intr: Intrinsics, dist: Distortion, poses: Sequence[RigidTransform]) -> NDArray[np.float64]:
    head = [intr.fx, intr.fy, intr.cx, intr.cy, intr.skew, *dist.as_array()]
    tail = [np.concatenate([so3_log(P.rotation), P.translation]) for P in poses]
    return np.concatenate([np.array(head), *tail])


def _unpack(x: NDArray[np.float64], n_views: int):
    intr = Intrinsics(*x[:5])
    dist = Distortion(*x[5:_N_INTR])
    poses = []
    for k in range(n_views):
        seg = x[_N_INTR + 6 * k:_N_INTR + 6 * (k + 1)]
        poses.append(RigidTransform.from_rt(so3_exp(seg[:3]), seg[3:]))
    return intr, dist, poses


def _residuals(x, obj_list, img_list, fix_skew):
    fx, fy, cx, cy, skew = x[:5]
    if fix_skew:
        skew = 0.0
    k1, k2, p1, p2 = x[5:_N_INTR]
    out = []
    for k, (obj, img) in enumerate(zip(obj_list, img_list)):
        seg = x[_N_INTR + 6 * k:_N_INTR + 6 * (k + 1)]
        p = obj @ so3_exp(seg[:3]).T + seg[3:]
        xn, yn = p[:, 0] / p[:, 2], p[:, 1] / p[:, 2]
        r2 = xn * xn + yn * yn
        rad = 1.0 + k1 * r2 + k2 * r2 * r2
        xd = xn * rad + 2 * p1 * xn * yn + p2 * (r2 + 2 * xn * xn)
        yd = yn * rad + p1 * (r2 + 2 * yn * yn) + 2 * p2 * xn * yn
        out.append(fx * xd + skew * yd + cx - img[:, 0])
        out.append(fy * yd + cy - img[:, 1])
    return np.concatenate(out)


def calibrate_planar(views: Sequence[TargetView], fix_skew: bool = True, refine: bool = True) -> CalibrationResult:
    """Estimate intrinsics, distortion and per-view board poses.

    Homography-based closed-form initialization, then Levenberg-Marquardt
    refinement of every parameter jointly.

    Raises:
        CalibrationError: fewer than 3 views or degenerate geometry.
    """
    views = list(views)
    if len(views) < 3:
        raise CalibrationError(f"need at least 3 views, got {len(views)}")
    for k, v in enumerate(views):
        if np.ptp(v.object_points[:, 2]) != 0 or np.any(v.object_points[:, 2] != 0):
            raise CalibrationError(f"view {k}: board points must lie on z = 0")
    Hs = [estimate_homography(v.object_points[:, :2], v.image_points) for v in views]
    intr = intrinsics_from_homographies(Hs, zero_skew=fix_skew)
    poses = [extrinsics_from_homography(intr, H) for H in Hs]
    dist = Distortion()
    nfev = 0
    obj_list = [v.object_points for v in views]
    img_list = [v.image_points for v in views]
    if refine:
        x0 = _pack(intr, dist, poses)
        free = np.ones(x0.size, dtype=bool)
        if fix_skew:
            free[4] = False

        def fun(xf):
            x = x0.copy()
            x[free] = xf
            return _residuals(x, obj_list, img_list, fix_skew)

        sol = least_squares(fun, x0[free], method="lm", x_scale="jac", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
        x = x0.copy()
        x[free] = sol.x
        intr, dist, poses = _unpack(x, len(views))
        nfev = int(sol.nfev)
    partial = CalibrationResult(intr, dist, tuple(poses), 0.0, nfev)
    rms = reprojection_error(partial, views)
    return CalibrationResult(intr, dist, tuple(poses), rms, nfev)


def reprojection_error(result: CalibrationResult, views: Sequence[TargetView]) -> float:
    """RMS over all points of the pixel residual norm."""
    views = list(views)
    if len(views) != len(result.extrinsics):
        raise ValueError(f"{len(views)} views but {len(result.extrinsics)} extrinsics")
    sq, n = 0.0, 0
    for pose, v in zip(result.extrinsics, views):
        px = project(result.intrinsics, result.distortion, pose.apply(v.object_points))
        sq += float(np.sum((px - v.image_points) ** 2))
        n += len(v.image_points)
    return float(np.sqrt(sq / n)) if n else 0.0


def passes_gate(rms: float, gate: float = CALIBRATION_GATE_PX) -> bool:
    return rms <= gate


# -- serialization ----------------------------------------------------------


def format_calibration(result: CalibrationResult) -> str:
    i, d = result.intrinsics, result.distortion
    lines = [
        f"fx = {fmt(i.fx)}",
        f"fy = {fmt(i.fy)}",
        f"cx = {fmt(i.cx)}",
        f"cy = {fmt(i.cy)}",
        f"skew = {fmt(i.skew)}",
        f"k1 = {fmt(d.k1)}",
        f"k2 = {fmt(d.k2)}",
        f"p1 = {fmt(d.p1)}",
        f"p2 = {fmt(d.p2)}",
        f"rms_reprojection = {fmt(result.rms_reprojection)}",
        f"views = {len(result.extrinsics)}",
    ]
    lines += [f"view.{k} = {format_transform(T)}" for k, T in enumerate(result.extrinsics)]
    return "\n".join(lines) + "\n"


def parse_calibration(text: str) -> CalibrationResult:
    kv = parse_kv(text)
    intr = Intrinsics(*(float(kv[k]) for k in ("fx", "fy", "cx", "cy", "skew")))
    dist = Distortion(*(float(kv[k]) for k in ("k1", "k2", "p1", "p2")))
    n = int(kv.get("views", "0"))
    poses = tuple(parse_transform_line(kv[f"view.{k}"], tol=1e-9) for k in range(n))
    return CalibrationResult(intr, dist, poses, float(kv["rms_reprojection"]))


def write_calibration(path: str | Path, result: CalibrationResult) -> None:
    Path(path).write_text(format_calibration(result), encoding="utf-8")


def read_calibration(path: str | Path) -> CalibrationResult:
    return parse_calibration(Path(path).read_text(encoding="utf-8"))
