"""Eye-in-hand sensing: camera pose from the arm, oracle detections, depth.

Depth comes either straight from a ray cast into the scene (``analytic``)
or from rendering a textured rectified pair and running the stereo matcher
(``stereo``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from numpy.typing import NDArray

from ..camera import Distortion, Intrinsics, StereoRig, project
from ..dataset import ClassMap, Lithology
from ..detection import ConfusionSpec, Detection, OracleDetector, SceneView, Silhouette
from ..geometry import RigidTransform
from ..kinematics import DhChain, forward_kinematics
from ..sizing import Grade, grade as grade_of
from ..stereo import compute_disparity
from .scene import AggregateSpec, Scene

#: Camera mount: no rotation, 3 cm along the effector y axis.
DEFAULT_T_CE = RigidTransform.from_rt(np.eye(3), [0.0, 0.03, 0.0])
TEXTURE_CELL_M = 0.001
STEREO_PATCH = 2


def default_rig(width: int = 320, height: int = 240, focal_px: float = 250.0, baseline_m: float = 0.02) -> StereoRig:
    intr = Intrinsics(focal_px, focal_px, (width - 1) / 2.0, (height - 1) / 2.0)
    return StereoRig.rectified(intr, baseline_m)


@dataclass(frozen=True)
class SensorModel:
    rig: StereoRig
    T_CE: RigidTransform = DEFAULT_T_CE
    width: int = 320
    height: int = 240
    confusion: ConfusionSpec = field(default_factory=ConfusionSpec.identity)
    class_map: ClassMap = field(default_factory=ClassMap.default)
    box_noise_px: float = 1.0
    depth_noise_m: float = 0.0
    fidelity: str = "analytic"
    d_max: int = 63

    @property
    def intrinsics(self) -> Intrinsics:
        return self.rig.left

    @property
    def distortion(self) -> Distortion:
        return self.rig.left_dist


@dataclass(frozen=True)
class Sensed:
    detection: Detection
    depth: float  # camera-frame z at the box center, NaN if unavailable
    camera_pose: RigidTransform  # camera in base frame


def camera_pose(chain: DhChain, q, T_CE: RigidTransform) -> RigidTransform:
    """Camera pose in the base frame for joint vector ``q`` (eye-in-hand)."""
    return forward_kinematics(chain, q) @ T_CE


# -- ray casting ------------------------------------------------------------


def ray_cast(scene: Scene, ids: Iterable[int], origin: NDArray, dirs: NDArray):
    """Nearest hit along each ray (N, 3) from ``origin``.

    Returns ``(t, face_id, hit_points)``; ``face_id`` is ``6*ident + face``
    for aggregate faces and -1 for the work plane, -2 for a miss.
    """
    dirs = np.atleast_2d(dirs)
    n = dirs.shape[0]
    best_t = np.full(n, np.inf)
    face = np.full(n, -2, dtype=np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        tp = (scene.plane_z - origin[2]) / dirs[:, 2]
    hit = np.isfinite(tp) & (tp > 0)
    best_t[hit] = tp[hit]
    face[hit] = -1
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
    for ident in ids:
        lo, hi = _aggregate_bounds(scene, ident)
        with np.errstate(invalid="ignore"):
            t1 = (lo - origin) * inv
            t2 = (hi - origin) * inv
        tmin = np.minimum(t1, t2)
        tmax = np.maximum(t1, t2)
        tmin = np.where(np.isnan(tmin), -np.inf, tmin)
        tmax = np.where(np.isnan(tmax), np.inf, tmax)
        enter = tmin.max(axis=1)
        leave = tmax.min(axis=1)
        axis = tmin.argmax(axis=1)
        ok = (enter <= leave) & (enter > 0) & (enter < best_t)
        best_t[ok] = enter[ok]
        # face index: 2*axis for the low side, 2*axis+1 for the high side
        side = dirs[np.arange(n), axis] < 0
        face[ok] = 6 * ident + 2 * axis[ok] + side[ok]
    pts = origin + dirs * best_t[:, None]
    return best_t, face, pts


def _aggregate_bounds(scene: Scene, ident: int):
    return scene.aggregate(ident).bounds()


def _pixel_rays(intr: Intrinsics, T_CB: RigidTransform, uv: NDArray) -> NDArray:
    x = (uv[:, 0] - intr.cx - intr.skew * (uv[:, 1] - intr.cy) / intr.fy) / intr.fx
    y = (uv[:, 1] - intr.cy) / intr.fy
    d_cam = np.stack([x, y, np.ones_like(x)], axis=1)
    return d_cam @ T_CB.rotation.T


def depth_at(scene: Scene, ids: Iterable[int], intr: Intrinsics, T_CB: RigidTransform, uv) -> float:
    """Camera-frame depth of the first surface seen through pixel ``uv``."""
    dirs = _pixel_rays(intr, T_CB, np.asarray(uv, dtype=float).reshape(1, 2))
    t, face, _ = ray_cast(scene, ids, T_CB.translation, dirs)
    # rays have unit camera-frame z, so the ray parameter is the depth
    return float(t[0]) if face[0] != -2 else math.nan


# -- rendering --------------------------------------------------------------


def _hash_u8(a: NDArray[np.int64], b: NDArray[np.int64], c: NDArray[np.int64]) -> NDArray[np.uint8]:
    x = (a.astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)) ^ (b.astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)) \
        ^ (c.astype(np.uint64) * np.uint64(0x165667B19E3779F9))
    x ^= x >> np.uint64(33)
    x *= np.uint64(0xFF51AFD7ED558CCD)
    x ^= x >> np.uint64(33)
    return (x & np.uint64(0xFF)).astype(np.uint8)


def render_view(scene: Scene, ids: Iterable[int], intr: Intrinsics, T_CB: RigidTransform,
                width: int, height: int) -> NDArray[np.uint8]:
    """Gray image with a world-anchored random texture, so both stereo views agree."""
    ids = list(ids)
    u, v = np.meshgrid(np.arange(width, dtype=float), np.arange(height, dtype=float))
    uv = np.stack([u.ravel(), v.ravel()], axis=1)
    dirs = _pixel_rays(intr, T_CB, uv)
    _, face, pts = ray_cast(scene, ids, T_CB.translation, dirs)
    cells = np.floor(pts / TEXTURE_CELL_M).astype(np.int64)
    # hash the two in-face coordinates; the face's own constant axis is dropped
    axis = np.where(face >= 0, (face % 6) // 2, 2)
    keep = np.array([[1, 2], [0, 2], [0, 1]])[axis]
    a = np.take_along_axis(cells, keep[:, :1], axis=1)[:, 0]
    b = np.take_along_axis(cells, keep[:, 1:], axis=1)[:, 0]
    img = _hash_u8(a, b, face + 7)
    img[face == -2] = 0
    return img.reshape(height, width)


def render_pair(scene: Scene, ids: Iterable[int], sensor: SensorModel, T_CB: RigidTransform):
    ids = list(ids)
    rig = sensor.rig
    T_right = T_CB @ RigidTransform.from_rt(rig.rotation.T, -rig.rotation.T @ rig.translation)
    left = render_view(scene, ids, rig.left, T_CB, sensor.width, sensor.height)
    right = render_view(scene, ids, rig.right, T_right, sensor.width, sensor.height)
    return left, right


def stereo_depth_at(disp: NDArray[np.int32], uv, fx: float, baseline: float, patch: int = STEREO_PATCH) -> float:
    """Depth from the median valid disparity in a small window around ``uv``."""
    H, W = disp.shape
    u, v = int(round(uv[0])), int(round(uv[1]))
    win = disp[max(0, v - patch):min(H, v + patch + 1), max(0, u - patch):min(W, u + patch + 1)]
    good = win[win > 0]
    if good.size == 0:
        return math.nan
    return fx * baseline / float(np.median(good))


# -- sensing ----------------------------------------------------------------


def silhouette(agg: AggregateSpec, intr: Intrinsics, dist: Distortion, T_CB: RigidTransform) -> Silhouette | None:
    p_cam = T_CB.inverse().apply(agg.corners())
    if np.any(p_cam[:, 2] <= 0):
        return None
    g = grade_of(agg.diagonal_cm)
    grade = 1 if g is Grade.REJECTED else g.value
    return Silhouette(agg.ident, agg.lithology, grade, project(intr, dist, p_cam))


def sense(
    scene: Scene,
    present: Iterable[int],
    chain: DhChain,
    q,
    sensor: SensorModel,
    det_rng: np.random.Generator,
    depth_rng: np.random.Generator | None = None,
) -> list[Sensed]:
    """Detections with depth at each box center for the arm at ``q``.

    Only aggregates listed in ``present`` are considered; anything behind
    the camera or entirely outside the image is absent.
    """
    present = sorted(present)
    T_CB = camera_pose(chain, q, sensor.T_CE)
    intr, dist = sensor.intrinsics, sensor.distortion
    sils = [s for s in (silhouette(scene.aggregate(i), intr, dist, T_CB) for i in present) if s is not None]
    view = SceneView(sensor.width, sensor.height, tuple(sils))
    dets = OracleDetector(sensor.confusion, sensor.class_map, sensor.box_noise_px).detect(view, det_rng)
    disp = None
    if sensor.fidelity == "stereo" and dets:
        left, right = render_pair(scene, present, sensor, T_CB)
        disp = compute_disparity(left, right, sensor.d_max).disparity
    out = []
    for d in dets:
        if disp is None:
            z = depth_at(scene, present, intr, T_CB, d.center)
        else:
            z = stereo_depth_at(disp, d.center, intr.fx, sensor.rig.baseline)
        if sensor.depth_noise_m > 0 and math.isfinite(z):
            rng = depth_rng if depth_rng is not None else det_rng
            z += float(rng.normal(scale=sensor.depth_noise_m))
        out.append(Sensed(d, z, T_CB))
    return out


def reported_lithology(det: Detection, class_map: ClassMap) -> Lithology:
    return class_map.decode(det.class_index)[0]
