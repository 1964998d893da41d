"""Camera/effector/base frame bookkeeping and eye-in-hand calibration (AX = XB).

Conventions used throughout:

* ``T_CE`` is the camera pose expressed in the effector frame, so it maps
  camera coordinates to effector coordinates: ``p_E = T_CE p_C``.
* ``T_EB`` is the effector pose in the base frame (what forward kinematics
  returns): ``p_B = T_EB p_E``.
* A motion pair ``(A, B)`` satisfies ``A X = X B`` with ``X = T_CE``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .geometry import (
    COMPUTED_TOL,
    RigidTransform,
    format_transform,
    geodesic_distance,
    hat,
    load_transforms,
    parse_transform_line,
    project_to_so3,
    so3_log,
)
from .textio import fmt, parse_kv

#: Pairs whose rotation and translation are both below these are uninformative.
IDENTITY_ROT_TOL = 1e-9
IDENTITY_TRANS_TOL = 1e-12
#: Relative singular-value floor for the stacked linear systems.
RANK_TOL = 1e-8
RECOMMENDED_MIN_PAIRS = 5


class Frame(enum.Enum):
    CAMERA = "camera"
    EFFECTOR = "effector"
    BASE = "base"


FrameTag = Frame


class FrameMismatchError(ValueError):
    pass


class HandEyeError(ValueError):
    pass


class DegenerateMotionError(HandEyeError):
    """Raised when the motions do not determine X; carries the observed rank."""

    def __init__(self, message: str, rank: int, singular_values: NDArray[np.float64]):
        super().__init__(message)
        self.rank = rank
        self.singular_values = singular_values


@dataclass(frozen=True)
class TaggedPoint:
    frame: Frame
    xyz: tuple[float, float, float]

    def __post_init__(self) -> None:
        v = tuple(float(c) for c in np.asarray(self.xyz, dtype=float).reshape(3))
        object.__setattr__(self, "xyz", v)

    @property
    def array(self) -> NDArray[np.float64]:
        return np.array(self.xyz)


def _require(p: TaggedPoint, frame: Frame) -> None:
    if not isinstance(p, TaggedPoint):
        raise FrameMismatchError(f"expected a {frame.value}-frame TaggedPoint, got {type(p).__name__}")
    if p.frame is not frame:
        raise FrameMismatchError(f"expected a {frame.value}-frame point, got {p.frame.value}")


def camera_to_effector(T_CE: RigidTransform, p_c: TaggedPoint) -> TaggedPoint:
    _require(p_c, Frame.CAMERA)
    return TaggedPoint(Frame.EFFECTOR, T_CE.apply(p_c.array))


def effector_to_base(T_EB: RigidTransform, p_e: TaggedPoint) -> TaggedPoint:
    _require(p_e, Frame.EFFECTOR)
    return TaggedPoint(Frame.BASE, T_EB.apply(p_e.array))


def camera_to_base(T_CE: RigidTransform, T_EB: RigidTransform, p_c: TaggedPoint) -> TaggedPoint:
    """``p_B = T_EB (T_CE p_C)``."""
    return effector_to_base(T_EB, camera_to_effector(T_CE, p_c))


def camera_pose_in_base(T_CE: RigidTransform, T_EB: RigidTransform) -> RigidTransform:
    return T_EB @ T_CE


# -- motion pairs -----------------------------------------------------------


@dataclass(frozen=True)
class MotionPair:
    A: RigidTransform
    B: RigidTransform

    @property
    def informative(self) -> bool:
        for T in (self.A, self.B):
            if np.linalg.norm(so3_log(T.rotation)) > IDENTITY_ROT_TOL:
                return True
            if np.linalg.norm(T.translation) > IDENTITY_TRANS_TOL:
                return True
        return False

    @property
    def rotates(self) -> bool:
        return bool(np.linalg.norm(so3_log(self.A.rotation)) > IDENTITY_ROT_TOL)


def collect_motion_pairs(
    robot_poses: Sequence[RigidTransform], camera_target_poses: Sequence[RigidTransform]
) -> list[MotionPair]:
    """Consecutive relative motions.

    ``A_i = E_{i+1}^-1 E_i`` from effector poses and ``B_i = C_{i+1} C_i^-1``
    from target-in-camera poses, which gives ``A_i X = X B_i``.
    """
    if len(robot_poses) != len(camera_target_poses):
        raise HandEyeError(f"pose count mismatch: {len(robot_poses)} robot vs {len(camera_target_poses)} camera")
    if len(robot_poses) < 3:
        raise HandEyeError(f"need at least 3 poses, got {len(robot_poses)}")
    pairs = []
    for i in range(len(robot_poses) - 1):
        A = robot_poses[i + 1].inverse() @ robot_poses[i]
        B = camera_target_poses[i + 1] @ camera_target_poses[i].inverse()
        pairs.append(MotionPair(A, B))
    return pairs


# -- solver -----------------------------------------------------------------


@dataclass(frozen=True)
class HandEyeSolution:
    T_CE: RigidTransform
    rotation_residual: float
    translation_residual: float
    n_pairs: int
    method: str = "tsai"


def _rank(M: NDArray[np.float64]) -> tuple[int, NDArray[np.float64]]:
    sv = np.linalg.svd(M, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0, sv
    return int(np.sum(sv > RANK_TOL * sv[0])), sv


def _rotation_tsai(pairs: Sequence[MotionPair]) -> NDArray[np.float64]:
    # scaled axes 2 sin(theta/2) n; the Gibbs vector g of R_X solves
    # hat(a + b) g = b - a for every pair
    rows, rhs = [], []
    for p in pairs:
        a = _scaled_axis(p.A.rotation)
        b = _scaled_axis(p.B.rotation)
        rows.append(hat(a + b))
        rhs.append(b - a)
    M = np.vstack(rows)
    rank, sv = _rank(M)
    if rank < 3:
        raise DegenerateMotionError(
            f"rotation system has rank {rank} < 3: motion axes are parallel", rank, sv
        )
    g, *_ = np.linalg.lstsq(M, np.concatenate(rhs), rcond=None)
    gg = float(g @ g)
    R = ((1.0 - gg) * np.eye(3) + 2.0 * np.outer(g, g) + 2.0 * hat(g)) / (1.0 + gg)
    return project_to_so3(R)


def _scaled_axis(R: NDArray[np.float64]) -> NDArray[np.float64]:
    w = so3_log(R)
    th = float(np.linalg.norm(w))
    if th == 0.0:
        return w
    return 2.0 * np.sin(th / 2.0) * w / th


def _rotation_kabsch(pairs: Sequence[MotionPair]) -> NDArray[np.float64]:
    # log(R_A) = R_X log(R_B): orthogonal Procrustes on the rotation vectors
    alpha = np.array([so3_log(p.A.rotation) for p in pairs])
    beta = np.array([so3_log(p.B.rotation) for p in pairs])
    rank, sv = _rank(alpha)
    if rank < 2:
        raise DegenerateMotionError(
            f"rotation axes span rank {rank} < 2: motion axes are parallel", rank, sv
        )
    U, _, Vt = np.linalg.svd(alpha.T @ beta)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def solve_hand_eye(pairs: Sequence[MotionPair], method: str = "tsai") -> HandEyeSolution:
    """Least-squares ``X`` with ``A_i X = X B_i``; rotation first, then translation.

    Args:
        pairs: motion pairs; identity pairs are ignored.
        method: ``"tsai"`` (Gibbs-vector linear solve) or ``"kabsch"``
            (Procrustes on rotation vectors).

    Raises:
        HandEyeError: fewer than 2 informative pairs.
        DegenerateMotionError: parallel rotation axes (rank deficiency).
    """
    useful = [p for p in pairs if p.informative]
    if len(useful) < 2:
        raise HandEyeError(
            f"underdetermined: {len(useful)} informative pair(s) of {len(pairs)}; need at least 2"
        )
    rotating = [p for p in useful if p.rotates]
    if len(rotating) < 2:
        raise DegenerateMotionError("fewer than 2 pairs with a rotation", len(rotating), np.zeros(0))
    if method == "tsai":
        R_X = _rotation_tsai(rotating)
    elif method == "kabsch":
        R_X = _rotation_kabsch(rotating)
    else:
        raise ValueError(f"unknown hand-eye method {method!r}")
    C = np.vstack([p.A.rotation - np.eye(3) for p in useful])
    d = np.concatenate([R_X @ p.B.translation - p.A.translation for p in useful])
    rank, sv = _rank(C)
    if rank < 3:
        raise DegenerateMotionError(
            f"translation system has rank {rank} < 3: motion axes are parallel", rank, sv
        )
    t_X, *_ = np.linalg.lstsq(C, d, rcond=None)
    X = RigidTransform.from_rt(R_X, t_X, tol=COMPUTED_TOL)
    rot_res, trans_res = pair_residuals(X, pairs)
    return HandEyeSolution(X, rot_res, trans_res, len(pairs), method)


def pair_residuals(X: RigidTransform, pairs: Sequence[MotionPair]) -> tuple[float, float]:
    """Max rotation (rad) and translation (m) mismatch of ``A X`` vs ``X B``."""
    rot, trans = 0.0, 0.0
    for p in pairs:
        L, R = p.A @ X, X @ p.B
        rot = max(rot, geodesic_distance(L.rotation, R.rotation))
        trans = max(trans, float(np.linalg.norm(L.translation - R.translation)))
    return rot, trans


def synthesize_pairs(
    X: RigidTransform,
    n_poses: int,
    rng: np.random.Generator,
    target: RigidTransform | None = None,
    noise_rot: float = 0.0,
    noise_trans: float = 0.0,
) -> tuple[list[RigidTransform], list[RigidTransform]]:
    """Random effector poses and the target-in-camera poses they would observe.

    Optional isotropic noise (radians, meters) perturbs the camera observations.
    """
    from .geometry import random_transform, so3_exp

    target = target or RigidTransform.from_rt(np.eye(3), [0.3, 0.0, -0.1])
    robot, cam = [], []
    for _ in range(n_poses):
        E = random_transform(rng, 0.3)
        C = (E @ X).inverse() @ target
        if noise_rot or noise_trans:
            dR = so3_exp(rng.normal(scale=noise_rot, size=3))
            C = RigidTransform.from_rt(dR @ C.rotation, C.translation + rng.normal(scale=noise_trans, size=3))
        robot.append(E)
        cam.append(C)
    return robot, cam


# -- file I/O ---------------------------------------------------------------


def dump_pairs(pairs: Sequence[MotionPair]) -> str:
    lines = []
    for p in pairs:
        lines.append(format_transform(p.A))
        lines.append(format_transform(p.B))
    return "\n".join(lines) + "\n"


def load_pairs(text: str, tol: float = 1e-6) -> list[MotionPair]:
    Ts = load_transforms(text, tol)
    if len(Ts) % 2:
        raise HandEyeError(f"motion-pair file has an odd number of transforms ({len(Ts)})")
    return [MotionPair(Ts[i], Ts[i + 1]) for i in range(0, len(Ts), 2)]


def format_solution(sol: HandEyeSolution) -> str:
    return (
        f"T_CE = {format_transform(sol.T_CE)}\n"
        f"rotation_residual = {fmt(sol.rotation_residual)}\n"
        f"translation_residual = {fmt(sol.translation_residual)}\n"
        f"pairs = {sol.n_pairs}\n"
        f"method = {sol.method}\n"
    )


def parse_solution(text: str) -> HandEyeSolution:
    kv = parse_kv(text)
    return HandEyeSolution(
        parse_transform_line(kv["T_CE"], tol=COMPUTED_TOL),
        float(kv["rotation_residual"]),
        float(kv["translation_residual"]),
        int(kv["pairs"]),
        kv.get("method", "tsai"),
    )


def write_solution(path: str | Path, sol: HandEyeSolution) -> None:
    Path(path).write_text(format_solution(sol), encoding="utf-8")


def read_solution(path: str | Path) -> HandEyeSolution:
    return parse_solution(Path(path).read_text(encoding="utf-8"))


def apply_chain(T_CE: RigidTransform, T_EB: RigidTransform, p_c: ArrayLike) -> NDArray[np.float64]:
    """Untagged convenience: base-frame coordinates of camera-frame point(s)."""
    return (T_EB @ T_CE).apply(p_c)
