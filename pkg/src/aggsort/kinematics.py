"""Denavit-Hartenberg model of the 5-revolute-joint sorting arm.

Link transforms use the modified (Craig) convention

    T_i = RotX(alpha_{i-1}) TransX(a_{i-1}) RotZ(theta_i) TransZ(d_i)

and each :class:`DhRow` holds the ``(a, alpha)`` that fill the
``a_{i-1}, alpha_{i-1}`` slots of its own link transform. With the
JetArm table this puts the two 0.1294 m links after joints 2 and 3, which
gives the 0.2588 m reach at the home configuration.

Forward kinematics exists twice: as a chain product of link matrices and
as a hand-expanded position formula. The two are independent and are
cross-checked in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .geometry import RigidTransform, geodesic_distance, rot_z

N_JOINTS = 5
#: Twist pattern the analytic solver and closed form are written for.
JETARM_TWIST = (0.0, -math.pi / 2, 0.0, 0.0, -math.pi / 2)
#: Approach-down tool orientation at theta1 = theta5 (z_tool = -z_base).
FLIP = np.diag([1.0, -1.0, -1.0])

JointVector = NDArray[np.float64]


class JointLimitError(ValueError):
    pass


@dataclass(frozen=True)
class DhRow:
    """One row of the DH table; lengths in meters, angles in radians."""

    theta_offset: float = 0.0
    d: float = 0.0
    a: float = 0.0
    alpha: float = 0.0

    def __post_init__(self) -> None:
        for name in ("theta_offset", "d", "a", "alpha"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"DH {name} must be finite")


@dataclass(frozen=True)
class DhChain:
    rows: tuple[DhRow, ...]
    lower: tuple[float, ...] = (-math.pi,) * N_JOINTS
    upper: tuple[float, ...] = (math.pi,) * N_JOINTS

    def __post_init__(self) -> None:
        object.__setattr__(self, "rows", tuple(self.rows))
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        if len(self.rows) != N_JOINTS:
            raise ValueError(f"chain must have {N_JOINTS} rows, got {len(self.rows)}")
        if len(self.lower) != N_JOINTS or len(self.upper) != N_JOINTS:
            raise ValueError("joint limits must have one entry per joint")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("lower joint limit above upper limit")

    @property
    def reach(self) -> float:
        """Upper bound on the distance of the tool point from the base origin."""
        r = self.rows
        return sum(abs(row.a) for row in r) + sum(abs(row.d) for row in r)

    def within_limits(self, q: ArrayLike, tol: float = 1e-12) -> bool:
        q = np.asarray(q, dtype=float)
        return bool(np.all(q >= np.asarray(self.lower) - tol) and np.all(q <= np.asarray(self.upper) + tol))

    def check_limits(self, q: ArrayLike) -> None:
        q = np.asarray(q, dtype=float)
        if q.shape != (N_JOINTS,):
            raise ValueError(f"joint vector must have {N_JOINTS} entries, got {q.shape}")
        if not np.all(np.isfinite(q)):
            raise ValueError("joint vector must be finite")
        if not self.within_limits(q):
            raise JointLimitError(f"joint vector {np.round(q, 6)} outside limits")


def jetarm() -> DhChain:
    """The five kinematic joints of the JetArm (gripper servo excluded)."""
    deg = math.radians
    return DhChain(
        rows=(
            DhRow(0.0, 0.0, 0.0, deg(0.0)),
            DhRow(0.0, 0.0, 0.0, deg(-90.0)),
            DhRow(0.0, 0.0, 0.1294, deg(0.0)),
            DhRow(0.0, 0.0, 0.1294, deg(0.0)),
            DhRow(0.0, 0.0, 0.0, deg(-90.0)),
        )
    )


PROFILES = {"jetarm": jetarm}


def get_profile(name: str) -> DhChain:
    try:
        return PROFILES[name]()
    except KeyError:
        raise ValueError(f"unknown DH profile {name!r}; known: {sorted(PROFILES)}") from None


def parse_chain(text: str) -> DhChain:
    """Parse ``theta_offset_deg d_m a_m alpha_deg`` rows, one per line."""
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.replace(",", " ").split()
        if len(fields) != 4:
            raise ValueError(f"line {lineno}: expected 4 fields, got {len(fields)}")
        off, d, a, alpha = (float(f) for f in fields)
        rows.append(DhRow(math.radians(off), d, a, math.radians(alpha)))
    return DhChain(tuple(rows))


def load_chain(path_or_profile: str | Path) -> DhChain:
    if str(path_or_profile) in PROFILES:
        return get_profile(str(path_or_profile))
    return parse_chain(Path(path_or_profile).read_text(encoding="utf-8"))


def format_chain(chain: DhChain) -> str:
    lines = ["# theta_offset_deg d_m a_m alpha_deg"]
    for r in chain.rows:
        lines.append(f"{math.degrees(r.theta_offset):.10g} {r.d:.10g} {r.a:.10g} {math.degrees(r.alpha):.10g}")
    return "\n".join(lines) + "\n"


def wrap_angle(x: ArrayLike) -> NDArray[np.float64] | float:
    """Wrap to (-pi, pi]."""
    y = np.pi - np.mod(np.pi - np.asarray(x, dtype=float), 2 * np.pi)
    return float(y) if np.ndim(y) == 0 else y


def dh_link_transform(row: DhRow, theta: float) -> RigidTransform:
    return RigidTransform(_link_matrix(row, theta))


def _link_matrix(row: DhRow, theta: float) -> NDArray[np.float64]:
    th = theta + row.theta_offset
    ct, st = math.cos(th), math.sin(th)
    ca, sa = math.cos(row.alpha), math.sin(row.alpha)
    return np.array(
        [
            [ct, -st, 0.0, row.a],
            [st * ca, ct * ca, -sa, -sa * row.d],
            [st * sa, ct * sa, ca, ca * row.d],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def forward_kinematics(chain: DhChain, q: ArrayLike, check_limits: bool = True) -> RigidTransform:
    """Tool pose in the base frame as the product of the five link transforms."""
    q = np.asarray(q, dtype=float)
    if check_limits:
        chain.check_limits(q)
    m = np.eye(4)
    for row, theta in zip(chain.rows, q):
        m = m @ _link_matrix(row, float(theta))
    m[3] = (0.0, 0.0, 0.0, 1.0)
    return RigidTransform(m)


def _require_jetarm_topology(chain: DhChain) -> None:
    twists = tuple(r.alpha for r in chain.rows)
    if any(abs(wrap_angle(a - b)) > 1e-12 for a, b in zip(twists, JETARM_TWIST)):
        raise ValueError("closed form and analytic IK need the (0, -90, 0, 0, -90) deg twist pattern")


def closed_form_position(chain: DhChain, q: ArrayLike) -> NDArray[np.float64]:
    """Tool position from the hand-expanded product, no matrix products.

    With the slot values a1..a4, d1..d5 and s_ij = sin(t_i + t_j) etc.:

        R   = a1 + a2 c2 + a3 c23 + a4 c234 - d5 s234
        D   = d2 + d3 + d4
        p_x = a0 + c1 R - s1 D
        p_y =      s1 R + c1 D
        p_z = d1 - (a2 s2 + a3 s23 + a4 s234 + d5 c234)

    On the slice t2 + t3 + t4 = 0 this is p_x = c1 (c23 a3 + c2 a2 + a4),
    p_z = -d5 - s23 a3 - s2 a2, the textbook form for this arm.
    """
    _require_jetarm_topology(chain)
    q = np.asarray(q, dtype=float)
    t = q + np.array([r.theta_offset for r in chain.rows])
    a0, a1, a2, a3, a4 = (r.a for r in chain.rows)
    d1, d2, d3, d4, d5 = (r.d for r in chain.rows)
    c1, s1 = math.cos(t[0]), math.sin(t[0])
    t2, t23, t234 = t[1], t[1] + t[2], t[1] + t[2] + t[3]
    radial = a1 + a2 * math.cos(t2) + a3 * math.cos(t23) + a4 * math.cos(t234) - d5 * math.sin(t234)
    lateral = d2 + d3 + d4
    return np.array(
        [
            a0 + c1 * radial - s1 * lateral,
            s1 * radial + c1 * lateral,
            d1 - (a2 * math.sin(t2) + a3 * math.sin(t23) + a4 * math.sin(t234) + d5 * math.cos(t234)),
        ]
    )


class IkFailure(str, Enum):
    OUT_OF_REACH = "out-of-reach"
    ORIENTATION_INFEASIBLE = "orientation-infeasible"
    JOINT_LIMITS = "joint-limits"


@dataclass(frozen=True)
class IkSolution:
    q: JointVector
    elbow: int  # sign picked for the arccos of theta3
    base: int  # +1 when the arm reaches toward the target, -1 when over the back


@dataclass(frozen=True)
class IkSolutionSet:
    solutions: tuple[IkSolution, ...] = ()
    reason: IkFailure | None = None

    def __iter__(self) -> Iterator[IkSolution]:
        return iter(self.solutions)

    def __len__(self) -> int:
        return len(self.solutions)

    def __bool__(self) -> bool:
        return bool(self.solutions)

    @property
    def joint_vectors(self) -> list[JointVector]:
        return [s.q for s in self.solutions]


def _planar_two_link(
    x: float, y: float, l1: float, l2: float, tol: float, free_angle: float
) -> list[tuple[float, float, int]]:
    """Angles (t2, t3, elbow) putting a two-link planar chain's tip at (x, y)."""
    r2 = x * x + y * y
    if l1 > 0.0 and l2 > 0.0:
        r = math.hypot(x, y)
        outer, inner = l1 + l2, abs(l1 - l2)
        if r > outer * (1.0 + tol) or r < inner - tol * outer:
            return []
        # factored 1 - c3 and 1 + c3 keep theta3 accurate at full extension
        span = 2.0 * l1 * l2
        one_minus = max(0.0, (outer - r) * (outer + r)) / span
        one_plus = max(0.0, (r - inner) * (r + inner)) / span
        c3 = min(1.0, max(-1.0, (r2 - l1 * l1 - l2 * l2) / span))
        s3 = math.sqrt(one_minus * one_plus)
        out = []
        for elbow in (1, -1) if s3 > 0.0 else (1,):
            t3 = math.atan2(elbow * s3, c3)
            t2 = math.atan2(y, x) - math.atan2(l2 * elbow * s3, l1 + l2 * c3)
            out.append((t2, t3, elbow))
        return out
    length = l1 + l2
    if abs(math.sqrt(r2) - length) > tol * max(length, 1.0):
        return []
    heading = math.atan2(y, x) if length > 0.0 else free_angle
    if l1 > 0.0:
        return [(heading, free_angle, 1)]
    # first link has zero length: its angle is free, the second carries the heading
    return [(free_angle, heading - free_angle, 1)]


def inverse_kinematics(
    chain: DhChain,
    target: RigidTransform,
    reference: ArrayLike | None = None,
    orientation_tol: float = 1e-6,
    reach_tol: float = 1e-9,
) -> IkSolutionSet:
    """All analytic joint solutions reaching ``target``.

    The wrist is locked to theta4 = -(theta2 + theta3), so the tool axis is
    always vertical (pointing down for the JetArm table) and only the yaw
    about it is free. Targets with any other approach direction come back
    empty with :attr:`IkFailure.ORIENTATION_INFEASIBLE`.

    ``reference`` resolves the free joints at singular targets (tool over
    the base axis); zero is used when it is not given.
    """
    _require_jetarm_topology(chain)
    offs = np.array([r.theta_offset for r in chain.rows])
    if abs(wrap_angle(offs[1] + offs[2] + offs[3])) > 1e-12:
        raise ValueError("analytic IK needs theta offsets of joints 2-4 summing to zero")
    ref = np.zeros(N_JOINTS) if reference is None else np.asarray(reference, dtype=float)

    R = target.rotation
    p = target.translation
    psi = math.atan2(R[1, 0], R[0, 0])  # t1 - t5
    if geodesic_distance(R, rot_z(psi) @ FLIP) > orientation_tol:
        return IkSolutionSet(reason=IkFailure.ORIENTATION_INFEASIBLE)

    a0, a1, a2, a3, a4 = (r.a for r in chain.rows)
    d1, d2, d3, d4, d5 = (r.d for r in chain.rows)
    lateral = d2 + d3 + d4
    xb, yb = p[0] - a0, p[1]
    rho2 = xb * xb + yb * yb
    if rho2 < lateral * lateral - reach_tol:
        return IkSolutionSet(reason=IkFailure.OUT_OF_REACH)
    radial_abs = math.sqrt(max(0.0, rho2 - lateral * lateral))

    if math.sqrt(rho2) < 1e-12:
        branches = [(ref[0] + offs[0], 0.0, 1)]
    else:
        heading = math.atan2(yb, xb)
        branches = [(heading - math.atan2(lateral, s * radial_abs), s * radial_abs, s) for s in (1, -1)]
        if radial_abs == 0.0:
            branches = branches[:1]

    candidates: list[IkSolution] = []
    for t1, radial, base in branches:
        px = radial - a1 - a4
        pz = d1 - d5 - p[2]
        for t2, t3, elbow in _planar_two_link(px, pz, a2, a3, reach_tol, ref[1] + offs[1]):
            q1 = t1 - offs[0]
            q2 = t2 - offs[1]
            q3 = t3 - offs[2]
            q4 = -(q2 + q3)
            q5 = (t1 - psi) - offs[4]
            q = wrap_angle(np.array([q1, q2, q3, q4, q5]))
            candidates.append(IkSolution(q, elbow, base))

    if not candidates:
        return IkSolutionSet(reason=IkFailure.OUT_OF_REACH)
    unique: list[IkSolution] = []
    for cand in candidates:
        if not any(np.all(np.abs(wrap_angle(cand.q - u.q)) <= 1e-9) for u in unique):
            unique.append(cand)
    feasible = [s for s in unique if chain.within_limits(s.q)]
    if not feasible:
        return IkSolutionSet(reason=IkFailure.JOINT_LIMITS)
    return IkSolutionSet(tuple(feasible))


def joint_distance(q: ArrayLike, reference: ArrayLike, weights: ArrayLike | None = None) -> float:
    """Weighted squared joint distance, angle differences wrapped."""
    diff = wrap_angle(np.asarray(q, dtype=float) - np.asarray(reference, dtype=float))
    w = np.ones(N_JOINTS) if weights is None else np.asarray(weights, dtype=float)
    return float(np.sum(w * np.square(diff)))


def select_solution(
    solutions: IkSolutionSet | Sequence[IkSolution] | Sequence[ArrayLike],
    reference: ArrayLike,
    weights: ArrayLike | None = None,
) -> JointVector:
    """The member closest to ``reference``; ties go to the earliest member."""
    qs = [np.asarray(s.q if isinstance(s, IkSolution) else s, dtype=float) for s in solutions]
    if not qs:
        raise ValueError("cannot select from an empty solution set")
    costs = [joint_distance(q, reference, weights) for q in qs]
    return qs[int(np.argmin(costs))]


def deg(values: ArrayLike) -> NDArray[np.float64]:
    """Degrees to radians for joint vectors given at the CLI/config boundary."""
    return np.radians(np.asarray(values, dtype=float))

