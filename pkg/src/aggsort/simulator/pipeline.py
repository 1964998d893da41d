"""Sorting state machine: one call to :func:`step_pipeline` is one phase transition.

Phase graph::

    LoadEnv -> Search
    Search  -> Search | Detect | Done
    Detect  -> Localize
    Localize -> Measure | Search        (target lost or unreachable)
    Measure -> PlanGrasp | Search       (rejected size)
    PlanGrasp -> Grasp | Search         (no IK solution)
    Grasp   -> Place | Search           (dropped)
    Place   -> Search
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from ..dataset import Lithology, REPORT_ORDER
from ..handeye import Frame, TaggedPoint, camera_to_base
from ..kinematics import DhChain, inverse_kinematics, select_solution
from ..sizing import Grade, GradeBands, assess, measure_box
from ..stereo import DepthOutOfRangeError, locate_3d
from .scene import Scene, downward_pose
from .sensing import Sensed, SensorModel, reported_lithology, sense


class Phase(enum.Enum):
    LOAD_ENV = "LoadEnv"
    SEARCH = "Search"
    DETECT = "Detect"
    LOCALIZE = "Localize"
    MEASURE = "Measure"
    PLAN_GRASP = "PlanGrasp"
    GRASP = "Grasp"
    PLACE = "Place"
    DONE = "Done"


TRANSITIONS: dict[Phase, frozenset[Phase]] = {
    Phase.LOAD_ENV: frozenset({Phase.SEARCH}),
    Phase.SEARCH: frozenset({Phase.SEARCH, Phase.DETECT, Phase.DONE}),
    Phase.DETECT: frozenset({Phase.LOCALIZE}),
    Phase.LOCALIZE: frozenset({Phase.MEASURE, Phase.SEARCH}),
    Phase.MEASURE: frozenset({Phase.PLAN_GRASP, Phase.SEARCH}),
    Phase.PLAN_GRASP: frozenset({Phase.GRASP, Phase.SEARCH}),
    Phase.GRASP: frozenset({Phase.PLACE, Phase.SEARCH}),
    Phase.PLACE: frozenset({Phase.SEARCH}),
    Phase.DONE: frozenset(),
}


class PipelineError(RuntimeError):
    pass


@dataclass(frozen=True)
class Tally:
    attempted: int = 0
    grasp_successes: int = 0
    correct: int = 0


@dataclass(frozen=True)
class Target:
    """What the pipeline currently believes about the aggregate it is handling."""

    detection: Sensed
    reported: Lithology
    top_base: tuple[float, float, float] | None = None
    centroid_base: tuple[float, float, float] | None = None
    dims_cm: tuple[float, float, float] | None = None
    grade: Grade | None = None
    grasp_q: tuple[float, ...] | None = None
    ident: int = -1  # bookkeeping link to the scene; never used for decisions


@dataclass(frozen=True)
class PipelineConfig:
    chain: DhChain
    sensor: SensorModel
    grasp: Callable[[float, np.random.Generator], bool]
    bands: GradeBands = GradeBands()
    survey_points: tuple[tuple[float, float, float], ...] = ((0.09, -0.15, 0.10), (0.09, 0.0, 0.10), (0.09, 0.15, 0.10))
    center_height: float = 0.05
    depth_range: tuple[float, float] | None = (0.05, 2.5)
    center_iterations: int = 8
    center_tol: float = 1e-12
    home: tuple[float, ...] = (0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class PipelineState:
    phase: Phase
    initial: int
    remaining: tuple[int, ...]
    bins: tuple[tuple[Lithology, tuple[int, ...]], ...] = tuple((l, ()) for l in REPORT_ORDER)
    dropped: tuple[int, ...] = ()
    skipped: tuple[int, ...] = ()
    q: tuple[float, ...] = (0.0, 0.0, 0.0, 0.0, 0.0)
    survey_index: int = 0
    empty_views: int = 0
    sightings: tuple[Sensed, ...] = ()
    target: Target | None = None
    tallies: tuple[tuple[Lithology, Tally], ...] = tuple((l, Tally()) for l in REPORT_ORDER)
    log: tuple[str, ...] = field(default=(), repr=False)
    localized: tuple[tuple[int, tuple[float, float, float]], ...] = field(default=(), repr=False)

    @property
    def binned(self) -> int:
        return sum(len(ids) for _, ids in self.bins)

    def conserved(self) -> bool:
        return len(self.remaining) + self.binned + len(self.dropped) + len(self.skipped) == self.initial

    def tally(self, lith: Lithology) -> Tally:
        return dict(self.tallies)[lith]

    def bin_contents(self, lith: Lithology) -> tuple[int, ...]:
        return dict(self.bins)[lith]


def initial_state(scene: Scene) -> PipelineState:
    ids = tuple(a.ident for a in scene.aggregates)
    return PipelineState(Phase.LOAD_ENV, len(ids), ids)


@dataclass(frozen=True)
class Rngs:
    detection: np.random.Generator
    grasp: np.random.Generator
    depth: np.random.Generator


def _go(state: PipelineState, phase: Phase, note: str, **changes) -> PipelineState:
    if phase not in TRANSITIONS[state.phase]:
        raise PipelineError(f"illegal transition {state.phase.value} -> {phase.value}")
    return replace(state, phase=phase, log=state.log + (f"{state.phase.value} -> {phase.value}: {note}",), **changes)


def _camera_q(cfg: PipelineConfig, cam_xyz, reference) -> tuple[float, ...] | None:
    """Joint vector putting the camera at ``cam_xyz`` looking straight down."""
    cam_target = downward_pose(cam_xyz)
    effector = cam_target @ cfg.sensor.T_CE.inverse()
    sols = inverse_kinematics(cfg.chain, effector, reference=reference)
    if not sols:
        return None
    return tuple(float(v) for v in select_solution(sols, reference))


def _locate(cfg: PipelineConfig, s: Sensed) -> np.ndarray:
    """Base-frame point under the detection's box center."""
    intr, dist = cfg.sensor.intrinsics, cfg.sensor.distortion
    p_c = locate_3d(s.detection.center, s.depth, intr, dist, cfg.depth_range)
    T_EB = s.camera_pose @ cfg.sensor.T_CE.inverse()
    return camera_to_base(cfg.sensor.T_CE, T_EB, TaggedPoint(Frame.CAMERA, p_c)).array


def _without(ids: tuple[int, ...], ident: int) -> tuple[int, ...]:
    return tuple(i for i in ids if i != ident)


def _step_search(state, scene, cfg, rngs):
    n = len(cfg.survey_points)
    k = state.survey_index % n
    q = _camera_q(cfg, cfg.survey_points[k], state.q)
    if q is None:
        raise PipelineError(f"survey point {cfg.survey_points[k]} is unreachable")
    seen = sense(scene, state.remaining, cfg.chain, q, cfg.sensor, rngs.detection, rngs.depth)
    seen = [s for s in seen if math.isfinite(s.depth)]
    if seen:
        return _go(state, Phase.DETECT, f"{len(seen)} detection(s) at survey {k}", q=q, sightings=tuple(seen), empty_views=0)
    empty = state.empty_views + 1
    if empty >= n:
        return _go(state, Phase.DONE, "full survey cycle without detections", q=q, empty_views=empty, sightings=())
    return _go(state, Phase.SEARCH, f"nothing at survey {k}", q=q, survey_index=k + 1, empty_views=empty, sightings=())


def _pick(sightings, cfg) -> Sensed:
    intr = cfg.sensor.intrinsics

    def key(s: Sensed):
        u, v = s.detection.center
        return (s.detection.truncated, -s.detection.confidence, math.hypot(u - intr.cx, v - intr.cy), s.detection.box)

    return min(sightings, key=key)


def _step_detect(state, scene, cfg, rngs):
    s = _pick(state.sightings, cfg)
    lith = reported_lithology(s.detection, cfg.sensor.class_map)
    tgt = Target(s, lith, ident=s.detection.source_id)
    return _go(state, Phase.LOCALIZE, f"target reported as {lith.label}", target=tgt, sightings=())


def _skip(state, reason: str, ident: int) -> PipelineState:
    return _go(state, Phase.SEARCH, f"skip: {reason}", remaining=_without(state.remaining, ident),
               skipped=state.skipped + (ident,), target=None)


def _step_localize(state, scene, cfg, rngs):
    tgt = state.target
    s = tgt.detection
    try:
        est = _locate(cfg, s)
    except DepthOutOfRangeError as exc:
        return _skip(state, str(exc), tgt.ident)
    q = state.q
    # hover above the estimate until the view is centered on it
    for _ in range(cfg.center_iterations):
        q_new = _camera_q(cfg, (est[0], est[1], cfg.center_height), q)
        if q_new is None:
            return _skip(state, "centering pose unreachable", tgt.ident)
        q = q_new
        seen = [x for x in sense(scene, state.remaining, cfg.chain, q, cfg.sensor, rngs.detection, rngs.depth)
                if math.isfinite(x.depth)]
        best, best_d, best_p = None, math.inf, None
        for x in seen:
            try:
                p = _locate(cfg, x)
            except DepthOutOfRangeError:
                continue
            d = float(np.linalg.norm(p[:2] - est[:2]))
            if d < best_d:
                best, best_d, best_p = x, d, p
        if best is None:
            return _skip(state, "target lost while centering", tgt.ident)
        s, moved, est = best, best_d, best_p
        if moved <= cfg.center_tol:
            break
    top = est
    height = top[2] - scene.plane_z
    centroid = top - np.array([0.0, 0.0, height / 2.0])
    tgt = replace(tgt, detection=s, reported=reported_lithology(s.detection, cfg.sensor.class_map),
                  top_base=tuple(top), centroid_base=tuple(centroid), ident=s.detection.source_id)
    return _go(state, Phase.MEASURE, "centroid " + " ".join(f"{v:.6f}" for v in centroid), q=q, target=tgt,
               localized=state.localized + ((tgt.ident, tuple(float(v) for v in centroid)),))


def _step_measure(state, scene, cfg, rngs):
    tgt = state.target
    d = tgt.detection
    c1, c2 = d.detection.corners
    dims = measure_box(c1, c2, d.depth, cfg.sensor.intrinsics.fx)
    height_cm = 100.0 * (tgt.top_base[2] - scene.plane_z)
    dims_cm = (100.0 * dims.b, 100.0 * dims.a, height_cm)
    a = assess(100.0 * dims.c, cfg.bands)
    tgt = replace(tgt, dims_cm=dims_cm, grade=a.grade)
    if a.grade is Grade.REJECTED:
        return _skip(state, f"diagonal {100 * dims.c:.3f} cm below the smallest grade", tgt.ident)
    note = f"diagonal {100 * dims.c:.4f} cm, grade {a.grade}" + (" (oversize)" if a.oversize else "")
    return _go(state, Phase.PLAN_GRASP, note, target=tgt)


def _step_plan(state, scene, cfg, rngs):
    tgt = state.target
    pose = downward_pose(tgt.top_base)
    sols = inverse_kinematics(cfg.chain, pose, reference=state.q)
    if not sols:
        return _skip(state, f"no IK solution ({sols.reason.value})", tgt.ident)
    q = tuple(float(v) for v in select_solution(sols, state.q))
    return _go(state, Phase.GRASP, "grasp pose planned", target=replace(tgt, grasp_q=q))


def _bump(tallies, lith: Lithology, **inc) -> tuple:
    out = []
    for l, t in tallies:
        if l is lith:
            t = replace(t, **{k: getattr(t, k) + v for k, v in inc.items()})
        out.append((l, t))
    return tuple(out)


def _step_grasp(state, scene, cfg, rngs):
    tgt = state.target
    agg = scene.aggregate(tgt.ident)
    ok = bool(cfg.grasp(agg.diagonal_cm, rngs.grasp))
    # classification is judged at the attempt, whether or not the grasp holds
    correct = int(tgt.reported is agg.lithology)
    tallies = _bump(state.tallies, agg.lithology, attempted=1, grasp_successes=int(ok), correct=correct)
    if not ok:
        return _go(state, Phase.SEARCH, "grasp failed, aggregate dropped", q=tgt.grasp_q, tallies=tallies,
                   remaining=_without(state.remaining, tgt.ident), dropped=state.dropped + (tgt.ident,), target=None)
    return _go(state, Phase.PLACE, "grasped", q=tgt.grasp_q, tallies=tallies)


def _step_place(state, scene, cfg, rngs):
    tgt = state.target
    sols = inverse_kinematics(cfg.chain, scene.bin_pose(tgt.reported), reference=state.q)
    if not sols:
        raise PipelineError(f"bin for {tgt.reported.label} unreachable ({sols.reason.value})")
    q = tuple(float(v) for v in select_solution(sols, state.q))
    bins = tuple((l, ids + (tgt.ident,) if l is tgt.reported else ids) for l, ids in state.bins)
    return _go(state, Phase.SEARCH, f"placed in {tgt.reported.label} bin", q=q, bins=bins,
               remaining=_without(state.remaining, tgt.ident), target=None)


def _step_load(state, scene, cfg, rngs):
    for lith, pose in scene.bins:
        if not inverse_kinematics(cfg.chain, pose):
            raise PipelineError(f"bin for {lith.label} is unreachable")
    return _go(state, Phase.SEARCH, f"{state.initial} aggregates loaded", q=tuple(cfg.home))


_HANDLERS = {
    Phase.LOAD_ENV: _step_load,
    Phase.SEARCH: _step_search,
    Phase.DETECT: _step_detect,
    Phase.LOCALIZE: _step_localize,
    Phase.MEASURE: _step_measure,
    Phase.PLAN_GRASP: _step_plan,
    Phase.GRASP: _step_grasp,
    Phase.PLACE: _step_place,
}


def step_pipeline(state: PipelineState, scene: Scene, cfg: PipelineConfig, rngs: Rngs) -> PipelineState:
    """Execute exactly one phase transition."""
    if state.phase is Phase.DONE:
        return state
    new = _HANDLERS[state.phase](state, scene, cfg, rngs)
    if not new.conserved():
        raise PipelineError("aggregate count not conserved")
    return new


def run_pipeline(scene: Scene, cfg: PipelineConfig, rngs: Rngs, max_steps: int = 2000,
                 on_step: Callable[[PipelineState], None] | None = None) -> PipelineState:
    state = initial_state(scene)
    for _ in range(max_steps):
        if state.phase is Phase.DONE:
            return state
        state = step_pipeline(state, scene, cfg, rngs)
        if on_step is not None:
            on_step(state)
    raise PipelineError(f"pipeline did not finish within {max_steps} steps")
