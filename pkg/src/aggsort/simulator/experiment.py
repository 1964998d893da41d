"""Experiment driver: build a scene from a config, run the pipeline, tally a report.

Replay files bypass the simulation entirely and tally recorded outcomes,
one attempt per line::

    # lithology grasp_ok reported_class
    sandstone 0 sandstone
    granite 1 limestone
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..dataset import Lithology, REPORT_ORDER
from ..detection import ConfusionSpec
from ..kinematics import get_profile, load_chain
from ..sizing import GradeBands
from .config import SimConfig, streams
from .pipeline import PipelineConfig, PipelineError, PipelineState, Rngs, Tally, run_pipeline
from .report import SortReport, render_report, report_from_tallies
from .scene import Scene, generate_scene
from .sensing import SensorModel, default_rig


STEREO_CENTER_TOL_M = 1e-3


class ReplayError(ValueError):
    pass


@dataclass(frozen=True)
class GraspModel:
    """Probability that a grasp holds, as a function of particle size (cm).

    ``step``: ``p_large`` at or above ``threshold_cm``, ``p_small`` below.
    ``logistic``: ``1 / (1 + exp(-slope (size - mid)))``.
    ``always``: 1.
    """

    kind: str = "step"
    threshold_cm: float = 1.5
    p_small: float = 0.8
    p_large: float = 1.0
    mid_cm: float = 1.2
    slope: float = 8.0

    def __post_init__(self) -> None:
        if self.kind not in ("step", "logistic", "always"):
            raise ValueError(f"unknown grasp model {self.kind!r}")
        if not (0.0 <= self.p_small <= self.p_large <= 1.0):
            raise ValueError("step model needs 0 <= p_small <= p_large <= 1")
        if self.slope < 0:
            raise ValueError("logistic slope must be non-negative")

    def probability(self, size_cm: float) -> float:
        if self.kind == "always":
            return 1.0
        if self.kind == "step":
            return self.p_large if size_cm >= self.threshold_cm else self.p_small
        return 1.0 / (1.0 + math.exp(-self.slope * (size_cm - self.mid_cm)))

    def __call__(self, size_cm: float, rng: np.random.Generator) -> bool:
        p = self.probability(size_cm)
        # always draw, so the grasp stream advances the same way for every model
        return bool(rng.random() < p)


def grasp_model_from(cfg: SimConfig) -> GraspModel:
    return GraspModel(cfg.grasp_model, cfg.grasp_threshold_cm, cfg.grasp_p_small, cfg.grasp_p_large,
                      cfg.logistic_mid_cm, cfg.logistic_slope)


# -- replay -----------------------------------------------------------------


@dataclass(frozen=True)
class ReplayAttempt:
    lithology: Lithology
    grasp_ok: bool
    reported: Lithology


_BOOL = {"1": True, "0": False, "true": True, "false": False, "yes": True, "no": False, "ok": True, "fail": False}


def parse_replay(text: str) -> list[ReplayAttempt]:
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ReplayError(f"line {lineno}: expected 'lithology grasp_ok reported_class', got {raw!r}")
        try:
            lith = Lithology.parse(parts[0])
            rep = Lithology.parse(parts[2])
        except ValueError as exc:
            raise ReplayError(f"line {lineno}: {exc}") from None
        ok = _BOOL.get(parts[1].lower())
        if ok is None:
            raise ReplayError(f"line {lineno}: grasp_ok must be 0/1 or true/false, got {parts[1]!r}")
        out.append(ReplayAttempt(lith, ok, rep))
    return out


def load_replay(path: str | Path) -> list[ReplayAttempt]:
    return parse_replay(Path(path).read_text(encoding="utf-8"))


def tally_replay(attempts: Sequence[ReplayAttempt]) -> SortReport:
    tallies = {lith: Tally() for lith in REPORT_ORDER}
    for a in attempts:
        t = tallies[a.lithology]
        tallies[a.lithology] = Tally(t.attempted + 1, t.grasp_successes + int(a.grasp_ok),
                                     t.correct + int(a.reported is a.lithology))
    return report_from_tallies(tallies.items())


# -- simulation -------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentResult:
    report: SortReport
    final_state: PipelineState | None
    scene: Scene | None
    conserved_every_step: bool = True


def build_pipeline_config(cfg: SimConfig) -> PipelineConfig:
    chain = get_profile(cfg.profile) if not Path(cfg.profile).exists() else load_chain(cfg.profile)
    rig = default_rig(cfg.image_width, cfg.image_height, cfg.focal_px, cfg.baseline_m)
    confusion = ConfusionSpec.identity() if cfg.confusion == "identity" else ConfusionSpec.load(cfg.confusion)
    sensor = SensorModel(rig, width=cfg.image_width, height=cfg.image_height, confusion=confusion,
                         box_noise_px=cfg.box_noise_px, depth_noise_m=cfg.depth_noise_m,
                         fidelity=cfg.fidelity, d_max=cfg.d_max)
    h = cfg.survey_height_m
    survey = ((0.09, -0.15, h), (0.09, 0.0, h), (0.09, 0.15, h))
    # stereo depth is quantized, so centering can only settle to about a millimeter
    center_tol = STEREO_CENTER_TOL_M if cfg.fidelity == "stereo" else 1e-12
    return PipelineConfig(chain, sensor, grasp_model_from(cfg), GradeBands(cfg.grade_edges), survey,
                          cfg.center_height_m, (cfg.depth_min_m, cfg.depth_max_m), center_tol=center_tol)


def run_experiment(cfg: SimConfig, on_step: Callable[[PipelineState], None] | None = None) -> ExperimentResult:
    """Simulate a full sort, or tally a replay file when ``cfg.replay`` is set.

    Raises:
        ReplayError: malformed replay file.
        PipelineError: if the aggregate count is ever not conserved.
    """
    if cfg.replay:
        return ExperimentResult(tally_replay(load_replay(cfg.replay)), None, None)
    rngs = streams(cfg.seed)
    scene = generate_scene(rngs["scene"], cfg.counts, (cfg.size_min_cm, cfg.size_max_cm),
                           plane_z=cfg.plane_z_m, clamp=cfg.clamp_sizes)
    pcfg = build_pipeline_config(cfg)
    ok = True

    def watch(state: PipelineState) -> None:
        nonlocal ok
        ok = ok and state.conserved()
        if on_step is not None:
            on_step(state)

    final = run_pipeline(scene, pcfg, Rngs(rngs["detection"], rngs["grasp"], rngs["depth"]), cfg.max_steps, watch)
    if not ok:
        raise PipelineError("aggregate count not conserved")
    return ExperimentResult(report_from_tallies(final.tallies), final, scene, ok)


def _render_one(args: tuple[SimConfig, str]) -> str:
    cfg, fmt = args
    return render_report(run_experiment(cfg).report, fmt)


def run_many(configs: Sequence[SimConfig], workers: int = 1, fmt: str = "table") -> list[str]:
    """Rendered reports for independent experiments, in input order."""
    jobs = [(c, fmt) for c in configs]
    if workers <= 1:
        return [_render_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_render_one, jobs))
