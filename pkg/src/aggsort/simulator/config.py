"""Simulation configuration and named random streams."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from ..textio import floats, parse_kv

STREAMS = ("scene", "detection", "grasp", "depth")


def streams(master_seed: int) -> dict[str, np.random.Generator]:
    """Independent generators per noise source, derived from one master seed.

    Each stream has its own spawn key, so turning on one noise source never
    shifts the draws of another.
    """
    return {
        name: np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(k,)))
        for k, name in enumerate(STREAMS)
    }


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    # per lithology, in report order: limestone, granite, sandstone, marble
    counts: tuple[int, int, int, int] = (10, 10, 10, 10)
    size_min_cm: float = 1.0
    size_max_cm: float = 4.0
    clamp_sizes: bool = False
    profile: str = "jetarm"
    fidelity: str = "analytic"
    depth_noise_m: float = 0.0
    box_noise_px: float = 1.0
    confusion: str = "identity"
    grasp_model: str = "step"
    grasp_threshold_cm: float = 1.5
    grasp_p_small: float = 0.8
    grasp_p_large: float = 1.0
    logistic_mid_cm: float = 1.2
    logistic_slope: float = 8.0
    grade_edges: tuple[float, float, float] = (1.0, 2.0, 3.0)
    replay: str = ""
    image_width: int = 320
    image_height: int = 240
    focal_px: float = 250.0
    baseline_m: float = 0.02
    d_max: int = 63
    depth_min_m: float = 0.05
    depth_max_m: float = 2.5
    survey_height_m: float = 0.10
    center_height_m: float = 0.05
    plane_z_m: float = -0.10
    max_steps: int = 2000

    def __post_init__(self) -> None:
        if self.fidelity not in ("analytic", "stereo"):
            raise ValueError(f"fidelity must be 'analytic' or 'stereo', got {self.fidelity!r}")
        if self.grasp_model not in ("step", "logistic", "always"):
            raise ValueError(f"unknown grasp model {self.grasp_model!r}")
        if len(self.counts) != 4 or any(c < 0 for c in self.counts):
            raise ValueError(f"counts must be four non-negative integers, got {self.counts}")
        if self.depth_noise_m < 0 or self.box_noise_px < 0:
            raise ValueError("noise levels must be non-negative")

    def with_(self, **changes) -> SimConfig:
        return replace(self, **changes)


def _coerce(name: str, template, text: str):
    if isinstance(template, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {text!r}")
    if isinstance(template, int):
        return int(text)
    if isinstance(template, float):
        return float(text)
    if isinstance(template, tuple):
        vals = floats(text, len(template))
        return tuple(type(template[0])(v) for v in vals)
    return text


def parse_config(text: str, base: SimConfig | None = None) -> SimConfig:
    base = base or SimConfig()
    kv = parse_kv(text)
    known = {f.name for f in fields(SimConfig)}
    unknown = sorted(set(kv) - known)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    changes = {k: _coerce(k, getattr(base, k), v) for k, v in kv.items()}
    return replace(base, **changes)


def load_config(path: str | Path) -> SimConfig:
    cfg = parse_config(Path(path).read_text(encoding="utf-8"))
    # relative file references resolve against the config's directory
    root = Path(path).parent
    updates = {}
    for key in ("confusion", "replay"):
        val = getattr(cfg, key)
        if val and val != "identity" and not Path(val).is_absolute():
            updates[key] = str(root / val)
    return replace(cfg, **updates) if updates else cfg


def format_config(cfg: SimConfig) -> str:
    lines = []
    for f in fields(SimConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = " ".join(str(x) for x in v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
