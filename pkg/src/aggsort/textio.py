"""Tiny helpers for the plain-text key-value files used across the package."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def parse_kv(text: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment, blank lines ignored.

    Later keys override earlier ones.
    """
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def read_kv(path: str | Path) -> dict[str, str]:
    return parse_kv(Path(path).read_text(encoding="utf-8"))


def floats(value: str, n: int | None = None) -> np.ndarray:
    arr = np.array([float(v) for v in value.replace(",", " ").split()])
    if n is not None and arr.size != n:
        raise ValueError(f"expected {n} numbers, got {arr.size}: {value!r}")
    return arr


def fmt(x: float) -> str:
    """Shortest repr that round-trips exactly."""
    return repr(float(x))
