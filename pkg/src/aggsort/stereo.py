"""Rectified stereo matching: Census + gradient + AD cost, WTA, left-right check.

Images are 2-D ``uint8``-range arrays indexed ``[row, col]``. Disparity
``d`` at left pixel ``(y, x)`` matches right pixel ``(y, x - d)``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .camera import Distortion, Intrinsics, unproject

INVALID = -1
PGM_INVALID = 255
WORKING_RANGE = (0.25, 2.5)


class InvalidDisparityError(ValueError):
    pass


class DepthOutOfRangeError(ValueError):
    pass


def as_gray(img: ArrayLike) -> NDArray[np.uint8]:
    a = np.asarray(img)
    if a.ndim != 2 or a.size == 0:
        raise ValueError(f"gray image must be a non-empty 2-D array, got shape {a.shape}")
    if a.dtype != np.uint8:
        if np.any(a < 0) or np.any(a > 255):
            raise ValueError("gray intensities must lie in [0, 255]")
        a = np.rint(a).astype(np.uint8)
    return a


@dataclass(frozen=True)
class CensusImage:
    """Per-pixel Census bit strings plus a validity mask (False on the border)."""

    bits: NDArray[np.uint64]
    valid: NDArray[np.bool_]
    nbits: int


def census_transform(img: ArrayLike, window: tuple[int, int] = (5, 5)) -> CensusImage:
    """Bit k is 1 iff the k-th neighbor (raster order, center skipped) is
    strictly darker than the center. Border pixels get zero bits and are
    flagged invalid.

    Args:
        img: gray image.
        window: (height, width), both odd.
    """
    a = np.asarray(img, dtype=float)
    if a.ndim != 2 or a.size == 0 or not np.all(np.isfinite(a)):
        raise ValueError("census input must be a finite, non-empty 2-D array")
    wh, ww = window
    if wh % 2 == 0 or ww % 2 == 0 or wh < 1 or ww < 1:
        raise ValueError(f"census window must be odd in both dimensions, got {window}")
    H, W = a.shape
    if wh > H or ww > W:
        raise ValueError(f"census window {window} larger than image {a.shape}")
    nbits = wh * ww - 1
    if nbits > 64:
        raise ValueError("census window too large for a 64-bit descriptor")
    ry, rx = wh // 2, ww // 2
    center = a[ry:H - ry, rx:W - rx]
    inner = np.zeros(center.shape, dtype=np.uint64)
    for dy in range(-ry, ry + 1):
        for dx in range(-rx, rx + 1):
            if dy == 0 and dx == 0:
                continue
            nb = a[ry + dy:H - ry + dy, rx + dx:W - rx + dx]
            inner = (inner << np.uint64(1)) | (nb < center).astype(np.uint64)
    bits = np.zeros((H, W), dtype=np.uint64)
    bits[ry:H - ry, rx:W - rx] = inner
    valid = np.zeros((H, W), dtype=bool)
    valid[ry:H - ry, rx:W - rx] = True
    return CensusImage(bits, valid, nbits)


def hamming(a: NDArray[np.uint64], b: NDArray[np.uint64]) -> NDArray[np.uint8]:
    return np.bitwise_count(np.bitwise_xor(a, b))


def x_gradient(img: ArrayLike) -> NDArray[np.float64]:
    """Central difference in x with replicated borders."""
    a = as_gray(img).astype(float)
    p = np.pad(a, ((0, 0), (1, 1)), mode="edge")
    return 0.5 * (p[:, 2:] - p[:, :-2])


@dataclass(frozen=True)
class MatchParams:
    """Cost blend and selection knobs for :func:`compute_disparity`."""

    w_ad: float = 1.0
    w_census: float = 2.0
    w_grad: float = 1.0
    tau_ad: float = 32.0
    tau_grad: float = 16.0
    window: tuple[int, int] = (5, 5)
    uniqueness: float = 0.95
    min_margin: float = 1.0
    lr_check: bool = True
    lr_tol: int = 1
    aggregate_radius: int = 0

    def max_cost(self, nbits: int) -> float:
        return self.w_ad * self.tau_ad + self.w_census * nbits + self.w_grad * self.tau_grad


@dataclass(frozen=True)
class DisparityMap:
    """Integer disparities, ``INVALID`` (-1) where no trustworthy match exists."""

    disparity: NDArray[np.int32]
    d_max: int

    @property
    def valid(self) -> NDArray[np.bool_]:
        return self.disparity != INVALID


@dataclass(frozen=True)
class _Prepared:
    left: NDArray[np.float64]
    right: NDArray[np.float64]
    cl: CensusImage
    cr: CensusImage
    gl: NDArray[np.float64]
    gr: NDArray[np.float64]


def _prepare(left, right, params: MatchParams) -> _Prepared:
    L, R = as_gray(left), as_gray(right)
    return _Prepared(
        L.astype(float), R.astype(float),
        census_transform(L, params.window), census_transform(R, params.window),
        x_gradient(L), x_gradient(R),
    )


def _raw_cost(pre: _Prepared, y0: int, y1: int, d_max: int, params: MatchParams):
    """(d_max+1, y1-y0, W) cost slab and its candidate-validity mask."""
    W = pre.left.shape[1]
    n = y1 - y0
    cost = np.zeros((d_max + 1, n, W))
    ok = np.zeros((d_max + 1, n, W), dtype=bool)
    lv = pre.cl.valid[y0:y1]
    for d in range(d_max + 1):
        xs = slice(d, W)
        xr = slice(0, W - d)
        ad = np.minimum(np.abs(pre.left[y0:y1, xs] - pre.right[y0:y1, xr]), params.tau_ad)
        hd = hamming(pre.cl.bits[y0:y1, xs], pre.cr.bits[y0:y1, xr])
        gd = np.minimum(np.abs(pre.gl[y0:y1, xs] - pre.gr[y0:y1, xr]), params.tau_grad)
        cost[d, :, xs] = params.w_ad * ad + params.w_census * hd + params.w_grad * gd
        ok[d, :, xs] = lv[:, xs] & pre.cr.valid[y0:y1, xr]
    return cost, ok


def _aggregate(cost: NDArray[np.float64], r: int, top_pad: int, bottom_pad: int) -> NDArray[np.float64]:
    # explicit shifted sums in a fixed order, so a pixel's value does not
    # depend on how rows were split into bands
    p = np.pad(cost, ((0, 0), (top_pad, bottom_pad), (r, r)), mode="edge")
    n, W = cost.shape[1] + top_pad + bottom_pad - 2 * r, cost.shape[2]
    out = np.zeros((cost.shape[0], n, W))
    for dy in range(2 * r + 1):
        for dx in range(2 * r + 1):
            out += p[:, dy:dy + n, dx:dx + W]
    return out


def _cost_band(pre: _Prepared, y0: int, y1: int, d_max: int, params: MatchParams):
    H = pre.left.shape[0]
    r = params.aggregate_radius
    if r <= 0:
        cost, ok = _raw_cost(pre, y0, y1, d_max, params)
        return np.where(ok, cost, np.inf)
    a0, a1 = max(0, y0 - r), min(H, y1 + r)
    cost, ok = _raw_cost(pre, a0, a1, d_max, params)
    cost = np.where(ok, cost, params.max_cost(pre.cl.nbits))
    agg = _aggregate(cost, r, r - (y0 - a0), r - (a1 - y1))
    return np.where(ok[:, y0 - a0:y0 - a0 + (y1 - y0)], agg, np.inf)


def _select_band(pre: _Prepared, y0: int, y1: int, d_max: int, params: MatchParams):
    cost = _cost_band(pre, y0, y1, d_max, params)
    D = cost.shape[0]
    best = np.argmin(cost, axis=0)
    c1 = np.take_along_axis(cost, best[None], axis=0)[0]
    dist = np.abs(np.arange(D)[:, None, None] - best[None])
    c2 = np.where(dist > 1, cost, np.inf).min(axis=0)
    # exact ties anywhere (e.g. textureless regions) are never trusted
    tied = np.sum(cost == c1[None], axis=0) > 1
    with np.errstate(invalid="ignore"):
        distinct = (c1 < params.uniqueness * c2) & (c2 - c1 >= params.min_margin)
    # a lone candidate has nothing to be compared against
    contested = np.sum(np.isfinite(cost), axis=0) > 1
    unique = np.isfinite(c1) & contested & ~tied & (distinct | np.isinf(c2))
    disp_l = np.where(unique, best, INVALID).astype(np.int32)
    if not params.lr_check:
        return disp_l
    # right-view WTA from the same volume: cost_R(x, d) = cost_L(x + d, d)
    W = cost.shape[2]
    cost_r = np.full_like(cost, np.inf)
    for d in range(D):
        cost_r[d, :, :W - d] = cost[d, :, d:]
    best_r = np.argmin(cost_r, axis=0)
    has_r = np.isfinite(np.min(cost_r, axis=0))
    xs = np.arange(W)[None, :]
    xr = np.clip(xs - np.maximum(disp_l, 0), 0, W - 1)
    rows = np.arange(y1 - y0)[:, None]
    dr = best_r[rows, xr]
    consistent = has_r[rows, xr] & (np.abs(disp_l - dr) <= params.lr_tol)
    return np.where((disp_l != INVALID) & consistent, disp_l, INVALID).astype(np.int32)


def compute_disparity(
    left: ArrayLike,
    right: ArrayLike,
    d_max: int,
    params: MatchParams | None = None,
    workers: int = 1,
) -> DisparityMap:
    """Winner-take-all disparity over ``0..d_max`` with uniqueness and
    left-right checks.

    ``workers > 1`` splits rows into bands processed on a thread pool; the
    result is bit-identical to the single-worker run.

    Raises:
        ValueError: on mismatched shapes or ``d_max >= width``.
    """
    params = params or MatchParams()
    L, R = as_gray(left), as_gray(right)
    if L.shape != R.shape:
        raise ValueError(f"image shapes differ: {L.shape} vs {R.shape}")
    H, W = L.shape
    if not 0 <= d_max < W:
        raise ValueError(f"d_max must be in [0, width), got {d_max} for width {W}")
    pre = _prepare(L, R, params)
    workers = max(1, min(int(workers), H))
    bounds = np.linspace(0, H, workers + 1).astype(int)
    bands = [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if workers == 1:
        parts = [_select_band(pre, a, b, d_max, params) for a, b in bands]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda ab: _select_band(pre, ab[0], ab[1], d_max, params), bands))
    return DisparityMap(np.vstack(parts), d_max)


def cost_terms(left: ArrayLike, right: ArrayLike, d: int, params: MatchParams | None = None):
    """Individual (AD, Census, gradient) cost images at a single disparity, for inspection."""
    params = params or MatchParams()
    pre = _prepare(left, right, params)
    W = pre.left.shape[1]
    xs, xr = slice(d, W), slice(0, W - d)
    ad = np.minimum(np.abs(pre.left[:, xs] - pre.right[:, xr]), params.tau_ad)
    hd = hamming(pre.cl.bits[:, xs], pre.cr.bits[:, xr]).astype(float)
    gd = np.minimum(np.abs(pre.gl[:, xs] - pre.gr[:, xr]), params.tau_grad)
    return ad, hd, gd


# -- depth ------------------------------------------------------------------


def disparity_to_depth(d: float, fx: float, baseline: float) -> float:
    """``Z = fx * B / d``.

    Raises:
        InvalidDisparityError: for ``d <= 0``.
    """
    if not d > 0:
        raise InvalidDisparityError(f"disparity must be positive, got {d}")
    return fx * baseline / d


def depth_map(disp: DisparityMap, fx: float, baseline: float,
              working_range: tuple[float, float] | None = WORKING_RANGE) -> NDArray[np.float64]:
    """Metric depth per pixel; NaN where disparity is invalid, zero, or the
    depth falls outside ``working_range`` (pass None to keep all)."""
    d = disp.disparity.astype(float)
    good = d > 0
    z = np.full(d.shape, np.nan)
    z[good] = fx * baseline / d[good]
    if working_range is not None:
        lo, hi = working_range
        z[(z < lo) | (z > hi)] = np.nan
    return z


def locate_3d(pixel: ArrayLike, depth: float, intr: Intrinsics, dist: Distortion,
              working_range: tuple[float, float] | None = WORKING_RANGE) -> NDArray[np.float64]:
    """Camera-frame point on the pixel's ray at the given depth.

    Raises:
        DepthOutOfRangeError: if ``depth`` is outside ``working_range``.
    """
    if not np.isfinite(depth) or depth <= 0:
        raise DepthOutOfRangeError(f"depth must be positive and finite, got {depth}")
    if working_range is not None and not working_range[0] <= depth <= working_range[1]:
        raise DepthOutOfRangeError(f"depth {depth:g} m outside working range {working_range}")
    return unproject(intr, dist, pixel, depth)


def interior_mask(shape: tuple[int, int], d_max: int, window: tuple[int, int] = (5, 5)) -> NDArray[np.bool_]:
    """Pixels whose every candidate match has full Census support."""
    H, W = shape
    ry, rx = window[0] // 2, window[1] // 2
    m = np.zeros(shape, dtype=bool)
    m[ry:H - ry, rx + d_max:W - rx] = True
    return m


# -- PGM and depth-grid I/O -------------------------------------------------


def write_pgm(path: str | Path, img: ArrayLike, binary: bool = True) -> None:
    a = as_gray(img)
    H, W = a.shape
    if binary:
        Path(path).write_bytes(f"P5\n{W} {H}\n255\n".encode() + a.tobytes())
    else:
        rows = "\n".join(" ".join(str(int(v)) for v in row) for row in a)
        Path(path).write_text(f"P2\n{W} {H}\n255\n{rows}\n", encoding="ascii")


def _pgm_tokens(data: bytes):
    """Yield header tokens, skipping comments; returns offset after the last header token."""
    tokens, i = [], 0
    while len(tokens) < 4:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace():
            j += 1
        if j == i:
            raise ValueError("truncated PGM header")
        tokens.append(data[i:j].decode("ascii"))
        i = j
    return tokens, i + 1


def read_pgm(path: str | Path) -> NDArray[np.uint8]:
    data = Path(path).read_bytes()
    (magic, w, h, maxval), off = _pgm_tokens(data)
    W, H, M = int(w), int(h), int(maxval)
    if M != 255:
        raise ValueError(f"only 8-bit PGM supported (maxval {M})")
    if magic == "P5":
        body = np.frombuffer(data[off:off + W * H], dtype=np.uint8)
    elif magic == "P2":
        body = np.array(data[off:].split(), dtype=np.int64)
        if np.any(body > 255) or np.any(body < 0):
            raise ValueError("P2 sample out of range")
        body = body.astype(np.uint8)
    else:
        raise ValueError(f"unsupported PGM magic {magic!r}")
    if body.size != W * H:
        raise ValueError(f"PGM body has {body.size} samples, expected {W * H}")
    return body.reshape(H, W).copy()


def write_disparity_pgm(path: str | Path, disp: DisparityMap) -> None:
    if disp.d_max >= PGM_INVALID:
        raise ValueError("d_max must be below the 255 invalid sentinel for PGM output")
    a = np.where(disp.valid, disp.disparity, PGM_INVALID).astype(np.uint8)
    write_pgm(path, a, binary=False)


def read_disparity_pgm(path: str | Path, d_max: int | None = None) -> DisparityMap:
    a = read_pgm(path).astype(np.int32)
    a[a == PGM_INVALID] = INVALID
    return DisparityMap(a, int(a.max(initial=0)) if d_max is None else d_max)


def write_depth_grid(path: str | Path, z: ArrayLike) -> None:
    z = np.asarray(z, dtype=float)
    lines = [" ".join("nan" if not np.isfinite(v) else repr(float(v)) for v in row) for row in z]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_depth_grid(path: str | Path) -> NDArray[np.float64]:
    rows = [line.split() for line in Path(path).read_text(encoding="ascii").splitlines() if line.strip()]
    if len({len(r) for r in rows}) > 1:
        raise ValueError("ragged depth grid")
    return np.array(rows, dtype=float)


def textured_pair(shape: tuple[int, int], shift: int, seed: int = 0) -> tuple[NDArray[np.uint8], NDArray[np.uint8]]:
    """Random-texture left image and its right view displaced by ``shift`` px.

    Right pixel ``x`` shows left pixel ``x + shift``; the uncovered right
    margin is filled with fresh texture.
    """
    rng = np.random.default_rng(seed)
    H, W = shape
    wide = rng.integers(0, 256, size=(H, W + shift), dtype=np.uint8)
    left = wide[:, :W].copy()
    right = wide[:, shift:].copy()
    return left, right
