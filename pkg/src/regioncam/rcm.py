"""Relevance computation: denoising, per-region saliency scores, TRS/SRS bits.

Every region is scored independently, the way an array of regional processing
units would do it in hardware. Whole-frame filter stages (median, Sobel,
Harris) can be split into row bands and run on an executor; each output pixel
is a pure function of its 3x3 input neighbourhood and all score arithmetic is
exact, so results never depend on how the work is split.
"""

from __future__ import annotations

import enum
from concurrent.futures import Executor
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import ConfigError, Frame, RegionGrid, RegionView, SimConfig
from .io import RegionEvent, quantize_score


# --- banded whole-frame stages ---------------------------------------------

def _banded(fn: Callable[[np.ndarray], np.ndarray], arr: np.ndarray, halo: int,
            pool: Executor | None = None, bands: int = 1) -> np.ndarray:
    """Apply a 'valid'-mode window function to ``arr`` with edge-replicated borders.

    ``fn`` receives a slice padded by ``halo`` on every side and must return
    the unpadded rows. With a pool, output rows are split into ``bands``
    contiguous bands whose results are concatenated in order.
    """
    pad = [(halo, halo), (halo, halo)] + [(0, 0)] * (arr.ndim - 2)
    padded = np.pad(arr, pad, mode="edge")
    h = arr.shape[0]
    if pool is None or bands <= 1 or h < 2:
        return fn(padded)
    cuts = sorted(set(np.linspace(0, h, min(bands, h) + 1).round().astype(int).tolist()))
    slices = [padded[a:b + 2 * halo] for a, b in zip(cuts[:-1], cuts[1:])]
    return np.concatenate(list(pool.map(fn, slices)), axis=0)


def _median_valid(p: np.ndarray) -> np.ndarray:
    win = sliding_window_view(p, (3, 3)).reshape(p.shape[0] - 2, p.shape[1] - 2, 9)
    return np.partition(win, 4, axis=-1)[..., 4]


def _sobel_valid(p: np.ndarray) -> np.ndarray:
    p = p.astype(np.int32)
    left = p[:-2, :-2] + 2 * p[1:-1, :-2] + p[2:, :-2]
    right = p[:-2, 2:] + 2 * p[1:-1, 2:] + p[2:, 2:]
    top = p[:-2, :-2] + 2 * p[:-2, 1:-1] + p[:-2, 2:]
    bottom = p[2:, :-2] + 2 * p[2:, 1:-1] + p[2:, 2:]
    return np.stack([right - left, bottom - top], axis=-1)


def _window_sum_valid(p: np.ndarray) -> np.ndarray:
    out = p[:-2, :-2].copy()
    for dr in range(3):
        for dc in range(3):
            if dr or dc:
                out += p[dr:dr + p.shape[0] - 2, dc:dc + p.shape[1] - 2]
    return out


def median3(frame: Frame | np.ndarray, pool: Executor | None = None, bands: int = 1):
    """3x3 median filter with edge-replicated borders.

    Accepts a Frame (returns a Frame) or a bare 2-D array (returns an array).
    """
    px = frame.pixels if isinstance(frame, Frame) else np.asarray(frame)
    out = _banded(_median_valid, px, 1, pool, bands)
    return Frame(out, frame.t) if isinstance(frame, Frame) else out


def sobel(px: np.ndarray, pool: Executor | None = None, bands: int = 1):
    """Return (gx, gy) as int32 arrays, 3x3 Sobel kernels, edge-replicated borders."""
    g = _banded(_sobel_valid, np.asarray(px), 1, pool, bands)
    return g[..., 0], g[..., 1]


def edge_map(px: np.ndarray, g_th: float, pool: Executor | None = None, bands: int = 1) -> np.ndarray:
    gx, gy = sobel(px, pool, bands)
    return (np.abs(gx) + np.abs(gy)) >= g_th


def harris_response(px: np.ndarray, k: float, pool: Executor | None = None, bands: int = 1) -> np.ndarray:
    """Harris response det(A) - k tr(A)^2 with A summed over a 3x3 window.

    Products and window sums are exact in int64 for 8-bit input, so the only
    rounding is the final float64 combination.
    """
    gx, gy = sobel(px, pool, bands)
    gx = gx.astype(np.int64)
    gy = gy.astype(np.int64)
    prod = np.stack([gx * gx, gy * gy, gx * gy], axis=-1)
    s = _banded(_window_sum_valid, prod, 1, pool, bands)
    sxx, syy, sxy = s[..., 0], s[..., 1], s[..., 2]
    det = sxx * syy - sxy * sxy
    tr = sxx + syy
    return det.astype(np.float64) - k * (tr * tr).astype(np.float64)


# --- per-region scores -------------------------------------------------------

def _pixels(region) -> np.ndarray:
    px = region.pixels if isinstance(region, RegionView) else region
    return np.asarray(px).reshape(-1).astype(np.int64)


def mad(region) -> float:
    """Mean absolute deviation of a region's pixels from their mean.

    Evaluated as sum|n*x - S| / n^2 in integers, so the result is the
    correctly rounded real value.
    """
    x = _pixels(region)
    n = x.size
    if n == 0:
        raise ValueError("mad of an empty region")
    return int(np.abs(n * x - x.sum()).sum()) / (n * n)


def variance(region) -> float:
    """Population variance, evaluated as (n * sum x^2 - S^2) / n^2."""
    x = _pixels(region)
    n = x.size
    if n == 0:
        raise ValueError("variance of an empty region")
    s = int(x.sum())
    return (n * int((x * x).sum()) - s * s) / (n * n)


def mad_scores(blocks: np.ndarray) -> np.ndarray:
    """Vectorised :func:`mad` over the rows of an (M, n) block array."""
    x = blocks.astype(np.int64)
    n = x.shape[1]
    num = np.abs(n * x - x.sum(axis=1, keepdims=True)).sum(axis=1)
    return num / float(n * n)


def variance_scores(blocks: np.ndarray) -> np.ndarray:
    x = blocks.astype(np.int64)
    n = x.shape[1]
    s = x.sum(axis=1)
    num = n * (x * x).sum(axis=1) - s * s
    return num / float(n * n)


def edge_counts(frame: Frame | np.ndarray, grid: RegionGrid, g_th: float,
                pool: Executor | None = None, bands: int = 1) -> np.ndarray:
    px = frame.pixels if isinstance(frame, Frame) else frame
    return grid.blocks(edge_map(px, g_th, pool, bands)).sum(axis=1)


def corner_counts(frame: Frame | np.ndarray, grid: RegionGrid, k: float, threshold: float,
                  pool: Executor | None = None, bands: int = 1) -> np.ndarray:
    px = frame.pixels if isinstance(frame, Frame) else frame
    return grid.blocks(harris_response(px, k, pool, bands) >= threshold).sum(axis=1)


def temporal_mismatch(cur, ref, delta: int) -> int:
    """Number of pixels whose absolute change is at least ``delta``."""
    a, b = _pixels(cur), _pixels(ref)
    if a.shape != b.shape:
        raise ValueError("regions differ in size")
    return int((np.abs(a - b) >= delta).sum())


def mismatch_counts(cur: np.ndarray, ref: np.ndarray, grid: RegionGrid, delta: int) -> np.ndarray:
    diff = np.abs(cur.astype(np.int16) - ref.astype(np.int16))
    return grid.blocks(diff >= delta).sum(axis=1)


def denoise(px: np.ndarray, config: SimConfig, pool: Executor | None = None, bands: int = 1) -> np.ndarray:
    if config.noise_filter == "median3":
        return median3(px, pool, bands)
    return px


def spatial_scores(denoised: np.ndarray, grid: RegionGrid, config: SimConfig,
                   pool: Executor | None = None, bands: int = 1) -> np.ndarray:
    """Per-region score for the configured spatial feature, as float64 (M,)."""
    feature = config.spatial_feature
    if feature == "mad":
        return mad_scores(grid.blocks(denoised))
    if feature == "variance":
        return variance_scores(grid.blocks(denoised))
    if feature == "edge":
        counts = edge_counts(denoised, grid, config.edge_gradient_threshold, pool, bands)
    else:
        counts = corner_counts(denoised, grid, config.corner_k,
                               config.corner_response_threshold, pool, bands)
    return counts.astype(np.float64)


# --- classification ----------------------------------------------------------

class RenderAction(enum.Enum):
    CURRENT = "current"        # trs=1, srs=1: new payload
    PREVIOUS = "previous"      # trs=0, srs=1: keep previous output
    SUPPRESSED = "suppressed"  # srs=0: zero or previous, per policy


@dataclass(frozen=True)
class RelevanceBits:
    srs: int
    trs: int

    @property
    def active(self) -> bool:
        return self.srs == 1 and self.trs == 1

    @property
    def action(self) -> RenderAction:
        if not self.srs:
            return RenderAction.SUPPRESSED
        return RenderAction.CURRENT if self.trs else RenderAction.PREVIOUS


@dataclass(frozen=True)
class RegionScores:
    spatial_score: float
    mismatch_count: int


def classify(scores: RegionScores, config: SimConfig) -> RelevanceBits:
    return RelevanceBits(
        srs=int(scores.spatial_score >= config.spatial_threshold),
        trs=int(scores.mismatch_count >= config.temporal_threshold),
    )


@dataclass(frozen=True, eq=False)
class RelevanceMap:
    """Per-region bits and raw scores for one frame, indexed by region id."""

    t: int
    srs: np.ndarray
    trs: np.ndarray
    spatial_score: np.ndarray
    mismatch_count: np.ndarray

    def __len__(self):
        return len(self.srs)

    def __getitem__(self, rid: int) -> tuple[RelevanceBits, RegionScores]:
        return (RelevanceBits(int(self.srs[rid]), int(self.trs[rid])),
                RegionScores(float(self.spatial_score[rid]), int(self.mismatch_count[rid])))

    @property
    def active(self) -> np.ndarray:
        return (self.srs == 1) & (self.trs == 1)

    def __eq__(self, other):
        if not isinstance(other, RelevanceMap):
            return NotImplemented
        return self.t == other.t and all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("srs", "trs", "spatial_score", "mismatch_count"))


@dataclass(frozen=True, eq=False)
class RcmState:
    """Reference frame for temporal comparison (denoised, padded dimensions)."""

    reference_frame: np.ndarray | None = None

    @property
    def initialized(self) -> bool:
        return self.reference_frame is not None


def rcm_step(frame: Frame, state: RcmState, grid: RegionGrid, config: SimConfig,
             pool: Executor | None = None, bands: int = 1
             ) -> tuple[RelevanceMap, list[RegionEvent], RcmState]:
    """Score and classify every region of one padded frame.

    The first frame (uninitialised state) makes every region Active.
    Relevance is computed on denoised pixels, payloads carry raw pixels.
    """
    raw = frame.pixels
    if raw.shape != (grid.padded_height, grid.padded_width):
        raise ConfigError(
            f"frame {frame.width}x{frame.height} does not match grid "
            f"{grid.padded_width}x{grid.padded_height}")
    den = denoise(raw, config, pool, bands)
    scores = spatial_scores(den, grid, config, pool, bands)
    n2 = grid.region_size ** 2

    if not state.initialized:
        mc = np.full(grid.M, n2, dtype=np.int64)
        srs = np.ones(grid.M, dtype=np.uint8)
        trs = np.ones(grid.M, dtype=np.uint8)
    else:
        ref = state.reference_frame
        if ref.shape != raw.shape:
            raise ConfigError(f"frame shape {raw.shape} does not match reference {ref.shape}")
        mc = mismatch_counts(den, ref, grid, config.temporal_pixel_delta)
        srs = (scores >= config.spatial_threshold).astype(np.uint8)
        trs = (mc >= config.temporal_threshold).astype(np.uint8)
    active = (srs == 1) & (trs == 1)

    rmap = RelevanceMap(frame.t, srs, trs, scores, mc)
    blocks = grid.blocks(raw)
    events = [
        RegionEvent(
            t=frame.t, rid=rid, srs=int(srs[rid]), trs=int(trs[rid]),
            spatial_score=quantize_score(scores[rid]), mismatch_count=int(mc[rid]),
            payload=blocks[rid].tobytes() if active[rid] else None,
        )
        for rid in range(grid.M)
    ]

    if not state.initialized or config.reference_update == "every_frame":
        new_ref = den
    else:
        mask = np.repeat(active, n2).reshape(grid.M, n2)
        new_ref = grid.assemble(np.where(mask, grid.blocks(den), grid.blocks(state.reference_frame)))
    return rmap, events, RcmState(np.array(new_ref, dtype=np.uint8, copy=True))
