"""Redundancy measurements over simulated streams and image datasets.

All reductions run in dataset order, so results are reproducible whether or
not per-image scoring is fanned out to an executor.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import Executor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import ConfigError, DataError, Frame, RegionGrid, SimConfig, build_grid, crop, pad_replicate
from .io import RegionEvent, group_by_frame, write_pgm
from .rcm import denoise, spatial_scores
from .simulator import simulate

SWEEP_PARAMETERS = ("spatial_threshold", "region_size")


# --- temporal ROI series -----------------------------------------------------

@dataclass(frozen=True)
class RoiPoint:
    t: int
    active: int
    srs1: int
    trs1: int
    roi_fraction: float


@dataclass(frozen=True)
class RoiSeries:
    M: int
    points: tuple[RoiPoint, ...]

    @property
    def mean_roi(self) -> float:
        if not self.points:
            return 0.0
        return math.fsum(p.active for p in self.points) / (self.M * len(self.points))

    @property
    def mean_non_relevant(self) -> float:
        return 1.0 - self.mean_roi


def roi_series(events: Iterable[RegionEvent], M: int) -> RoiSeries:
    """Per-frame Active / SRS / TRS counts from a complete event stream."""
    points = []
    for batch in group_by_frame(events):
        if len(batch) != M or sorted(ev.rid for ev in batch) != list(range(M)):
            raise DataError(f"frame {batch[0].t}: {len(batch)} region events, expected {M}")
        active = sum(ev.active for ev in batch)
        points.append(RoiPoint(batch[0].t, active, sum(ev.srs for ev in batch),
                               sum(ev.trs for ev in batch), active / M))
    return RoiSeries(M, tuple(points))


def write_roi_csv(series: RoiSeries, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["t", "active", "srs1", "trs1", "roi_fraction"])
        for p in series.points:
            w.writerow([p.t, p.active, p.srs1, p.trs1, repr(p.roi_fraction)])


# --- spatial redundancy ------------------------------------------------------

def image_scores(frame: Frame, config: SimConfig) -> tuple[RegionGrid, np.ndarray]:
    """Grid and per-region spatial scores of one independent image."""
    grid = build_grid(frame.width, frame.height, config.region_size)
    px = pad_replicate(frame, config.region_size).pixels
    return grid, spatial_scores(denoise(px, config), grid, config)


def _all_scores(dataset: Sequence[Frame], config: SimConfig, pool: Executor | None) -> list[np.ndarray]:
    if not dataset:
        raise DataError("empty dataset")
    if pool is None:
        return [image_scores(f, config)[1] for f in dataset]
    return [s for _, s in pool.map(image_scores, dataset, [config] * len(dataset))]


def _mean_relevant(scores: list[np.ndarray], threshold: float) -> float:
    return math.fsum(np.count_nonzero(s >= threshold) / s.size for s in scores) / len(scores)


def spatial_redundancy(dataset: Iterable[Frame], config: SimConfig, pool: Executor | None = None) -> float:
    """Mean over images of the fraction of regions with srs=0."""
    scores = _all_scores(list(dataset), config, pool)
    th = config.spatial_threshold
    return math.fsum(np.count_nonzero(s < th) / s.size for s in scores) / len(scores)


@dataclass(frozen=True)
class SweepCurve:
    parameter: str
    points: tuple[tuple[float, float], ...]   # (parameter value, mean ROI fraction)


def sweep(dataset: Iterable[Frame], config: SimConfig, parameter: str, values: Sequence[float],
          sequence: bool = False, pool: Executor | None = None) -> SweepCurve:
    """Mean ROI fraction as one parameter varies.

    For independent images (the default) the ROI fraction is the fraction of
    srs=1 regions; with ``sequence=True`` the frames are simulated as a
    stream and the ROI fraction counts Active regions.
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"cannot sweep {parameter!r}; choose from {SWEEP_PARAMETERS}")
    values = list(values)
    if not values:
        raise ConfigError("no sweep values given")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError("sweep values must be strictly increasing")
    frames = list(dataset)
    if not frames:
        raise DataError("empty dataset")

    points = []
    if sequence:
        for v in values:
            cfg = config.replace(**{parameter: v})
            M = None
            events = []
            for step in simulate(frames, cfg, pool, bands=4 if pool else 1):
                M = step.grid.M
                events.extend(step.events)
            points.append((v, roi_series(events, M).mean_roi))
    elif parameter == "spatial_threshold":
        # scores do not depend on the threshold; compute them once
        scores = _all_scores(frames, config, pool)
        for v in values:
            points.append((v, _mean_relevant(scores, v)))
    else:
        for v in values:
            cfg = config.replace(region_size=int(v))
            points.append((v, _mean_relevant(_all_scores(frames, cfg, pool), cfg.spatial_threshold)))
    return SweepCurve(parameter, tuple(points))


def write_sweep_csv(curve: SweepCurve, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["param", "mean_roi"])
        for v, roi in curve.points:
            w.writerow([v, repr(roi)])


# --- MAD histogram -----------------------------------------------------------

@dataclass(frozen=True)
class MadHistogram:
    bin_width: float
    counts: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.counts)

    def bin_lo(self, k: int) -> float:
        return k * self.bin_width


def _mad_numerators(px: np.ndarray, grid: RegionGrid) -> np.ndarray:
    x = grid.blocks(px).astype(np.int64)
    n = x.shape[1]
    return np.abs(n * x - x.sum(axis=1, keepdims=True)).sum(axis=1)


def mad_histogram(dataset: Iterable[Frame], config: SimConfig, bin_width: float) -> MadHistogram:
    """Histogram of per-region MAD, bins ``[k w, (k+1) w)``.

    Binning uses the exact rational MAD, so values on a bin edge always land
    in the upper bin.
    """
    if not bin_width > 0:
        raise ConfigError(f"bin width must be positive, got {bin_width}")
    w = Fraction(bin_width)
    tally: dict[int, int] = {}
    n2 = None
    seen = False
    for frame in dataset:
        seen = True
        grid = build_grid(frame.width, frame.height, config.region_size)
        px = denoise(pad_replicate(frame, config.region_size).pixels, config)
        nums, counts = np.unique(_mad_numerators(px, grid), return_counts=True)
        n2 = grid.region_size ** 2
        scale = n2 * n2 * w          # mad = num / n2^2
        for num, c in zip(nums.tolist(), counts.tolist()):
            k = math.floor(Fraction(num) / scale)
            tally[k] = tally.get(k, 0) + c
    if not seen:
        raise DataError("empty dataset")
    nbins = max(tally) + 1
    return MadHistogram(bin_width, tuple(tally.get(k, 0) for k in range(nbins)))


def write_histogram_csv(hist: MadHistogram, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["bin_lo", "count"])
        for k, c in enumerate(hist.counts):
            w.writerow([repr(hist.bin_lo(k)), c])


# --- ROI-masked dataset export -----------------------------------------------

def mask_image(frame: Frame, config: SimConfig) -> tuple[Frame, int, int]:
    """Zero every region with srs=0; return (masked frame, relevant count, M)."""
    grid, scores = image_scores(frame, config)
    keep = scores >= config.spatial_threshold
    blocks = grid.blocks(pad_replicate(frame, config.region_size).pixels).copy()
    blocks[~keep] = 0
    masked = crop(Frame(grid.assemble(blocks), frame.t), frame.width, frame.height)
    return masked, int(keep.sum()), grid.M


def export_roi_dataset(dataset: Iterable[Frame], config: SimConfig, out_dir,
                       labels: Sequence[int] | None = None,
                       sources: Sequence[str] | None = None) -> list[Frame]:
    """Write ROI-masked copies of each image plus ``manifest.csv``.

    Outputs are ``000000.pgm, 000001.pgm, ...`` at the original image size.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    masked_frames = []
    with open(out_dir / "manifest.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["output", "input_index", "source", "label", "relevant_regions", "regions"])
        for i, frame in enumerate(dataset):
            masked, relevant, M = mask_image(frame, config)
            name = f"{i:06d}.pgm"
            write_pgm(masked, out_dir / name)
            label = "" if labels is None else int(labels[i])
            source = "" if sources is None else sources[i]
            w.writerow([name, i, source, label, relevant, M])
            masked_frames.append(masked)
    if not masked_frames:
        raise DataError("empty dataset")
    return masked_frames
