"""Frames, run configuration and the region grid.

A frame is a 2-D ``uint8`` array plus a frame index. The region grid is the
logical partition of a (padded) frame into ``M`` square regions of ``N x N``
pixels, numbered row-major.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Iterator

import numpy as np


class RegionCamError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(RegionCamError, ValueError):
    """Invalid configuration, or input that does not fit the configured grid."""


class DataError(RegionCamError):
    """Input data that cannot be decoded or is inconsistent."""


class StreamError(RegionCamError):
    """A corrupt or out-of-order event stream."""


@dataclass(frozen=True, eq=False)
class Frame:
    """One grayscale image: ``pixels`` has shape (height, width), dtype uint8."""

    pixels: np.ndarray
    t: int = 0

    def __post_init__(self):
        px = self.pixels
        if not isinstance(px, np.ndarray) or px.ndim != 2:
            raise ValueError("frame pixels must be a 2-D array")
        if px.dtype != np.uint8:
            if px.size and (px.min() < 0 or px.max() > 255):
                raise ValueError("frame intensities must lie in [0, 255]")
            object.__setattr__(self, "pixels", px.astype(np.uint8))
        if self.t < 0:
            raise ValueError(f"frame index must be non-negative, got {self.t}")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return self.t == other.t and np.array_equal(self.pixels, other.pixels)

    def __repr__(self):
        return f"Frame(t={self.t}, {self.width}x{self.height})"


FEATURES = ("edge", "corner", "mad", "variance")
NOISE_FILTERS = ("none", "median3")
SRS_ZERO_POLICIES = ("zero", "hold")
REFERENCE_UPDATES = ("every_frame", "on_event")

# Exact integer score arithmetic stays inside int64 up to this size.
MAX_REGION_SIZE = 2048


@dataclass(frozen=True)
class SimConfig:
    region_size: int = 8
    spatial_feature: str = "mad"
    spatial_threshold: float = 3.0
    temporal_pixel_delta: int = 2
    temporal_threshold: int = 1
    noise_filter: str = "median3"
    srs_zero_policy: str = "zero"
    reference_update: str = "every_frame"
    edge_gradient_threshold: float = 100.0
    corner_k: float = 0.04
    corner_response_threshold: float = 1e6

    def __post_init__(self):
        if not 1 <= self.region_size <= MAX_REGION_SIZE:
            raise ConfigError(f"region_size must be in [1, {MAX_REGION_SIZE}], got {self.region_size}")
        for name, allowed in (
            ("spatial_feature", FEATURES),
            ("noise_filter", NOISE_FILTERS),
            ("srs_zero_policy", SRS_ZERO_POLICIES),
            ("reference_update", REFERENCE_UPDATES),
        ):
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        for name in ("spatial_threshold", "temporal_pixel_delta", "temporal_threshold"):
            value = getattr(self, name)
            if not value >= 0:
                raise ConfigError(f"{name} must be >= 0, got {value}")
        if not math.isfinite(self.corner_k):
            raise ConfigError("corner_k must be finite")

    def replace(self, **changes) -> SimConfig:
        return type(self)(**{**self.as_dict(), **changes})

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> SimConfig:
        """Build a config from loosely typed values (strings from a file or CLI)."""
        known = {f.name: f for f in fields(cls)}
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for name, value in data.items():
            kind = type(known[name].default)
            try:
                if kind is int:
                    if isinstance(value, float) and not value.is_integer():
                        raise ValueError(value)
                    kwargs[name] = int(value)
                elif kind is float:
                    kwargs[name] = float(value)
                else:
                    kwargs[name] = str(value)
            except ValueError:
                raise ConfigError(f"bad value for {name}: {value!r}") from None
        return cls(**kwargs)


@dataclass(frozen=True)
class RegionGrid:
    """Partition of a ``width x height`` frame, padded up to multiples of N."""

    region_size: int
    grid_rows: int
    grid_cols: int
    width: int
    height: int

    @property
    def M(self) -> int:
        return self.grid_rows * self.grid_cols

    @property
    def padded_width(self) -> int:
        return self.grid_cols * self.region_size

    @property
    def padded_height(self) -> int:
        return self.grid_rows * self.region_size

    def origin(self, rid: int) -> tuple[int, int]:
        if not 0 <= rid < self.M:
            raise IndexError(f"region id {rid} out of range for M={self.M}")
        r, c = divmod(rid, self.grid_cols)
        return r * self.region_size, c * self.region_size

    def view(self, frame: Frame | np.ndarray, rid: int) -> RegionView:
        px = frame.pixels if isinstance(frame, Frame) else frame
        self._check(px)
        r0, c0 = self.origin(rid)
        n = self.region_size
        return RegionView(rid, r0, c0, px[r0:r0 + n, c0:c0 + n])

    def views(self, frame: Frame | np.ndarray) -> Iterator[RegionView]:
        for rid in range(self.M):
            yield self.view(frame, rid)

    def blocks(self, arr: np.ndarray) -> np.ndarray:
        """Return an (M, N*N) array of per-region pixels, rows in rid order."""
        self._check(arr)
        n = self.region_size
        b = arr.reshape(self.grid_rows, n, self.grid_cols, n).swapaxes(1, 2)
        return np.ascontiguousarray(b).reshape(self.M, n * n)

    def assemble(self, blocks: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`blocks`."""
        n = self.region_size
        b = np.asarray(blocks).reshape(self.grid_rows, self.grid_cols, n, n).swapaxes(1, 2)
        return np.ascontiguousarray(b).reshape(self.padded_height, self.padded_width)

    def _check(self, arr: np.ndarray):
        if arr.shape[:2] != (self.padded_height, self.padded_width):
            raise ConfigError(
                f"frame is {arr.shape[1]}x{arr.shape[0]}, grid expects "
                f"{self.padded_width}x{self.padded_height}"
            )


@dataclass(frozen=True, eq=False)
class RegionView:
    rid: int
    origin_row: int
    origin_col: int
    pixels: np.ndarray


def build_grid(width: int, height: int, region_size: int) -> RegionGrid:
    if width < 1 or height < 1:
        raise ConfigError(f"frame dimensions must be positive, got {width}x{height}")
    if region_size < 1:
        raise ConfigError(f"region size must be positive, got {region_size}")
    n = region_size
    return RegionGrid(n, -(-height // n), -(-width // n), width, height)


def to_grayscale(rgb: np.ndarray, t: int = 0) -> Frame:
    """Rec.601 luma, rounded half up: (299 R + 587 G + 114 B + 500) // 1000."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) array, got shape {rgb.shape}")
    c = rgb.astype(np.int64)
    y = (299 * c[..., 0] + 587 * c[..., 1] + 114 * c[..., 2] + 500) // 1000
    return Frame(np.clip(y, 0, 255).astype(np.uint8), t)


def pad_replicate(frame: Frame, region_size: int) -> Frame:
    h, w = frame.pixels.shape
    if h == 0 or w == 0:
        raise ValueError("cannot pad an empty frame")
    ph = -(-h // region_size) * region_size - h
    pw = -(-w // region_size) * region_size - w
    if ph == 0 and pw == 0:
        return frame
    return Frame(np.pad(frame.pixels, ((0, ph), (0, pw)), mode="edge"), frame.t)


def crop(frame: Frame, width: int, height: int) -> Frame:
    if width == frame.width and height == frame.height:
        return frame
    return Frame(np.ascontiguousarray(frame.pixels[:height, :width]), frame.t)
