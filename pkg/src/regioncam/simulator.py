"""Frame loop: pad, score, classify and emit events for a whole sequence."""

from __future__ import annotations

from concurrent.futures import Executor
from dataclasses import dataclass
from typing import Iterable, Iterator

from .core import ConfigError, Frame, RegionGrid, SimConfig, build_grid, pad_replicate
from .io import RegionEvent
from .rcm import RcmState, RelevanceMap, rcm_step


@dataclass(frozen=True)
class Step:
    grid: RegionGrid
    relevance: RelevanceMap
    events: list[RegionEvent]


def simulate(frames: Iterable[Frame], config: SimConfig,
             pool: Executor | None = None, bands: int = 1) -> Iterator[Step]:
    """Run the relevance pipeline over a frame sequence.

    Frames must share dimensions and have strictly increasing ``t``. The
    grid is built from the first frame.
    """
    grid = None
    state = RcmState()
    last_t = None
    for frame in frames:
        if grid is None:
            grid = build_grid(frame.width, frame.height, config.region_size)
        elif (frame.width, frame.height) != (grid.width, grid.height):
            raise ConfigError(f"frame t={frame.t} is {frame.width}x{frame.height}, "
                              f"sequence is {grid.width}x{grid.height}")
        if last_t is not None and frame.t <= last_t:
            raise ConfigError(f"frame index {frame.t} does not follow {last_t}")
        last_t = frame.t
        rmap, events, state = rcm_step(pad_replicate(frame, config.region_size),
                                       state, grid, config, pool, bands)
        yield Step(grid, rmap, events)
