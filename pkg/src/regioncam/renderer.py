"""Adaptive rendering: rebuild full frames from region events.

Each output frame is a disjoint region-wise composition of the current
payloads (Active regions) and the previous output (everything else), with
spatially irrelevant regions either zeroed or held depending on policy.
Frames are in padded grid dimensions; crop at export time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .core import Frame, RegionGrid, StreamError
from .io import EventStreamHeader, RegionEvent, group_by_frame


@dataclass(frozen=True)
class RendererState:
    rendered: Frame | None = None

    @property
    def initialized(self) -> bool:
        return self.rendered is not None


def _check_frame_events(events: Sequence[RegionEvent], grid: RegionGrid):
    if len(events) != grid.M:
        raise StreamError(f"expected {grid.M} region events per frame, got {len(events)}")
    t = events[0].t
    for i, ev in enumerate(events):
        if ev.t != t:
            raise StreamError(f"frame {t}: event for t={ev.t} mixed in")
        if ev.rid != i:
            raise StreamError(f"frame {t}: events not sorted by rid (position {i} holds rid {ev.rid})")


def _payload(ev: RegionEvent, n2: int) -> np.ndarray:
    if ev.payload is None:
        raise StreamError(f"frame {ev.t}: active region {ev.rid} carries no payload")
    px = np.frombuffer(ev.payload, dtype=np.uint8)
    if px.size != n2:
        raise StreamError(f"frame {ev.t}: region {ev.rid} payload has {px.size} pixels, expected {n2}")
    return px


def bootstrap(events: Sequence[RegionEvent], grid: RegionGrid) -> RendererState:
    """Initial state from a complete set of first-frame payloads."""
    n2 = grid.region_size ** 2
    by_rid = {ev.rid: ev for ev in events}
    missing = [rid for rid in range(grid.M) if rid not in by_rid]
    if missing:
        raise StreamError(f"bootstrap frame lacks regions {missing[:10]}")
    blocks = np.empty((grid.M, n2), dtype=np.uint8)
    for rid in range(grid.M):
        blocks[rid] = _payload(by_rid[rid], n2)
    t = by_rid[0].t
    return RendererState(Frame(grid.assemble(blocks), t))


def render_step(state: RendererState, events: Sequence[RegionEvent], grid: RegionGrid,
                srs_zero_policy: str = "zero") -> tuple[Frame, RendererState]:
    if not state.initialized:
        raise StreamError("renderer is not bootstrapped")
    _check_frame_events(events, grid)
    if srs_zero_policy not in ("zero", "hold"):
        raise ValueError(f"unknown srs_zero_policy {srs_zero_policy!r}")
    n2 = grid.region_size ** 2
    prev = grid.blocks(state.rendered.pixels)
    out = prev.copy()
    for ev in events:
        if ev.srs and ev.trs:
            out[ev.rid] = _payload(ev, n2)
        elif not ev.srs and srs_zero_policy == "zero":
            out[ev.rid] = 0
        # otherwise the region keeps R(t-1)
    frame = Frame(grid.assemble(out), events[0].t)
    return frame, RendererState(frame)


def render_stream(header: EventStreamHeader, events: Iterable[RegionEvent]) -> Iterator[Frame]:
    """Yield one padded frame per time step of an event stream."""
    grid = header.grid
    policy = header.config.srs_zero_policy
    state = RendererState()
    for batch in group_by_frame(events):
        if not state.initialized:
            _check_frame_events(batch, grid)
            state = bootstrap(batch, grid)
            yield state.rendered
        else:
            frame, state = render_step(state, batch, grid, policy)
            yield frame
