"""Region-level event camera simulator."""

from .core import (
    ConfigError,
    DataError,
    Frame,
    RegionCamError,
    RegionGrid,
    RegionView,
    SimConfig,
    StreamError,
    build_grid,
    pad_replicate,
    to_grayscale,
)
from .io import EventStreamHeader, RegionEvent, load_idx, load_image_sequence, read_event_stream, write_event_stream
from .rcm import RcmState, RelevanceBits, RelevanceMap, classify, mad, rcm_step, variance
from .renderer import RendererState, bootstrap, render_step, render_stream
from .simulator import simulate

__version__ = "0.1.0"
