"""Dataset ingestion, event-stream serialisation and PGM export.

Event streams are JSON-lines files. The first line is a header object echoing
the grid and the full run configuration; every following line is one region
event with keys in the fixed order ``t, rid, srs, trs, ss, mc, px``::

    {"t":1,"rid":3,"srs":1,"trs":1,"ss":1.500000,"mc":4,"px":[0,0,0,0]}

``ss`` always carries exactly six decimals and ``px`` is omitted for
inactive regions.
"""

from __future__ import annotations

import gzip
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .core import DataError, Frame, RegionGrid, SimConfig, StreamError, crop, to_grayscale

log = logging.getLogger(__name__)

FORMAT_NAME = "regioncam-events"
FORMAT_VERSION = 1
EVENT_KEYS = ("t", "rid", "srs", "trs", "ss", "mc", "px")

IDX_IMAGES_MAGIC = 2051
IDX_LABELS_MAGIC = 2049

IMAGE_SUFFIXES = {".pgm", ".ppm", ".pnm", ".png"}


def quantize_score(x: float) -> float:
    """Round a score to the six decimals the event stream carries."""
    return float(f"{float(x):.6f}")


@dataclass(frozen=True)
class RegionEvent:
    t: int
    rid: int
    srs: int
    trs: int
    spatial_score: float
    mismatch_count: int
    payload: bytes | None = None

    def __post_init__(self):
        if self.srs not in (0, 1) or self.trs not in (0, 1):
            raise ValueError(f"relevance bits must be 0 or 1, got srs={self.srs} trs={self.trs}")
        if (self.payload is not None) != (self.srs == 1 and self.trs == 1):
            raise ValueError(f"event t={self.t} rid={self.rid}: payload must be present "
                             "exactly when srs=1 and trs=1")

    @property
    def active(self) -> bool:
        return self.payload is not None

    def to_line(self) -> str:
        line = (f'{{"t":{self.t},"rid":{self.rid},"srs":{self.srs},"trs":{self.trs},'
                f'"ss":{self.spatial_score:.6f},"mc":{self.mismatch_count}')
        if self.payload is not None:
            line += ',"px":[' + ",".join(map(str, self.payload)) + "]"
        return line + "}"


@dataclass(frozen=True)
class EventStreamHeader:
    region_size: int
    grid_rows: int
    grid_cols: int
    width: int
    height: int
    config: SimConfig
    version: int = FORMAT_VERSION

    @classmethod
    def for_grid(cls, grid: RegionGrid, config: SimConfig) -> EventStreamHeader:
        return cls(grid.region_size, grid.grid_rows, grid.grid_cols, grid.width, grid.height, config)

    @property
    def grid(self) -> RegionGrid:
        return RegionGrid(self.region_size, self.grid_rows, self.grid_cols, self.width, self.height)

    def to_line(self) -> str:
        obj = {
            "format": FORMAT_NAME,
            "version": self.version,
            "grid": {
                "region_size": self.region_size,
                "grid_rows": self.grid_rows,
                "grid_cols": self.grid_cols,
                "width": self.width,
                "height": self.height,
            },
            "config": self.config.as_dict(),
        }
        return json.dumps(obj, separators=(",", ":"))

    @classmethod
    def from_line(cls, line: str) -> EventStreamHeader:
        try:
            obj = json.loads(line)
            if obj.get("format") != FORMAT_NAME:
                raise StreamError(f"line 1: not a {FORMAT_NAME} stream")
            if obj.get("version") != FORMAT_VERSION:
                raise StreamError(f"line 1: unsupported version {obj.get('version')!r}")
            g = obj["grid"]
            config = SimConfig.from_dict(obj["config"])
            header = cls(int(g["region_size"]), int(g["grid_rows"]), int(g["grid_cols"]),
                         int(g["width"]), int(g["height"]), config)
        except StreamError:
            raise
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            raise StreamError(f"line 1: malformed header: {exc}") from None
        if header.region_size != config.region_size:
            raise StreamError("line 1: grid region_size disagrees with config")
        grid = header.grid
        if not (0 < header.width <= grid.padded_width and 0 < header.height <= grid.padded_height
                and grid.padded_width - header.width < header.region_size
                and grid.padded_height - header.height < header.region_size):
            raise StreamError("line 1: grid dimensions are inconsistent")
        return header


def _parse_event(line: str, lineno: int, header: EventStreamHeader) -> RegionEvent:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise StreamError(f"line {lineno}: malformed JSON: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise StreamError(f"line {lineno}: expected an object")
    keys = tuple(obj)
    if keys not in (EVENT_KEYS, EVENT_KEYS[:-1]):
        raise StreamError(f"line {lineno}: unexpected keys {list(keys)}")
    ints = [obj[k] for k in ("t", "rid", "srs", "trs", "mc")]
    if not all(type(v) is int for v in ints) or type(obj["ss"]) not in (int, float):
        raise StreamError(f"line {lineno}: field of wrong type")
    payload = None
    if "px" in obj:
        px = obj["px"]
        n2 = header.region_size ** 2
        if not isinstance(px, list) or len(px) != n2:
            raise StreamError(f"line {lineno}: payload must hold {n2} intensities")
        try:
            payload = bytes(px)
        except (ValueError, TypeError):
            raise StreamError(f"line {lineno}: payload intensities must be integers in [0, 255]") from None
    if not 0 <= obj["rid"] < header.grid.M:
        raise StreamError(f"line {lineno}: rid {obj['rid']} out of range")
    try:
        return RegionEvent(obj["t"], obj["rid"], obj["srs"], obj["trs"],
                           float(obj["ss"]), obj["mc"], payload)
    except ValueError as exc:
        raise StreamError(f"line {lineno}: {exc}") from None


class EventStreamWriter:
    """Incremental writer; events must arrive sorted by (t, rid)."""

    def __init__(self, path, header: EventStreamHeader):
        self.header = header
        self._last: tuple[int, int] | None = None
        self._fh = open(path, "w", encoding="utf-8", newline="\n")
        self._fh.write(header.to_line() + "\n")

    def write(self, events: Iterable[RegionEvent]):
        for ev in events:
            key = (ev.t, ev.rid)
            if self._last is not None and key <= self._last:
                raise StreamError(f"event {key} is not after {self._last}")
            self._last = key
            self._fh.write(ev.to_line() + "\n")

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_event_stream(path, header: EventStreamHeader, events: Iterable[RegionEvent]):
    with EventStreamWriter(path, header) as w:
        w.write(events)


def iter_event_stream(path) -> tuple[EventStreamHeader, Iterator[RegionEvent]]:
    """Open a stream, parse its header and return a lazy event iterator."""
    fh = open(path, "r", encoding="utf-8", newline="")
    first = fh.readline()
    if not first:
        fh.close()
        raise StreamError("line 1: empty event stream")
    try:
        header = EventStreamHeader.from_line(first)
    except StreamError:
        fh.close()
        raise

    def events():
        last = None
        with fh:
            for lineno, line in enumerate(fh, start=2):
                if not line.endswith("\n"):
                    raise StreamError(f"line {lineno}: missing LF terminator")
                ev = _parse_event(line[:-1], lineno, header)
                key = (ev.t, ev.rid)
                if last is not None and key <= last:
                    raise StreamError(f"line {lineno}: event {key} out of order after {last}")
                last = key
                yield ev

    return header, events()


def read_event_stream(path) -> tuple[EventStreamHeader, list[RegionEvent]]:
    header, events = iter_event_stream(path)
    return header, list(events)


def group_by_frame(events: Iterable[RegionEvent]) -> Iterator[list[RegionEvent]]:
    """Split a (t, rid)-sorted event iterable into per-frame lists."""
    batch: list[RegionEvent] = []
    for ev in events:
        if batch and ev.t != batch[0].t:
            yield batch
            batch = []
        batch.append(ev)
    if batch:
        yield batch


# --- PGM / PPM ---------------------------------------------------------------

def write_pgm(frame: Frame, path, width: int | None = None, height: int | None = None):
    """Write a binary P5 PGM, optionally cropped to ``width x height``."""
    if width is not None or height is not None:
        frame = crop(frame, width or frame.width, height or frame.height)
    if frame.width == 0 or frame.height == 0:
        raise ValueError("cannot write an empty frame")
    with open(path, "wb") as f:
        f.write(f"P5\n{frame.width} {frame.height}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(frame.pixels, dtype=np.uint8).tobytes())


def _netpbm_header(data: bytes, count: int) -> tuple[list[int], int]:
    """Read ``count`` integer header fields after the magic; return them and the data offset."""
    values = []
    pos = 2
    while len(values) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos] == ord("#"):
            while pos < len(data) and data[pos] not in b"\r\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise ValueError("bad header")
        values.append(int(data[start:pos]))
    # exactly one whitespace byte separates the header from raster data
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise ValueError("bad header terminator")
    return values, pos + 1


def _scale(raw: np.ndarray, maxval: int) -> np.ndarray:
    if maxval == 255:
        return raw.astype(np.uint8)
    if not 0 < maxval < 65536:
        raise ValueError(f"bad maxval {maxval}")
    r = raw.astype(np.int64)
    if r.max(initial=0) > maxval:
        raise ValueError("sample exceeds maxval")
    return ((r * 255 * 2 + maxval) // (2 * maxval)).astype(np.uint8)


def decode_netpbm(data: bytes, t: int = 0) -> Frame:
    """Decode P2/P5 (gray) or P3/P6 (colour, converted to luma) images."""
    magic = data[:2]
    if magic not in (b"P2", b"P3", b"P5", b"P6"):
        raise ValueError(f"unsupported netpbm magic {magic!r}")
    (w, h, maxval), off = _netpbm_header(data, 3)
    channels = 3 if magic in (b"P3", b"P6") else 1
    n = w * h * channels
    if magic in (b"P5", b"P6"):
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
        body = data[off:off + n * dtype.itemsize]
        if len(body) < n * dtype.itemsize:
            raise ValueError("truncated raster")
        raw = np.frombuffer(body, dtype=dtype)
    else:
        raw = np.array(data[off:].split(), dtype=np.int64)
        if raw.size < n:
            raise ValueError("truncated raster")
        raw = raw[:n]
    px = _scale(raw, maxval)
    if channels == 3:
        return to_grayscale(px.reshape(h, w, 3), t)
    return Frame(px.reshape(h, w).copy(), t)


def read_pgm(path, t: int = 0) -> Frame:
    try:
        return decode_netpbm(Path(path).read_bytes(), t)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def read_image(path, t: int = 0) -> Frame:
    path = Path(path)
    if path.suffix.lower() != ".png":
        return read_pgm(path, t)
    try:
        from PIL import Image
    except ImportError:
        raise DataError(f"{path}: PNG input needs Pillow installed") from None
    try:
        with Image.open(path) as im:
            if im.mode == "L":
                return Frame(np.asarray(im, dtype=np.uint8).copy(), t)
            if im.mode in ("I;16", "I;16B", "I"):
                return Frame(_scale(np.asarray(im).astype(np.int64), 65535), t)
            return to_grayscale(np.asarray(im.convert("RGB")), t)
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: cannot decode image: {exc}") from None


def load_image_sequence(directory) -> Iterator[Frame]:
    """Frames of every supported image in ``directory``, in filename order.

    The directory is scanned eagerly (so an empty directory fails at call
    time); images are decoded lazily.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"{directory}: not a directory")
    files = sorted(p for p in directory.iterdir()
                   if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise DataError(f"{directory}: no PGM/PPM/PNG images found")
    log.debug("found %d images in %s", len(files), directory)
    return _decode_all(files)


def _decode_all(files: list[Path]) -> Iterator[Frame]:
    shape = None
    for t, path in enumerate(files):
        frame = read_image(path, t)
        if shape is None:
            shape = frame.pixels.shape
        elif frame.pixels.shape != shape:
            raise DataError(f"{path}: image is {frame.width}x{frame.height}, "
                            f"expected {shape[1]}x{shape[0]}")
        yield frame


# --- IDX ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class IdxDataset:
    images: np.ndarray              # (count, rows, cols) uint8
    labels: np.ndarray | None = None

    def __len__(self):
        return len(self.images)

    def __getitem__(self, i) -> Frame:
        return Frame(self.images[i], int(i))

    def __iter__(self) -> Iterator[Frame]:
        for i in range(len(self.images)):
            yield self[i]

    def head(self, n: int) -> IdxDataset:
        labels = None if self.labels is None else self.labels[:n]
        return IdxDataset(self.images[:n], labels)


def _read_maybe_gzip(path) -> bytes:
    data = Path(path).read_bytes()
    if data[:2] == b"\x1f\x8b":
        try:
            data = gzip.decompress(data)
        except (OSError, EOFError) as exc:
            raise DataError(f"{path}: corrupt gzip data: {exc}") from None
    return data


def _parse_idx(data: bytes, path, magic_expected: int, ndim: int) -> np.ndarray:
    head = 4 * (1 + ndim)
    if len(data) < head:
        raise DataError(f"{path}: truncated IDX header")
    magic, *dims = struct.unpack(f">{1 + ndim}I", data[:head])
    if magic != magic_expected:
        raise DataError(f"{path}: bad IDX magic {magic}, expected {magic_expected}")
    n = int(np.prod(dims))
    body = data[head:head + n]
    if len(body) < n:
        raise DataError(f"{path}: truncated IDX payload ({len(body)} of {n} bytes)")
    return np.frombuffer(body, dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path=None) -> IdxDataset:
    """Load an IDX (MNIST-format) image file, plus an optional label file.

    Gzip-compressed files are detected by their magic bytes.
    """
    images = _parse_idx(_read_maybe_gzip(images_path), images_path, IDX_IMAGES_MAGIC, 3)
    labels = None
    if labels_path is not None:
        labels = _parse_idx(_read_maybe_gzip(labels_path), labels_path, IDX_LABELS_MAGIC, 1)
        if len(labels) != len(images):
            raise DataError(f"{labels_path}: {len(labels)} labels for {len(images)} images")
    return IdxDataset(images, labels)
