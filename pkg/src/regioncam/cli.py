"""Command-line entry point.

    regioncam simulate --input seq/ --out run1/ [config flags]
    regioncam render --events run1/events.jsonl --out frames/
    regioncam sweep --input imgs.idx --param spatial_threshold --values 0:10 --out sweep.csv
    regioncam hist --input imgs.idx --bin-width 1 --out hist.csv
    regioncam export --input imgs.idx --labels labels.idx --out masked/
    regioncam redundancy --input imgs.idx

Config precedence: built-in defaults < ``--config`` file (key=value lines) <
flags. Exit status: 0 success, 1 usage or configuration error, 2 data error.
Set REGIONCAM_LOG_LEVEL (e.g. INFO, DEBUG) for progress logging.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from pathlib import Path

from . import analytics
from .core import FEATURES, NOISE_FILTERS, REFERENCE_UPDATES, SRS_ZERO_POLICIES, ConfigError, DataError, \
    SimConfig, StreamError
from .io import IMAGE_SUFFIXES, EventStreamHeader, EventStreamWriter, iter_event_stream, load_idx, load_image_sequence, \
    write_pgm
from .renderer import render_stream
from .simulator import simulate

log = logging.getLogger("regioncam")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# (flag, aliases, SimConfig field, argparse kwargs)
CONFIG_FLAGS = [
    ("--region-size", ["-N"], "region_size", dict(type=int)),
    ("--spatial-feature", ["--feature"], "spatial_feature", dict(choices=FEATURES)),
    ("--spatial-threshold", ["--theta-s"], "spatial_threshold", dict(type=float)),
    ("--temporal-pixel-delta", ["--delta"], "temporal_pixel_delta", dict(type=int)),
    ("--temporal-threshold", ["--theta-t"], "temporal_threshold", dict(type=int)),
    ("--noise-filter", [], "noise_filter", dict(choices=NOISE_FILTERS)),
    ("--srs-zero-policy", [], "srs_zero_policy", dict(choices=SRS_ZERO_POLICIES)),
    ("--reference-update", [], "reference_update", dict(choices=REFERENCE_UPDATES)),
    ("--edge-gradient-threshold", [], "edge_gradient_threshold", dict(type=float)),
    ("--corner-k", [], "corner_k", dict(type=float)),
    ("--corner-response-threshold", [], "corner_response_threshold", dict(type=float)),
]


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def resolve_config(args) -> SimConfig:
    values = read_config_file(args.config) if args.config else {}
    for _, _, field, _ in CONFIG_FLAGS:
        v = getattr(args, field)
        if v is not None:
            values[field] = v
    return SimConfig.from_dict(values)


def _add_config_flags(p):
    g = p.add_argument_group("simulation config")
    g.add_argument("--config", metavar="FILE", help="key=value file overriding defaults")
    for flag, aliases, field, kw in CONFIG_FLAGS:
        g.add_argument(flag, *aliases, dest=field, default=None, **kw)
    p.add_argument("--workers", type=int, default=1, help="worker threads (never changes output)")


def _add_input(p, labels=False):
    p.add_argument("--input", required=True, type=Path,
                   help="image directory (PGM/PPM/PNG) or IDX image file")
    p.add_argument("--limit", type=int, default=None, help="use only the first N images")
    if labels:
        p.add_argument("--labels", type=Path, default=None, help="IDX label file")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="regioncam", description="Region-level event camera simulator.")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("simulate", help="frame sequence -> events.jsonl + roi.csv")
    _add_input(p)
    p.add_argument("--out", required=True, type=Path)
    _add_config_flags(p)

    p = sub.add_parser("render", help="events.jsonl -> PGM frames")
    p.add_argument("--events", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("sweep", help="mean ROI fraction over a parameter range -> CSV")
    _add_input(p)
    p.add_argument("--param", required=True, choices=analytics.SWEEP_PARAMETERS)
    p.add_argument("--values", required=True,
                   help="comma list (0,1,2.5) or inclusive integer range lo:hi[:step]")
    p.add_argument("--sequence", action="store_true",
                   help="treat input as a video sequence (ROI = Active regions)")
    p.add_argument("--out", required=True, type=Path)
    _add_config_flags(p)

    p = sub.add_parser("hist", help="per-region MAD histogram -> CSV")
    _add_input(p)
    p.add_argument("--bin-width", type=float, default=1.0)
    p.add_argument("--out", required=True, type=Path)
    _add_config_flags(p)

    p = sub.add_parser("export", help="write ROI-masked copies of a dataset")
    _add_input(p, labels=True)
    p.add_argument("--out", required=True, type=Path)
    _add_config_flags(p)

    p = sub.add_parser("redundancy", help="print the mean fraction of srs=0 regions")
    _add_input(p)
    _add_config_flags(p)
    return ap


def parse_values(text: str) -> list[float]:
    try:
        if ":" in text:
            parts = [int(s) for s in text.split(":")]
            if len(parts) not in (2, 3):
                raise ValueError
            lo, hi = parts[0], parts[1]
            step = parts[2] if len(parts) == 3 else 1
            if step <= 0:
                raise ValueError
            return list(range(lo, hi + 1, step))
        return [float(s) if "." in s or "e" in s.lower() else int(s) for s in text.split(",")]
    except ValueError:
        raise UsageError(f"bad --values {text!r}") from None


def _frames(args):
    """Frames from an image directory or IDX file; also returns labels and sources."""
    if args.input.is_dir():
        frames = list(load_image_sequence(args.input))
        sources = sorted(p.name for p in args.input.iterdir()
                         if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
        labels = None
    else:
        ds = load_idx(args.input, getattr(args, "labels", None))
        frames, labels, sources = list(ds), ds.labels, None
    if args.limit is not None:
        frames = frames[:args.limit]
        labels = None if labels is None else labels[:args.limit]
        sources = None if sources is None else sources[:args.limit]
    if not frames:
        raise DataError(f"{args.input}: no images")
    return frames, labels, sources


def _pool(workers):
    if workers < 1:
        raise UsageError("--workers must be >= 1")
    return ThreadPoolExecutor(max_workers=workers) if workers > 1 else nullcontext(None)


def cmd_simulate(args, config):
    args.out.mkdir(parents=True, exist_ok=True)
    frames = load_image_sequence(args.input) if args.input.is_dir() else iter(load_idx(args.input))
    if args.limit is not None:
        frames = (f for i, f in enumerate(frames) if i < args.limit)
    writer = None
    points = []
    M = None
    with _pool(args.workers) as pool:
        try:
            for step in simulate(frames, config, pool, bands=args.workers):
                if writer is None:
                    M = step.grid.M
                    writer = EventStreamWriter(args.out / "events.jsonl",
                                               EventStreamHeader.for_grid(step.grid, config))
                writer.write(step.events)
                points.extend(analytics.roi_series(step.events, M).points)
                log.info("frame %d: %d active", step.relevance.t, points[-1].active)
        finally:
            if writer is not None:
                writer.close()
    if M is None:
        raise DataError(f"{args.input}: no frames")
    series = analytics.RoiSeries(M, tuple(points))
    analytics.write_roi_csv(series, args.out / "roi.csv")
    print(f"frames={len(series.points)} regions={M} mean_roi={series.mean_roi:.6f} "
          f"mean_non_relevant={series.mean_non_relevant:.6f}")


def cmd_render(args):
    header, events = iter_event_stream(args.events)
    args.out.mkdir(parents=True, exist_ok=True)
    n = 0
    for frame in render_stream(header, events):
        write_pgm(frame, args.out / f"frame_{frame.t:06d}.pgm", header.width, header.height)
        n += 1
    print(f"rendered {n} frames to {args.out}")


def cmd_sweep(args, config):
    values = parse_values(args.values)
    frames, _, _ = _frames(args)
    with _pool(args.workers) as pool:
        curve = analytics.sweep(frames, config, args.param, values, sequence=args.sequence, pool=pool)
    analytics.write_sweep_csv(curve, args.out)
    for v, roi in curve.points:
        print(f"{args.param}={v} mean_roi={roi:.6f}")


def cmd_hist(args, config):
    frames, _, _ = _frames(args)
    hist = analytics.mad_histogram(frames, config, args.bin_width)
    analytics.write_histogram_csv(hist, args.out)
    print(f"regions={hist.total} bins={len(hist.counts)}")


def cmd_export(args, config):
    frames, labels, sources = _frames(args)
    out = analytics.export_roi_dataset(frames, config, args.out, labels=labels, sources=sources)
    print(f"exported {len(out)} images to {args.out}")


def cmd_redundancy(args, config):
    frames, _, _ = _frames(args)
    with _pool(args.workers) as pool:
        r = analytics.spatial_redundancy(frames, config, pool)
    print(f"images={len(frames)} redundancy={r:.6f} mean_roi={1 - r:.6f}")


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "hist": cmd_hist,
    "export": cmd_export,
    "redundancy": cmd_redundancy,
}


def run(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("REGIONCAM_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        if args.command == "render":
            cmd_render(args)
        else:
            config = resolve_config(args)
            COMMANDS[args.command](args, config)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, StreamError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run())
