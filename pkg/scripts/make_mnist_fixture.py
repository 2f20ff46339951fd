#!/usr/bin/env python3
"""Build the 1000-image MNIST IDX fixture used by the test suite.

Source: the ``mnist`` npm package (MIT, https://github.com/cazala/mnist), which
bundles the 10000 MNIST test digits as JSON, one file per class, with each
intensity stored as ``round(byte / 255, 3)``. Multiplying by 255 and rounding
recovers the original byte exactly (max error 0.1275 < 0.5).

    npm pack mnist && tar xzf mnist-*.tgz
    python scripts/make_mnist_fixture.py package/src/digits tests/data

Images are interleaved by class (0, 1, ..., 9, 0, 1, ...) so any prefix of the
fixture is class-balanced.
"""

import argparse
import gzip
import json
import struct
from pathlib import Path

import numpy as np

PER_CLASS = 100


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("digits_dir", type=Path)
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--per-class", type=int, default=PER_CLASS)
    args = ap.parse_args()

    classes = []
    for d in range(10):
        raw = np.asarray(json.loads((args.digits_dir / f"{d}.json").read_text())["data"])
        imgs = np.rint(raw * 255).astype(np.uint8).reshape(-1, 28, 28)
        classes.append(imgs[: args.per_class])

    images = np.stack([classes[d][i] for i in range(args.per_class) for d in range(10)])
    labels = np.array([d for _ in range(args.per_class) for d in range(10)], dtype=np.uint8)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    n = len(images)
    with gzip.GzipFile(args.out_dir / "mnist1k-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 2051, n, 28, 28))
        f.write(images.tobytes())
    with gzip.GzipFile(args.out_dir / "mnist1k-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 2049, n))
        f.write(labels.tobytes())
    print(f"wrote {n} images to {args.out_dir}")


if __name__ == "__main__":
    main()
