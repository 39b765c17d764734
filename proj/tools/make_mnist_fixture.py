#!/usr/bin/env python3
"""Build the bundled MNIST subset fixture as gzipped IDX files.

Source: the `mnist` npm package (src/digits/<d>.json, ~1000 real MNIST
digits per class, pixel intensities stored as floats in [0, 1]).

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/make_mnist_fixture.py package/src/digits data/mnist

Per class, the first 80% of samples go to the training split and the rest
to the test split; each split is then shuffled with a fixed seed.
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path

PIXELS = 28 * 28


def write_idx(path, magic, dims, payload):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in dims)
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(header + payload)


def main(src, dst):
    src, dst = Path(src), Path(dst)
    dst.mkdir(parents=True, exist_ok=True)
    train, test = [], []
    for digit in range(10):
        raw = json.loads((src / f"{digit}.json").read_text())["data"]
        count = len(raw) // PIXELS
        images = [
            bytes(min(255, max(0, round(v * 255))) for v in raw[k * PIXELS:(k + 1) * PIXELS])
            for k in range(count)
        ]
        cut = int(0.8 * count)
        train += [(img, digit) for img in images[:cut]]
        test += [(img, digit) for img in images[cut:]]
    rng = random.Random(20240521)
    rng.shuffle(train)
    rng.shuffle(test)
    for name, rows in (("train", train), ("t10k", test)):
        write_idx(dst / f"{name}-images-idx3-ubyte.gz", 0x803, (len(rows), 28, 28),
                  b"".join(img for img, _ in rows))
        write_idx(dst / f"{name}-labels-idx1-ubyte.gz", 0x801, (len(rows),),
                  bytes(label for _, label in rows))
        print(f"{name}: {len(rows)} samples")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    main(sys.argv[1], sys.argv[2])
