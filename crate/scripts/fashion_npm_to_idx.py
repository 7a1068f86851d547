#!/usr/bin/env python3
"""Build Fashion-MNIST IDX files from the `fashion-mnist` npm package.

The package ships one JSON file per class (src/clothes/<label>.json, each
`{"data": [[784 pixels], ...]}`) with no train/test split. This script takes
the first 6000 images of every class for training and the remainder for
testing, shuffles each split with a fixed seed, and writes uncompressed IDX.

    npm pack fashion-mnist@1.1.0 && tar xzf fashion-mnist-1.1.0.tgz
    python3 scripts/fashion_npm_to_idx.py package/src/clothes data/fashion
"""

import json
import random
import struct
import sys
from pathlib import Path

TRAIN_PER_CLASS = 6000
SEED = 0


def write_idx(path, dims, payload):
    with open(path, "wb") as f:
        f.write(struct.pack(">BBBB", 0, 0, 0x08, len(dims)))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(payload)


def main(src, dst):
    src, dst = Path(src), Path(dst)
    dst.mkdir(parents=True, exist_ok=True)
    train, test = [], []
    for label in range(10):
        # Class 0 carries two empty placeholder entries; everything else is 7000 images.
        images = [img for img in json.loads((src / f"{label}.json").read_text())["data"] if img]
        for i, img in enumerate(images):
            if len(img) != 784 or not all(0 <= p <= 255 for p in img):
                raise SystemExit(f"class {label} image {i} is malformed")
            (train if i < TRAIN_PER_CLASS else test).append((bytes(img), label))
    rng = random.Random(SEED)
    for name, split in (("train", train), ("t10k", test)):
        rng.shuffle(split)
        write_idx(dst / f"{name}-images-idx3-ubyte", [len(split), 28, 28],
                  b"".join(img for img, _ in split))
        write_idx(dst / f"{name}-labels-idx1-ubyte", [len(split)],
                  bytes(label for _, label in split))
        print(f"{name}: {len(split)} samples")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        raise SystemExit(__doc__)
    main(sys.argv[1], sys.argv[2])
