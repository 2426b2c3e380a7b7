#!/usr/bin/env python3
"""Build MNIST-format IDX files from the digits bundled in the npm ``mnist`` package.

The npm package (https://www.npmjs.com/package/mnist, v1.1.0) ships 10,000
real MNIST digits as JSON, pixels stored as value/255 rounded to three
decimals. This script restores the uint8 pixels, shuffles with a fixed seed
and writes a train/test split in the standard four-file layout, gzipped.

    npm pack mnist@1.1.0
    python scripts/build_mnist_idx.py mnist-1.1.0.tgz data/mnist --n-test 1000
"""

import argparse
import json
import tarfile
from pathlib import Path

import numpy as np

from fedadmm.data import MNIST_FILENAMES, write_idx


def read_npm_digits(tarball):
    images, labels = [], []
    with tarfile.open(tarball) as tar:
        for digit in range(10):
            member = tar.extractfile(f"package/src/digits/{digit}.json")
            flat = np.array(json.load(member)["data"], dtype=np.float64)
            pixels = np.rint(flat * 255).astype(np.uint8).reshape(-1, 28, 28)
            images.append(pixels)
            labels.append(np.full(pixels.shape[0], digit, dtype=np.uint8))
    return np.concatenate(images), np.concatenate(labels)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("tarball")
    parser.add_argument("out_dir")
    parser.add_argument("--n-test", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    images, labels = read_npm_digits(args.tarball)
    order = np.random.Generator(np.random.PCG64(args.seed)).permutation(labels.size)
    test, train = order[: args.n_test], order[args.n_test :]

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = [f"{name}.gz" for name in MNIST_FILENAMES]
    write_idx(out / names[0], images[train])
    write_idx(out / names[1], labels[train])
    write_idx(out / names[2], images[test])
    write_idx(out / names[3], labels[test])
    print(f"wrote {train.size} train / {test.size} test digits to {out}")


if __name__ == "__main__":
    main()
