#!/usr/bin/env python3
"""Build IDX digit files from the `mnist` npm package (10,000 MNIST digits).

Usage: fetch_mnist.py OUT_DIR [--package DIR]

Without --package the tarball is fetched with `npm pack mnist`. The digits are
written in a fixed shuffled order so any prefix is roughly class balanced.
"""
import argparse
import json
import pathlib
import struct
import subprocess
import tarfile
import tempfile

import numpy as np


def load_package(pkg: pathlib.Path):
    images, labels = [], []
    for digit in range(10):
        with open(pkg / "src" / "digits" / f"{digit}.json") as fh:
            flat = json.load(fh)["data"]
        count = len(flat) // 784
        arr = np.rint(np.asarray(flat, dtype=np.float64).reshape(count, 784) * 255.0)
        images.append(np.clip(arr, 0, 255).astype(np.uint8))
        labels.append(np.full(count, digit, dtype=np.uint8))
    return np.concatenate(images), np.concatenate(labels)


def write_idx(out: pathlib.Path, images: np.ndarray, labels: np.ndarray) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "digits-images-idx3-ubyte", "wb") as fh:
        fh.write(struct.pack(">IIII", 2051, len(images), 28, 28))
        fh.write(images.tobytes())
    with open(out / "digits-labels-idx1-ubyte", "wb") as fh:
        fh.write(struct.pack(">II", 2049, len(labels)))
        fh.write(labels.tobytes())


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("out_dir", type=pathlib.Path)
    parser.add_argument("--package", type=pathlib.Path, default=None)
    args = parser.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        pkg = args.package
        if pkg is None:
            subprocess.run(["npm", "pack", "mnist@1.1.0", "--silent"], cwd=tmp, check=True,
                           stdout=subprocess.DEVNULL)
            with tarfile.open(pathlib.Path(tmp) / "mnist-1.1.0.tgz") as tar:
                tar.extractall(tmp)
            pkg = pathlib.Path(tmp) / "package"
        images, labels = load_package(pkg)

    order = np.random.RandomState(20190401).permutation(len(labels))
    write_idx(args.out_dir, images[order], labels[order])
    counts = np.bincount(labels, minlength=10)
    print(f"wrote {len(labels)} digits to {args.out_dir} (per class: {counts.tolist()})")


if __name__ == "__main__":
    main()
