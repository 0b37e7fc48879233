#!/usr/bin/env python3
"""Build the bundled IDX fixtures under data/.

mnist:         first N records of the original MNIST training files
               (npm package `mnist-data`, data/train-*-idx*-ubyte).
fashion-mnist: per-class byte arrays from the npm package `fashion-mnist`
               (src/clothes/<label>.json), interleaved round-robin so that
               every class has PER_CLASS samples in stable order.

usage: make_fixtures.py <mnist-data dir> <fashion-mnist dir> <out dir>
"""
import gzip
import json
import os
import struct
import sys

MNIST_N = 10000
PER_CLASS = 600


def write_idx(path, images, labels):
    n = len(labels)
    with gzip.GzipFile(path + "-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, n, 28, 28))
        for img in images:
            f.write(bytes(img))
    with gzip.GzipFile(path + "-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, n))
        f.write(bytes(labels))


def main():
    mnist_dir, fashion_dir, out = sys.argv[1:4]
    with open(os.path.join(mnist_dir, "train-images-idx3-ubyte"), "rb") as f:
        raw = f.read()
    images = [raw[16 + i * 784: 16 + (i + 1) * 784] for i in range(MNIST_N)]
    with open(os.path.join(mnist_dir, "train-labels-idx1-ubyte"), "rb") as f:
        labels = list(f.read()[8: 8 + MNIST_N])
    os.makedirs(os.path.join(out, "mnist"), exist_ok=True)
    write_idx(os.path.join(out, "mnist", "train"), images, labels)

    per_class = []
    for label in range(10):
        with open(os.path.join(fashion_dir, "src", "clothes", f"{label}.json")) as f:
            per_class.append(json.load(f)["data"][:PER_CLASS])
    images, labels = [], []
    for i in range(PER_CLASS):
        for label in range(10):
            images.append(per_class[label][i])
            labels.append(label)
    os.makedirs(os.path.join(out, "fashion-mnist"), exist_ok=True)
    write_idx(os.path.join(out, "fashion-mnist", "train"), images, labels)


if __name__ == "__main__":
    main()
