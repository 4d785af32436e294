#!/usr/bin/env python3
"""Build the MNIST-1k train/test subset in IDX format.

Source: the 5000-image MNIST sample (500 per digit) bundled with the
`mlxtend` wheel on PyPI (mlxtend/data/data/mnist_5k.csv.gz, BSD-3 package,
MNIST images CC BY-SA 3.0). For every digit the first 100 images go to the
training split and the next 100 to the test split; both splits are
interleaved round-robin by digit so sample i has label i % 10.

Usage:
    pip download --no-deps mlxtend==0.24.0 -d /tmp/mlx
    python3 scripts/make_mnist_subset.py /tmp/mlx/mlxtend-0.24.0-py3-none-any.whl data/mnist-1k
"""
import gzip
import os
import struct
import sys
import zipfile

PER_CLASS = 100


def write_idx(out_dir, name, images, labels):
    with open(os.path.join(out_dir, f"{name}-images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))
    with open(os.path.join(out_dir, f"{name}-labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    wheel, out_dir = sys.argv[1], sys.argv[2]
    raw = zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz")
    by_class = {d: [] for d in range(10)}
    for line in gzip.decompress(raw).decode().splitlines():
        vals = [int(float(x)) for x in line.split(",")]
        by_class[vals[-1]].append(vals[:-1])
    os.makedirs(out_dir, exist_ok=True)
    for name, lo in (("train", 0), ("test", PER_CLASS)):
        images, labels = [], []
        for i in range(PER_CLASS):
            for d in range(10):
                images.append(by_class[d][lo + i])
                labels.append(d)
        write_idx(out_dir, name, images, labels)


if __name__ == "__main__":
    main()
