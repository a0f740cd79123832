"""Write a small MNIST train/test pair in gzipped IDX format.

The source is the 5,000-image MNIST sample bundled inside the mlxtend wheel
(``mlxtend/data/data/mnist_5k.csv.gz``; 500 images per digit, pixels then
label per row). Usage::

    pip download --no-deps mlxtend -d /tmp
    python scripts/make_mnist_subset.py /tmp/mlxtend-*.whl tests/data
"""
import argparse
import gzip
import io
import struct
import zipfile
from pathlib import Path

import numpy as np


def write_idx(path: Path, images: np.ndarray, labels: np.ndarray, stem: str) -> None:
    n = len(labels)
    img = struct.pack(">IIII", 0x00000803, n, 28, 28) + images.astype(np.uint8).tobytes()
    lab = struct.pack(">II", 0x00000801, n) + labels.astype(np.uint8).tobytes()
    # mtime=0 keeps the archives byte-stable
    with gzip.GzipFile(path / f"{stem}-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(img)
    with gzip.GzipFile(path / f"{stem}-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(lab)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("wheel")
    ap.add_argument("out", type=Path)
    ap.add_argument("--train", type=int, default=1000)
    ap.add_argument("--test", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    with zipfile.ZipFile(args.wheel) as z:
        raw = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz"))
    table = np.loadtxt(io.BytesIO(raw), delimiter=",", dtype=np.int64)
    order = np.random.default_rng(args.seed).permutation(len(table))
    table = table[order]
    args.out.mkdir(parents=True, exist_ok=True)
    tr = table[: args.train]
    te = table[args.train : args.train + args.test]
    write_idx(args.out, tr[:, :-1], tr[:, -1], "train")
    write_idx(args.out, te[:, :-1], te[:, -1], "t10k")
    print(f"wrote {len(tr)} train / {len(te)} test examples to {args.out}")


if __name__ == "__main__":
    main()
