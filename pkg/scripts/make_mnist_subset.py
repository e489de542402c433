"""Write the 5000-image MNIST subset bundled with mlxtend as IDX files.

Usage: python scripts/make_mnist_subset.py [OUT_DIR]   (default: data/mnist)

The subset holds 500 training-split images per digit, which covers a
300-image training draw plus a disjoint 500-image test draw.  Use the
official IDX files instead when they are available.
"""

import gzip
import sys
from pathlib import Path

import numpy as np

from nbmf.mnist import TRAIN_IMAGES, TRAIN_LABELS, write_idx_images, write_idx_labels


def main(out_dir="data/mnist"):
    import mlxtend.data

    csv_path = Path(mlxtend.data.__file__).parent / "data" / "mnist_5k.csv.gz"
    table = np.loadtxt(gzip.open(csv_path, "rt"), delimiter=",", dtype=np.int64)
    pixels = table[:, :-1].reshape(-1, 28, 28).astype(np.uint8)
    labels = table[:, -1]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / TRAIN_IMAGES).write_bytes(write_idx_images(pixels))
    (out / TRAIN_LABELS).write_bytes(write_idx_labels(labels))
    print(f"wrote {len(labels)} images to {out}")


if __name__ == "__main__":
    main(*sys.argv[1:])
