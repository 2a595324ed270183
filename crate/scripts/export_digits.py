"""Export the 8x8 handwritten digits bundled with scikit-learn as IDX files.

The first 1000 records form the training split, the remaining 797 the test
split. Pixel intensities 0..16 are rescaled to bytes 0..255.
"""
import struct
import sys
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits

TRAIN = 1000


def write_images(path, images):
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        f.write(images.astype(np.uint8).tobytes())


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main(out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    digits = load_digits()
    images = np.rint(digits.images * 255.0 / 16.0).clip(0, 255)
    labels = digits.target
    write_images(out / "digits-train-images.idx", images[:TRAIN])
    write_labels(out / "digits-train-labels.idx", labels[:TRAIN])
    write_images(out / "digits-test-images.idx", images[TRAIN:])
    write_labels(out / "digits-test-labels.idx", labels[TRAIN:])


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "crates/core/data")
