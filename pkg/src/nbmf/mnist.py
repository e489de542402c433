"""MNIST IDX reading/writing and seeded train/test subsets.

IDX layout (big endian)::

    images: u32 magic 0x00000803 | u32 count | u32 rows | u32 cols | u8 pixels
    labels: u32 magic 0x00000801 | u32 count | u8 labels
"""

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import IdxParseError, ValidationError

__all__ = [
    "IMAGE_MAGIC",
    "LABEL_MAGIC",
    "DATA_DIR_ENV",
    "RawIdxImages",
    "LabeledImageSet",
    "read_idx_images",
    "read_idx_labels",
    "write_idx_images",
    "write_idx_labels",
    "load_idx_file",
    "load_mnist",
    "resolve_data_dir",
    "normalize_pixels",
    "sample_subset",
    "train_test_subsets",
]

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
N_CLASSES = 10
DATA_DIR_ENV = "NBMF_DATA_DIR"

TRAIN_IMAGES = "train-images-idx3-ubyte"
TRAIN_LABELS = "train-labels-idx1-ubyte"
TEST_IMAGES = "t10k-images-idx3-ubyte"
TEST_LABELS = "t10k-labels-idx1-ubyte"


@dataclass(frozen=True)
class RawIdxImages:
    pixels: np.ndarray  # (count, rows, cols) uint8

    @property
    def count(self):
        return self.pixels.shape[0]

    @property
    def rows(self):
        return self.pixels.shape[1]

    @property
    def cols(self):
        return self.pixels.shape[2]


@dataclass(frozen=True)
class LabeledImageSet:
    """Images as columns scaled to ``[0, 1]`` plus their labels."""

    pixels: np.ndarray  # (n_pix, m) float64
    labels: np.ndarray  # (m,) int64
    classes: int = N_CLASSES
    indices: np.ndarray = None

    def __post_init__(self):
        if self.pixels.ndim != 2 or self.pixels.shape[1] != self.labels.shape[0]:
            raise ValidationError(
                f"pixels {self.pixels.shape} and labels {self.labels.shape} disagree"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.classes):
            raise ValidationError(f"labels must lie in [0, {self.classes})")
        if self.pixels.size and (self.pixels.min() < 0 or self.pixels.max() > 1):
            raise ValidationError("pixels must lie in [0, 1]")

    @property
    def m(self):
        return self.labels.shape[0]


def _header(data, magic, n_dims):
    size = 4 * (1 + n_dims)
    if len(data) < size:
        raise IdxParseError(f"header needs {size} bytes, got {len(data)}", len(data))
    found = struct.unpack_from(">I", data, 0)[0]
    if found != magic:
        raise IdxParseError(f"bad magic 0x{found:08x}, expected 0x{magic:08x}", 0)
    return struct.unpack_from(f">{n_dims}I", data, 4), size


def read_idx_images(data):
    (count, rows, cols), start = _header(bytes(data), IMAGE_MAGIC, 3)
    need = count * rows * cols
    have = len(data) - start
    if have != need:
        raise IdxParseError(
            f"image payload has {have} bytes, header implies {need}",
            start + min(have, need),
        )
    pixels = np.frombuffer(bytes(data), dtype=np.uint8, offset=start).reshape(count, rows, cols)
    return RawIdxImages(pixels.copy())


def read_idx_labels(data):
    (count,), start = _header(bytes(data), LABEL_MAGIC, 1)
    have = len(data) - start
    if have != count:
        raise IdxParseError(
            f"label payload has {have} bytes, header implies {count}",
            start + min(have, count),
        )
    labels = np.frombuffer(bytes(data), dtype=np.uint8, offset=start).astype(np.int64)
    bad = np.flatnonzero(labels >= N_CLASSES)
    if bad.size:
        raise IdxParseError(f"label {labels[bad[0]]} out of range", start + int(bad[0]))
    return labels


def write_idx_images(images):
    pixels = images.pixels if isinstance(images, RawIdxImages) else np.asarray(images)
    pixels = np.asarray(pixels, dtype=np.uint8)
    count, rows, cols = pixels.shape
    return struct.pack(">4I", IMAGE_MAGIC, count, rows, cols) + pixels.tobytes()


def write_idx_labels(labels):
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= N_CLASSES):
        raise ValidationError("labels must lie in [0, 10)")
    return struct.pack(">2I", LABEL_MAGIC, labels.size) + labels.astype(np.uint8).tobytes()


def load_idx_file(path):
    """Raw bytes of ``path``, transparently decompressing ``.gz``."""
    path = Path(path)
    if not path.exists() and path.with_name(path.name + ".gz").exists():
        path = path.with_name(path.name + ".gz")
    raw = path.read_bytes()
    return gzip.decompress(raw) if path.suffix == ".gz" else raw


def resolve_data_dir(data_dir=None):
    if data_dir is None:
        data_dir = os.environ.get(DATA_DIR_ENV)
    if data_dir is None:
        raise ValidationError(f"no data directory given and ${DATA_DIR_ENV} is unset")
    return Path(data_dir)


def load_mnist(data_dir=None, split="train"):
    """``(RawIdxImages, labels)`` for the ``train`` or ``test`` split."""
    root = resolve_data_dir(data_dir)
    names = (TRAIN_IMAGES, TRAIN_LABELS) if split == "train" else (TEST_IMAGES, TEST_LABELS)
    images = read_idx_images(load_idx_file(root / names[0]))
    labels = read_idx_labels(load_idx_file(root / names[1]))
    if images.count != labels.shape[0]:
        raise ValidationError(f"{images.count} images but {labels.shape[0]} labels")
    return images, labels


def normalize_pixels(pixels):
    """Bytes to ``[0, 1]``: 0 maps to 0.0 and 255 to 1.0 exactly."""
    return np.asarray(pixels, dtype=np.float64) / 255.0


def _columns(images):
    pixels = images.pixels if isinstance(images, RawIdxImages) else np.asarray(images)
    return pixels.reshape(pixels.shape[0], -1)


def _subset(images, labels, idx):
    flat = _columns(images)
    return LabeledImageSet(
        pixels=normalize_pixels(flat[idx].T),
        labels=np.asarray(labels, dtype=np.int64)[idx],
        indices=idx,
    )


def sample_subset(images, labels, m, seed, offset=0):
    """Seeded uniform draw of ``m`` images without replacement.

    The draw is positions ``offset:offset + m`` of one seeded permutation, so
    calls with the same seed and non-overlapping windows are disjoint.
    """
    total = _columns(images).shape[0]
    if m < 0 or offset < 0 or offset + m > total:
        raise ValidationError(f"cannot draw {m} images at offset {offset} from {total}")
    perm = np.random.default_rng(seed).permutation(total)
    return _subset(images, labels, perm[offset:offset + m])


def train_test_subsets(images, labels, m, m_test, seed):
    """Disjoint train/test draws from one pool.

    The test set takes the first ``m_test`` positions of the permutation so it
    stays fixed while ``m`` varies.
    """
    test = sample_subset(images, labels, m_test, seed, offset=0)
    train = sample_subset(images, labels, m, seed, offset=m_test)
    return train, test
