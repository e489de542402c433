import numpy as np
import pytest

from nbmf.mnist import (
    TEST_IMAGES,
    TEST_LABELS,
    TRAIN_IMAGES,
    TRAIN_LABELS,
    LabeledImageSet,
    write_idx_images,
    write_idx_labels,
)


def synthetic_digits(count, seed, side=28):
    """Ten bar patterns with pixel noise, as uint8 images plus labels."""
    rng = np.random.default_rng(seed)
    labels = np.arange(count) % 10
    rng.shuffle(labels)
    images = rng.integers(0, 40, (count, side, side)).astype(np.int64)
    band = side // 10
    for i, lab in enumerate(labels):
        images[i, :, lab * band:(lab + 1) * band] += 200
        images[i, lab * band:(lab + 1) * band, :] += 10
    return np.clip(images, 0, 255).astype(np.uint8), labels


@pytest.fixture(scope="session")
def digit_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("digits")
    for (img_name, lab_name), (count, seed) in {
        (TRAIN_IMAGES, TRAIN_LABELS): (120, 0),
        (TEST_IMAGES, TEST_LABELS): (40, 1),
    }.items():
        images, labels = synthetic_digits(count, seed)
        (root / img_name).write_bytes(write_idx_images(images))
        (root / lab_name).write_bytes(write_idx_labels(labels))
    return root


def small_set(count, seed, side=10):
    images, labels = synthetic_digits(count, seed, side=side)
    return LabeledImageSet(images.reshape(count, -1).T / 255.0, labels.astype(np.int64))


# (criterion, passed, detail) tuples filled in by test_acceptance.py; passed None means skipped.
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(ACCEPTANCE_RESULTS):
        status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        terminalreporter.write_line(f"criterion {criterion:2d}: {status}  {detail}")
