"""Classification on top of the binary factorization.

Training stacks each image column on top of its scaled one-hot label,
factorizes the stack, and splits the basis rows into an image block ``W1``
and a label block ``W2``.  A test image is encoded by solving its column
QUBO against ``W1`` alone; ``W2`` then maps the binary code to class
scores.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ShapeError, ValidationError
from .factorize import NbmfModel, TrainConfig, solve_columns, train
from .matrix import (
    accuracy,
    argmax_columns,
    as_binary,
    as_dense,
    confusion_matrix,
    cross_entropy,
    softmax_columns,
)
from .seeding import derive_seed

__all__ = [
    "DEFAULT_G",
    "ClassifierModel",
    "EvalResult",
    "FeatureRecord",
    "assemble_training_matrix",
    "split_basis",
    "train_classifier",
    "infer",
    "predict_from_scores",
    "evaluate",
    "evaluate_scores",
    "feature_report",
    "export_feature_report",
    "write_pgm",
]

DEFAULT_G = 9.0
INFER_STREAM = 0x7E57


@dataclass
class ClassifierModel:
    w1: np.ndarray
    w2: np.ndarray
    g: float = DEFAULT_G
    cfg: TrainConfig = field(default_factory=TrainConfig)
    h: np.ndarray = None
    labels: np.ndarray = None
    history: list = field(default_factory=list)
    kind: str = "nbmf"

    def __post_init__(self):
        if self.w1.shape[1] != self.w2.shape[1]:
            raise ShapeError(f"W1 {self.w1.shape} and W2 {self.w2.shape} differ in k")

    @property
    def classes(self):
        return self.w2.shape[0]

    @property
    def k(self):
        return self.w1.shape[1]

    @property
    def w(self):
        return np.vstack([self.w1, self.w2])

    def to_nbmf_model(self):
        return NbmfModel(
            w=self.w, h=self.h, history=self.history, config=self.cfg,
            split=self.w1.shape[0],
            meta={
                "g": float(self.g),
                "classes": int(self.classes),
                "labels": [int(x) for x in self.labels],
            },
        )

    @classmethod
    def from_nbmf_model(cls, model):
        w1, w2 = split_basis(model.w, model.split)
        labels = model.meta.get("labels")
        return cls(
            w1=w1, w2=w2, g=model.meta.get("g", DEFAULT_G), cfg=model.config,
            h=model.h, labels=None if labels is None else np.asarray(labels, dtype=np.int64),
            history=model.history,
        )


def assemble_training_matrix(data, g=DEFAULT_G):
    """Stack pixels over ``g * onehot(label)``: shape ``(n_pix + classes, m)``."""
    if not g > 0:
        raise ValidationError("g must be positive")
    labels = np.asarray(data.labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= data.classes):
        raise ValidationError(f"labels must lie in [0, {data.classes})")
    onehot = np.zeros((data.classes, labels.size))
    onehot[labels, np.arange(labels.size)] = g
    return np.vstack([np.asarray(data.pixels, dtype=np.float64), onehot])


def split_basis(w, n_pix):
    return w[:n_pix].copy(), w[n_pix:].copy()


def train_classifier(data, cfg, solver, g=DEFAULT_G, callback=None):
    """Factorize the stacked matrix and split the basis at the pixel rows.

    ``callback(epoch, model)`` receives a :class:`ClassifierModel` snapshot
    after every epoch (used to track test accuracy during training).
    """
    v = assemble_training_matrix(data, g)
    n_pix = data.pixels.shape[0]

    def on_step(epoch, phase, w, h):
        if callback is not None and phase == "h":
            w1, w2 = split_basis(w, n_pix)
            callback(epoch, ClassifierModel(w1, w2, g, cfg, h, data.labels))

    fit = train(v, cfg, solver, callback=on_step)
    w1, w2 = split_basis(fit.w, n_pix)
    return ClassifierModel(
        w1=w1, w2=w2, g=g, cfg=cfg, h=fit.h,
        labels=np.asarray(data.labels, dtype=np.int64), history=fit.history,
    )


def predict_from_scores(u):
    """Argmax of the column softmax; ties resolve to the lowest class."""
    return argmax_columns(softmax_columns(u))


def infer(model, test_pixels, solver, reads=None, n_jobs=None):
    """Encode test columns against ``W1`` and score them with ``W2``.

    Returns ``(labels, u_test, h_test)``.
    """
    v = as_dense(test_pixels, "test_pixels")
    if v.shape[0] != model.w1.shape[0]:
        raise ShapeError(
            f"test pixels have {v.shape[0]} rows, W1 has {model.w1.shape[0]}"
        )
    cfg = model.cfg
    h_test = solve_columns(
        model.w1, v, solver,
        cfg.reads if reads is None else reads,
        lambda j: derive_seed(cfg.master_seed, INFER_STREAM, j),
        cfg.n_jobs if n_jobs is None else n_jobs,
    )
    u_test = model.w2 @ h_test
    return predict_from_scores(u_test), u_test, h_test


@dataclass
class EvalResult:
    accuracy: float
    cross_entropy: float
    confusion: np.ndarray
    predictions: np.ndarray

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "cross_entropy": self.cross_entropy,
            "confusion": self.confusion.tolist(),
        }


def evaluate_scores(u_test, labels, classes=None):
    u_test = as_dense(u_test, "u_test")
    classes = u_test.shape[0] if classes is None else classes
    pred = predict_from_scores(u_test)
    return EvalResult(
        accuracy=accuracy(pred, labels),
        cross_entropy=cross_entropy(softmax_columns(u_test), labels),
        confusion=confusion_matrix(labels, pred, classes),
        predictions=pred,
    )


def evaluate(model, test, solver, **kwargs):
    _, u_test, _ = infer(model, test.pixels, solver, **kwargs)
    return evaluate_scores(u_test, test.labels, model.classes)


@dataclass
class FeatureRecord:
    feature_id: int
    image: np.ndarray
    histogram: np.ndarray
    w2: np.ndarray


def _image_shape(n_pix):
    side = int(round(np.sqrt(n_pix)))
    return (side, side) if side * side == n_pix else (1, n_pix)


def feature_report(model, h, labels, image_shape=None):
    """Per-feature image, label-usage histogram and label-block weights."""
    h = as_binary(h, "h")
    labels = np.asarray(labels, dtype=np.int64)
    if h.shape != (model.k, labels.shape[0]):
        raise ShapeError(f"H must be {(model.k, labels.shape[0])}, got {h.shape}")
    shape = image_shape or _image_shape(model.w1.shape[0])
    onehot = np.zeros((labels.size, model.classes), dtype=np.int64)
    onehot[np.arange(labels.size), labels] = 1
    hist = h.astype(np.int64) @ onehot
    return [
        FeatureRecord(j, model.w1[:, j].reshape(shape), hist[j], model.w2[:, j].copy())
        for j in range(model.k)
    ]


def write_pgm(path, image, x_max=1.0):
    """Binary 8-bit PGM with intensities ``255 * value / x_max``."""
    img = np.clip(np.rint(np.asarray(image) * (255.0 / x_max)), 0, 255).astype(np.uint8)
    rows, cols = img.shape
    Path(path).write_bytes(f"P5\n{cols} {rows}\n255\n".encode("ascii") + img.tobytes())


def export_feature_report(records, out_dir, x_max=1.0, comment=None):
    """Write ``feature_XX.pgm`` files plus ``features.csv`` and ``w2.csv``.

    ``comment`` (a string) is written as a leading ``# ...`` line of each CSV.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    width = max(2, len(str(len(records) - 1)))
    for rec in records:
        write_pgm(out / f"feature_{rec.feature_id:0{width}d}.pgm", rec.image, x_max)
    with open(out / "features.csv", "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["feature_id", "label", "histogram_count"])
        for rec in records:
            for label, count in enumerate(rec.histogram):
                writer.writerow([rec.feature_id, label, int(count)])
    with open(out / "w2.csv", "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["feature_id", "class", "value"])
        for rec in records:
            for cls, value in enumerate(rec.w2):
                writer.writerow([rec.feature_id, cls, repr(float(value))])
