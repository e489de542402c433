"""Dense/binary matrix helpers and classification metrics.

Matrices are plain ``numpy.ndarray`` objects in float64 (dense) or uint8
(binary).  Columns are samples throughout the functional core, so
``V[:, j]`` is the j-th data vector.  The helpers here validate arrays at
public boundaries and implement the few reductions every other module
needs.
"""

import numpy as np

from .exceptions import ShapeError, ValidationError

__all__ = [
    "as_dense",
    "as_binary",
    "matmul",
    "frobenius_norm",
    "softmax_column",
    "softmax_columns",
    "cross_entropy",
    "rmse",
    "accuracy",
    "argmax_columns",
    "confusion_matrix",
]

PROB_CLAMP = 1e-12


def as_dense(a, name="array", nonnegative=False, upper=None, ndim=2):
    """Return ``a`` as a finite float64 array, raising on bad values."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != ndim:
        raise ShapeError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains NaN or Inf")
    if nonnegative and arr.size and arr.min() < 0:
        raise ValidationError(f"{name} must be nonnegative (min={arr.min()!r})")
    if upper is not None and arr.size and arr.max() > upper:
        raise ValidationError(f"{name} entries must be <= {upper} (max={arr.max()!r})")
    return arr


def as_binary(a, name="array", ndim=2):
    """Return ``a`` as a uint8 0/1 array, raising if any entry is not a bit."""
    arr = np.asarray(a)
    if arr.ndim != ndim:
        raise ShapeError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise ValidationError(f"{name} must contain only 0/1 entries")
    return arr.astype(np.uint8)


def matmul(a, b):
    """Matrix product ``a @ b``; a binary ``b`` is treated as reals 0/1."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    inner_a = a.shape[-1] if a.ndim else None
    inner_b = b.shape[0] if b.ndim else None
    if a.ndim == 0 or b.ndim == 0 or inner_a != inner_b:
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


def frobenius_norm(a):
    a = np.asarray(a, dtype=np.float64)
    return float(np.sqrt(np.sum(a * a)))


def softmax_column(u):
    """Max-shifted softmax of a single vector."""
    u = as_dense(u, "u", ndim=1)
    z = np.exp(u - u.max())
    return z / z.sum()


def softmax_columns(u):
    """Column-wise softmax of a matrix (each column sums to one)."""
    u = as_dense(u, "u")
    z = np.exp(u - u.max(axis=0, keepdims=True))
    return z / z.sum(axis=0, keepdims=True)


def _check_labels(labels, n_classes):
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ShapeError(f"labels must be 1-dimensional, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValidationError(f"labels must lie in [0, {n_classes})")
    return labels.astype(np.int64)


def cross_entropy(pred, labels):
    """Mean multiclass cross-entropy of column probabilities ``pred``.

    Probabilities are clamped below at 1e-12 before the log.
    """
    pred = as_dense(pred, "pred")
    labels = _check_labels(labels, pred.shape[0])
    if labels.shape[0] != pred.shape[1]:
        raise ShapeError(
            f"pred has {pred.shape[1]} columns but {labels.shape[0]} labels were given"
        )
    if labels.size == 0:
        raise ValidationError("cross_entropy needs at least one column")
    p = pred[labels, np.arange(labels.size)]
    return float(-np.mean(np.log(np.maximum(p, PROB_CLAMP))))


def rmse(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"rmse needs equal shapes, got {a.shape} and {b.shape}")
    if a.size == 0:
        raise ValidationError("rmse of empty arrays is undefined")
    d = a - b
    return float(np.sqrt(np.mean(d * d)))


def accuracy(pred_labels, true_labels):
    pred_labels = np.asarray(pred_labels)
    true_labels = np.asarray(true_labels)
    if pred_labels.shape != true_labels.shape:
        raise ShapeError(
            f"label vectors differ in shape: {pred_labels.shape} vs {true_labels.shape}"
        )
    if pred_labels.size == 0:
        raise ValidationError("accuracy of an empty label vector is undefined")
    return float(np.mean(pred_labels == true_labels))


def argmax_columns(u):
    """Per-column argmax; ``np.argmax`` already breaks ties toward index 0."""
    return np.argmax(np.asarray(u), axis=0)


def confusion_matrix(true_labels, pred_labels, n_classes):
    """Counts with rows indexed by true label and columns by prediction."""
    true_labels = _check_labels(true_labels, n_classes)
    pred_labels = _check_labels(pred_labels, n_classes)
    if true_labels.shape != pred_labels.shape:
        raise ShapeError("true and predicted label vectors differ in length")
    out = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(out, (true_labels, pred_labels), 1)
    return out
