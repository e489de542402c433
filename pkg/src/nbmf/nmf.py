"""Multiplicative-update NMF baseline sharing the classification pipeline."""

from dataclasses import dataclass, field

import numpy as np

from .classify import ClassifierModel, DEFAULT_G, assemble_training_matrix, predict_from_scores, split_basis
from .exceptions import ShapeError
from .matrix import as_dense, frobenius_norm, rmse
from .seeding import numpy_rng

__all__ = [
    "NmfModel",
    "nmf_train",
    "nmf_encode",
    "nmf_infer",
    "train_nmf_classifier",
]

DELTA = 1e-12
NMF_STREAM = 0x4E4D
INFER_ITERS = 200


@dataclass
class NmfModel:
    w: np.ndarray
    h: np.ndarray
    history: list = field(default_factory=list)
    residuals: list = field(default_factory=list)


def _mu_w(v, w, h):
    return w * (v @ h.T) / (w @ (h @ h.T) + DELTA)


def _mu_h(v, w, h):
    return h * (w.T @ v) / ((w.T @ w) @ h + DELTA)


def nmf_train(v, k, epochs, seed, callback=None, track_updates=False):
    """Lee-Seung updates for ``min ||V - W H||_F`` with ``W, H >= 0``.

    One epoch is a W update followed by an H update.  With
    ``track_updates`` the residual after every single update is kept in
    ``model.residuals`` (starting with the initial residual).
    """
    v = as_dense(v, "v", nonnegative=True)
    n, m = v.shape
    rng = numpy_rng(seed, NMF_STREAM)
    scale = np.sqrt(max(v.mean(), DELTA) / k)
    w = scale * rng.random((n, k))
    h = scale * rng.random((k, m))
    residuals = [frobenius_norm(v - w @ h)] if track_updates else []
    history = []
    for epoch in range(epochs):
        w = _mu_w(v, w, h)
        if track_updates:
            residuals.append(frobenius_norm(v - w @ h))
        h = _mu_h(v, w, h)
        wh = w @ h
        res = frobenius_norm(v - wh)
        if track_updates:
            residuals.append(res)
        history.append({"epoch": epoch + 1, "residual": res, "objective": res * res, "rmse": rmse(v, wh)})
        if callback is not None:
            callback(epoch, w, h)
    return NmfModel(w, h, history, residuals)


def nmf_encode(w1, v, iters=INFER_ITERS):
    """Nonnegative codes for the columns of ``v`` with ``w1`` held fixed.

    Each column starts from the constant ``sqrt(mean(v_j) / k)``, so a
    column's code does not depend on the rest of the batch.
    """
    k = w1.shape[1]
    h = np.tile(np.sqrt(np.maximum(v.mean(axis=0), DELTA) / k), (k, 1))
    for _ in range(iters):
        h = _mu_h(v, w1, h)
    return h


def nmf_infer(model, test_pixels, iters=INFER_ITERS):
    """Returns ``(labels, u_test, h_test)`` for a classifier trained with NMF."""
    v = as_dense(test_pixels, "test_pixels")
    if v.shape[0] != model.w1.shape[0]:
        raise ShapeError(f"test pixels have {v.shape[0]} rows, W1 has {model.w1.shape[0]}")
    h_test = nmf_encode(model.w1, v, iters)
    u_test = model.w2 @ h_test
    return predict_from_scores(u_test), u_test, h_test


def train_nmf_classifier(data, cfg, g=DEFAULT_G, callback=None):
    """NMF counterpart of :func:`nbmf.classify.train_classifier`.

    Only ``cfg.k``, ``cfg.epochs`` and ``cfg.master_seed`` are used.
    """
    v = assemble_training_matrix(data, g)
    n_pix = data.pixels.shape[0]

    def on_epoch(epoch, w, h):
        if callback is not None:
            w1, w2 = split_basis(w, n_pix)
            callback(epoch, ClassifierModel(w1, w2, g, cfg, None, data.labels, kind="nmf"))

    fit = nmf_train(v, cfg.k, cfg.epochs, cfg.master_seed, callback=on_epoch)
    w1, w2 = split_basis(fit.w, n_pix)
    return ClassifierModel(
        w1=w1, w2=w2, g=g, cfg=cfg, h=None,
        labels=np.asarray(data.labels, dtype=np.int64), history=fit.history, kind="nmf",
    )
