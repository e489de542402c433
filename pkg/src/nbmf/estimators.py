"""scikit-learn wrappers over the functional core.

Inputs follow the sklearn layout: ``X`` has one sample per row.  The
factorization itself is column-oriented, so ``V = X.T`` internally.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.preprocessing import LabelEncoder
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .annealer import make_solver
from .classify import DEFAULT_G, evaluate_scores, infer, train_classifier
from .factorize import TrainConfig, solve_columns, train
from .matrix import softmax_columns
from .mnist import LabeledImageSet
from .nmf import nmf_infer, train_nmf_classifier
from .seeding import derive_seed

__all__ = ["BinaryMatrixFactorization", "NBMFClassifier", "NMFClassifier"]

TRANSFORM_STREAM = 0x7F0


def _config(est, k, epochs):
    return TrainConfig(
        k=k,
        epochs=epochs,
        alpha=est.alpha,
        beta=est.beta,
        eta=est.eta,
        epsilon=est.epsilon,
        x_max=est.x_max,
        reads=est.reads,
        inner_iters=est.inner_iters,
        w_update_mode=est.w_update,
        master_seed=int(est.random_state),
        n_jobs=est.n_jobs,
    )


class BinaryMatrixFactorization(BaseEstimator, TransformerMixin):
    """Approximates ``X.T`` by ``W H`` with bounded ``W`` and binary ``H``.

    Attributes
    ----------
    components_ : ndarray of shape (n_components, n_features)
        ``W.T``; entries lie in ``[0, x_max]``.
    codes_ : ndarray of shape (n_samples, n_components)
        Binary codes of the training samples (``H.T``).
    history_ : list of dict
        Per-epoch residual, objective and RMSE.
    """

    def __init__(self, n_components=40, epochs=10, alpha=1e-4, beta=0.99, eta=0.01,
                 epsilon=1e-7, x_max=1.0, reads=50, inner_iters=100, w_update="rmsprop",
                 solver="sa", random_state=0, n_jobs=1):
        self.n_components = n_components
        self.epochs = epochs
        self.alpha = alpha
        self.beta = beta
        self.eta = eta
        self.epsilon = epsilon
        self.x_max = x_max
        self.reads = reads
        self.inner_iters = inner_iters
        self.w_update = w_update
        self.solver = solver
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        cfg = _config(self, self.n_components, self.epochs)
        model = train(X.T, cfg, make_solver(self.solver))
        self.config_ = cfg
        self.components_ = model.w.T.copy()
        self.codes_ = model.h.T.copy()
        self.history_ = model.history
        self.n_features_in_ = X.shape[1]
        return self

    def fit_transform(self, X, y=None):
        return self.fit(X, y).codes_

    def transform(self, X):
        """Binary codes ``(n_samples, n_components)`` for new samples."""
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        seed = self.config_.master_seed
        h = solve_columns(
            self.components_.T, X.T, make_solver(self.solver), self.reads,
            lambda j: derive_seed(seed, TRANSFORM_STREAM, j), self.n_jobs,
        )
        return h.T

    def inverse_transform(self, codes):
        check_is_fitted(self, "components_")
        return np.asarray(codes, dtype=np.float64) @ self.components_


class _FactorizationClassifier(ClassifierMixin, BaseEstimator):
    def _labeled(self, X, y):
        return LabeledImageSet(X.T.copy(), self._encoder.transform(y).astype(np.int64), len(self.classes_))

    def fit(self, X, y, eval_set=None):
        """Fit on rows of ``X`` with pixel values in ``[0, 1]``.

        ``eval_set=(X_test, y_test)`` records test accuracy and
        cross-entropy after every epoch in ``eval_history_``.
        """
        X, y = check_X_y(X, y, dtype=np.float64)
        self._encoder = LabelEncoder().fit(y)
        self.classes_ = self._encoder.classes_
        self.n_features_in_ = X.shape[1]
        data = self._labeled(X, y)
        evals = None
        if eval_set is not None:
            X_eval, y_eval = check_X_y(*eval_set, dtype=np.float64)
            evals = self._labeled(X_eval, y_eval)
        self.eval_history_ = []

        def on_epoch(epoch, model):
            if evals is not None:
                res = evaluate_scores(self._scores(model, evals.pixels), evals.labels, model.classes)
                self.eval_history_.append(
                    {"epoch": epoch + 1, "accuracy": res.accuracy, "cross_entropy": res.cross_entropy}
                )

        self.model_ = self._train(data, on_epoch)
        self.history_ = self.model_.history
        return self

    @property
    def best_accuracy_(self):
        check_is_fitted(self, "model_")
        if not self.eval_history_:
            raise AttributeError("best_accuracy_ needs fit(..., eval_set=...)")
        return max(e["accuracy"] for e in self.eval_history_)

    def decision_function(self, X):
        """Class scores ``U = W2 H`` as ``(n_samples, n_classes)``."""
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return self._scores(self.model_, X.T).T

    def predict_proba(self, X):
        return softmax_columns(self.decision_function(X).T).T

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]


class NBMFClassifier(_FactorizationClassifier):
    """Classifier from a binary factorization of pixels stacked over ``g * onehot``."""

    def __init__(self, n_components=40, epochs=10, g=DEFAULT_G, alpha=1e-4, beta=0.99,
                 eta=0.01, epsilon=1e-7, x_max=1.0, reads=50, inner_iters=100,
                 w_update="rmsprop", solver="sa", random_state=0, n_jobs=1):
        self.n_components = n_components
        self.epochs = epochs
        self.g = g
        self.alpha = alpha
        self.beta = beta
        self.eta = eta
        self.epsilon = epsilon
        self.x_max = x_max
        self.reads = reads
        self.inner_iters = inner_iters
        self.w_update = w_update
        self.solver = solver
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _train(self, data, callback):
        cfg = _config(self, self.n_components, self.epochs)
        return train_classifier(data, cfg, make_solver(self.solver), self.g, callback)

    def _scores(self, model, pixels):
        # Test codes always come from the annealer, whatever trained H.
        _, u, _ = infer(model, pixels, make_solver("sa"))
        return u


class NMFClassifier(_FactorizationClassifier):
    """Same pipeline with a nonnegative (multiplicative update) factorization."""

    def __init__(self, n_components=40, epochs=10, g=DEFAULT_G, random_state=0):
        self.n_components = n_components
        self.epochs = epochs
        self.g = g
        self.random_state = random_state

    def _train(self, data, callback):
        cfg = TrainConfig(k=self.n_components, epochs=self.epochs, master_seed=int(self.random_state))
        return train_nmf_classifier(data, cfg, self.g, callback)

    def _scores(self, model, pixels):
        _, u, _ = nmf_infer(model, pixels)
        return u
