"""Per-column QUBO for the binary coefficient update.

For a fixed basis ``W`` (n x k) and a data column ``v`` the squared residual
``||v - W q||^2`` over binary ``q`` expands, after dropping the constant
``||v||^2`` and using ``q_i^2 = q_i``, into::

    f(q) = sum_i  sum_r W_ri (W_ri - 2 v_r) q_i
         + sum_{i<j} 2 sum_r W_ri W_rj q_i q_j

so ``energy(q) == ||v - W q||^2 - ||v||^2``.
"""

import json
from dataclasses import dataclass

import numpy as np

from .exceptions import CapacityError, ShapeError, ValidationError
from .matrix import as_binary, as_dense

__all__ = [
    "QuboProblem",
    "QuboSolution",
    "build_column_qubo",
    "build_column_qubos",
    "energy",
    "brute_force_solve",
    "BRUTE_FORCE_MAX_DIM",
]

BRUTE_FORCE_MAX_DIM = 24
_CHUNK_BITS = 15


@dataclass(frozen=True, eq=False)
class QuboProblem:
    """Linear and pairwise coefficients of a QUBO in ``dim`` variables.

    ``quadratic`` is a dense ``dim x dim`` array whose strict upper triangle
    holds the coefficient of ``q_i q_j`` (i < j); everything else is zero.
    """

    linear: np.ndarray
    quadratic: np.ndarray

    def __post_init__(self):
        linear = as_dense(self.linear, "linear", ndim=1).copy()
        quad = as_dense(self.quadratic, "quadratic").copy()
        k = linear.shape[0]
        if quad.shape != (k, k):
            raise ShapeError(f"quadratic must be {(k, k)}, got {quad.shape}")
        if np.any(np.tril(quad) != 0):
            raise ValidationError("quadratic must be strictly upper triangular")
        linear.setflags(write=False)
        quad.setflags(write=False)
        object.__setattr__(self, "linear", linear)
        object.__setattr__(self, "quadratic", quad)

    @property
    def dim(self):
        return self.linear.shape[0]

    @classmethod
    def from_terms(cls, linear, pairs=()):
        """Build from a linear vector and ``(i, j, value)`` pair terms."""
        linear = np.asarray(linear, dtype=np.float64)
        quad = np.zeros((linear.shape[0], linear.shape[0]))
        for i, j, value in pairs:
            i, j = (i, j) if i < j else (j, i)
            if i == j:
                raise ValidationError("pair terms need distinct indices")
            quad[i, j] += value
        return cls(linear, quad)

    def symmetric(self):
        """Full symmetric matrix with zero diagonal (local-field form)."""
        return self.quadratic + self.quadratic.T

    def is_zero(self):
        return not (np.any(self.linear) or np.any(self.quadratic))

    def scaled(self, factor):
        return QuboProblem(self.linear * factor, self.quadratic * factor)

    def to_dict(self):
        iu, ju = np.nonzero(self.quadratic)
        return {
            "dim": int(self.dim),
            "linear": [float(x) for x in self.linear],
            "quadratic": [
                [int(i), int(j), float(self.quadratic[i, j])] for i, j in zip(iu, ju)
            ],
        }

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data):
        linear = data["linear"]
        if len(linear) != data["dim"]:
            raise ShapeError("'dim' disagrees with the length of 'linear'")
        return cls.from_terms(linear, [tuple(t) for t in data.get("quadratic", [])])

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class QuboSolution:
    assignment: np.ndarray
    energy: float


def build_column_qubo(w, v):
    """QUBO whose energy is ``||v - w q||^2 - ||v||^2`` for binary ``q``."""
    w = as_dense(w, "w")
    v = as_dense(v, "v", ndim=1)
    if w.shape[0] != v.shape[0]:
        raise ShapeError(f"w has {w.shape[0]} rows but v has length {v.shape[0]}")
    return build_column_qubos(w, v[:, None])[0]


def build_column_qubos(w, v):
    """One QUBO per column of ``v``, sharing the Gram matrix of ``w``."""
    w = as_dense(w, "w")
    v = as_dense(v, "v")
    if w.shape[0] != v.shape[0]:
        raise ShapeError(f"w has shape {w.shape} but v has shape {v.shape}")
    gram = w.T @ w
    quad = 2.0 * np.triu(gram, k=1)
    linear = np.diag(gram)[:, None] - 2.0 * (w.T @ v)
    return [QuboProblem(linear[:, j], quad) for j in range(v.shape[1])]


def energy(p, q):
    q = as_binary(q, "q", ndim=1).astype(np.float64)
    if q.shape[0] != p.dim:
        raise ShapeError(f"assignment has length {q.shape[0]}, problem has dim {p.dim}")
    return float(p.linear @ q + q @ p.quadratic @ q)


def _bits(start, stop, dim):
    codes = np.arange(start, stop, dtype=np.int64)
    return ((codes[:, None] >> np.arange(dim, dtype=np.int64)) & 1).astype(np.float64)


def brute_force_solve(p):
    """Exact minimizer by enumerating all ``2**dim`` assignments.

    Ties go to the assignment with the smallest integer code, bit 0 being
    ``q[0]``.
    """
    if p.dim > BRUTE_FORCE_MAX_DIM:
        raise CapacityError(
            f"brute force supports dim <= {BRUTE_FORCE_MAX_DIM}, got {p.dim}"
        )
    total = 1 << p.dim
    chunk = 1 << _CHUNK_BITS
    best_code, best_energy = 0, np.inf
    for start in range(0, total, chunk):
        bits = _bits(start, min(start + chunk, total), p.dim)
        energies = bits @ p.linear + np.einsum("ni,ij,nj->n", bits, p.quadratic, bits)
        idx = int(np.argmin(energies))
        if energies[idx] < best_energy:
            best_code, best_energy = start + idx, float(energies[idx])
    assignment = ((best_code >> np.arange(p.dim)) & 1).astype(np.uint8)
    return QuboSolution(assignment, energy(p, assignment))
