"""Alternating nonnegative/binary factorization ``V ~= W H``.

``W`` (n x k) is real with entries in ``[0, x_max]``; ``H`` (k x m) is
binary.  Each epoch first refines every row of ``W`` by projected RMSProp
(or plain projected gradient steps) on

    f(x) = ||v - H^T x||^2 + alpha ||x||^2,

then re-solves every column of ``H`` as a QUBO with the supplied solver.
"""

import csv
import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .exceptions import CapacityError, ModelFormatError, ShapeError, ValidationError
from .matrix import as_binary, as_dense, frobenius_norm, rmse
from .qubo import build_column_qubos
from .seeding import numpy_rng, derive_seed

__all__ = [
    "TrainConfig",
    "RmsPropState",
    "NbmfModel",
    "loss_fw",
    "grad_fw",
    "project",
    "pgm_step",
    "rmsprop_step",
    "update_w",
    "update_h",
    "solve_columns",
    "train",
    "save_model",
    "load_model",
    "write_history_csv",
]

INIT_STREAM = 0x1A17
MAGIC = b"NBMF"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIIId")


@dataclass
class TrainConfig:
    """Hyperparameters of one training run."""

    k: int = 40
    epochs: int = 10
    alpha: float = 1e-4
    beta: float = 0.99
    eta: float = 0.01
    epsilon: float = 1e-7
    x_max: float = 1.0
    reads: int = 50
    inner_iters: int = 100
    gamma: float = 0.01
    w_update_mode: str = "rmsprop"
    # "updated" divides by the freshly updated accumulator; "previous" uses
    # the accumulator from before this step.
    rmsprop_accumulator: str = "updated"
    carry_rmsprop_state: bool = False
    sweeps_multiplier: int = 100
    t_final_ratio: float = 1e-3
    master_seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.k < 1 or self.epochs < 1 or self.reads < 1 or self.inner_iters < 0:
            raise ValidationError("k, epochs and reads must be >= 1, inner_iters >= 0")
        for name in ("eta", "epsilon", "x_max", "gamma", "sweeps_multiplier", "t_final_ratio"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        if self.alpha < 0:
            raise ValidationError("alpha must be nonnegative")
        if not 0 <= self.beta < 1:
            raise ValidationError("beta must lie in [0, 1)")
        if self.w_update_mode not in ("rmsprop", "pgm"):
            raise ValidationError(f"unknown w_update_mode {self.w_update_mode!r}")
        if self.rmsprop_accumulator not in ("updated", "previous"):
            raise ValidationError(f"unknown rmsprop_accumulator {self.rmsprop_accumulator!r}")
        if self.n_jobs < 1:
            raise ValidationError("n_jobs must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ValidationError("master_seed must fit in 64 bits")

    def to_dict(self):
        return asdict(self)

    def persisted_dict(self):
        """Config as written to model and metrics files.

        ``n_jobs`` is left out: results do not depend on it, and files must
        be byte-identical whatever the pool size.
        """
        d = asdict(self)
        del d["n_jobs"]
        return d

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class RmsPropState:
    """Second-moment accumulator, one entry per coordinate being updated."""

    h_accum: np.ndarray

    @classmethod
    def zeros(cls, shape):
        return cls(np.zeros(shape, dtype=np.float64))


@dataclass
class NbmfModel:
    w: np.ndarray
    h: np.ndarray
    history: list = field(default_factory=list)
    config: TrainConfig = field(default_factory=TrainConfig)
    initial: dict = field(default_factory=dict)
    split: int = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.split is None:
            self.split = self.w.shape[0]

    @property
    def shape(self):
        return self.w.shape[0], self.w.shape[1], self.h.shape[1]


def _row_problem(h, v, x):
    h = as_binary(h, "h").astype(np.float64)
    v = as_dense(v, "v", ndim=1)
    x = as_dense(x, "x", ndim=1)
    if h.shape != (x.shape[0], v.shape[0]):
        raise ShapeError(
            f"h must be {(x.shape[0], v.shape[0])} for x of length {x.shape[0]} "
            f"and v of length {v.shape[0]}, got {h.shape}"
        )
    return h, v, x


def loss_fw(h, v, x, alpha):
    """Row objective ``||v - H^T x||^2 + alpha ||x||^2``."""
    h, v, x = _row_problem(h, v, x)
    r = v - h.T @ x
    return float(r @ r + alpha * (x @ x))


def grad_fw(h, v, x, alpha):
    """``-H (v - H^T x) + alpha x``.

    This is exactly half the gradient of :func:`loss_fw`; the missing factor
    of two only rescales the step size.
    """
    h, v, x = _row_problem(h, v, x)
    return -h @ (v - h.T @ x) + alpha * x


def project(x, x_max):
    """Clamp every entry to ``[0, x_max]``."""
    if not x_max > 0:
        raise ValidationError("x_max must be positive")
    return np.clip(np.asarray(x, dtype=np.float64), 0.0, x_max)


def pgm_step(x, grad, gamma, x_max):
    if not gamma > 0:
        raise ValidationError("gamma must be positive")
    return project(np.asarray(x) - gamma * np.asarray(grad), x_max)


def rmsprop_step(x, state, grad, cfg):
    """One projected RMSProp step; returns ``(x_new, state_new)``."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if x.shape != grad.shape or x.shape != state.h_accum.shape:
        raise ShapeError(
            f"x {x.shape}, grad {grad.shape} and state {state.h_accum.shape} must match"
        )
    new_accum = cfg.beta * state.h_accum + (1.0 - cfg.beta) * grad * grad
    denom_accum = new_accum if cfg.rmsprop_accumulator == "updated" else state.h_accum
    x_new = project(x - cfg.eta * grad / np.sqrt(denom_accum + cfg.epsilon), cfg.x_max)
    return x_new, RmsPropState(new_accum)


def _check_vwh(v, w, h):
    if w.shape[0] != v.shape[0] or h.shape != (w.shape[1], v.shape[1]):
        raise ShapeError(
            f"inconsistent shapes: V {v.shape}, W {w.shape}, H {h.shape}"
        )


def _update_w(v, w, h, cfg, state=None):
    # All rows at once: the row gradient -H(v - H^T x) + alpha x stacks into
    # W (H H^T) - V H^T + alpha W, and every step is entrywise.
    hf = h.astype(np.float64)
    hht = hf @ hf.T
    vht = v @ hf.T
    if state is None:
        state = RmsPropState.zeros(w.shape)
    x = w
    for _ in range(cfg.inner_iters):
        grad = x @ hht - vht + cfg.alpha * x
        if cfg.w_update_mode == "pgm":
            x = pgm_step(x, grad, cfg.gamma, cfg.x_max)
        else:
            x, state = rmsprop_step(x, state, grad, cfg)
    return project(x, cfg.x_max), state


def update_w(v, w, h, cfg):
    """Refine every row of ``W`` with ``H`` held fixed."""
    v = as_dense(v, "v")
    w = as_dense(w, "w")
    h = as_binary(h, "h")
    _check_vwh(v, w, h)
    return _update_w(v, w, h, cfg)[0]


def solve_columns(w, v, solver, reads, seed_of, n_jobs=1):
    """Solve the column QUBOs of ``v`` against ``w``; returns a k x m bit matrix.

    ``seed_of(j)`` gives the solver seed for column ``j``.  Results are placed
    by column index, so ``n_jobs`` never changes the output.
    """
    problems = build_column_qubos(w, v)
    out = np.zeros((w.shape[1], v.shape[1]), dtype=np.uint8)

    def work(j):
        try:
            return solver.solve(problems[j], reads, seed_of(j)).assignment
        except CapacityError as exc:
            raise CapacityError(f"column {j}: {exc}") from exc

    if n_jobs > 1 and len(problems) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            cols = list(pool.map(work, range(len(problems))))
    else:
        cols = [work(j) for j in range(len(problems))]
    for j, col in enumerate(cols):
        out[:, j] = col
    return out


def update_h(v, w, solver, cfg, epoch=0):
    """Re-solve every column of ``H`` for fixed ``W``."""
    v = as_dense(v, "v")
    w = as_dense(w, "w")
    if w.shape[0] != v.shape[0]:
        raise ShapeError(f"W has shape {w.shape} but V has shape {v.shape}")
    return solve_columns(
        w, v, solver, cfg.reads,
        lambda j: derive_seed(cfg.master_seed, epoch, j),
        cfg.n_jobs,
    )


def _record(v, w, h, alpha):
    wh = w @ h
    res = frobenius_norm(v - wh)
    return {
        "residual": res,
        "objective": res * res + alpha * float(np.sum(w * w)),
        "rmse": rmse(v, wh),
    }


def train(v, cfg, solver, callback=None):
    """Fit ``V ~= W H`` for exactly ``cfg.epochs`` alternating epochs.

    ``callback(epoch, phase, w, h)`` is invoked after each half step with
    ``phase`` equal to ``"w"`` or ``"h"``.
    """
    v = as_dense(v, "v", nonnegative=True)
    n, m = v.shape
    rng = numpy_rng(cfg.master_seed, INIT_STREAM)
    w = rng.uniform(0.0, cfg.x_max, size=(n, cfg.k))
    h = (rng.random((cfg.k, m)) < 0.5).astype(np.uint8)
    initial = _record(v, w, h, cfg.alpha)
    history = []
    state = None
    for epoch in range(cfg.epochs):
        w, state = _update_w(v, w, h, cfg, state if cfg.carry_rmsprop_state else None)
        if callback is not None:
            callback(epoch, "w", w, h)
        residual_before_h = frobenius_norm(v - w @ h)
        h = update_h(v, w, solver, cfg, epoch)
        if callback is not None:
            callback(epoch, "h", w, h)
        rec = {"epoch": epoch + 1, **_record(v, w, h, cfg.alpha)}
        rec["residual_before_h"] = residual_before_h
        history.append(rec)
    return NbmfModel(w=w, h=h, history=history, config=cfg, initial=initial)


def save_model(model, path):
    """Write the binary model file.

    Layout: little-endian header ``NBMF | version | n | k | m | reserved |
    x_max`` (uint32 fields, float64 bound), W as
    float64 row-major, H packed one bit per entry in column-major order, then
    a UTF-8 JSON trailer with history, config and metadata.
    """
    n, k, m = model.shape
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, n, k, m, 0, float(model.config.x_max))
    w = np.ascontiguousarray(model.w, dtype="<f8").tobytes()
    bits = np.packbits(np.asarray(model.h, dtype=np.uint8).T.ravel(), bitorder="little")
    trailer = json.dumps(
        {
            "config": model.config.persisted_dict(),
            "history": model.history,
            "initial": model.initial,
            "meta": model.meta,
            "split": int(model.split),
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(header + w + bits.tobytes() + trailer)


def load_model(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise ModelFormatError(f"{path}: truncated header")
    magic, version, n, k, m, _, x_max = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ModelFormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported format version {version}")
    pos = _HEADER.size
    w_bytes = 8 * n * k
    h_bytes = (k * m + 7) // 8
    if len(data) < pos + w_bytes + h_bytes:
        raise ModelFormatError(f"{path}: truncated payload")
    w = np.frombuffer(data, dtype="<f8", count=n * k, offset=pos).reshape(n, k).astype(np.float64)
    pos += w_bytes
    bits = np.unpackbits(
        np.frombuffer(data, dtype=np.uint8, count=h_bytes, offset=pos),
        count=k * m, bitorder="little",
    )
    h = bits.reshape(m, k).T.copy()
    pos += h_bytes
    try:
        trailer = json.loads(data[pos:].decode("utf-8"))
        cfg = TrainConfig.from_dict(trailer["config"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ModelFormatError(f"{path}: corrupt JSON trailer ({exc})") from exc
    if cfg.x_max != x_max:
        raise ModelFormatError(f"{path}: header x_max disagrees with trailer config")
    return NbmfModel(
        w=w, h=h, history=trailer.get("history", []), config=cfg,
        initial=trailer.get("initial", {}), split=trailer.get("split", n),
        meta=trailer.get("meta", {}),
    )


def write_history_csv(model, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "residual", "objective", "rmse"])
        for rec in model.history:
            writer.writerow([rec["epoch"], repr(rec["residual"]), repr(rec["objective"]), repr(rec["rmse"])])
