"""Train/eval runs, parameter sweeps, solver timing and feature exports.

Every file written here is self-describing: JSON outputs embed the full
run configuration, and CSV outputs start with a ``# {json}`` comment line
carrying it.
"""

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .annealer import BruteForceSolver, ZeroSolver, make_solver
from .classify import (
    ClassifierModel,
    DEFAULT_G,
    evaluate,
    evaluate_scores,
    export_feature_report,
    feature_report,
    train_classifier,
)
from .exceptions import ValidationError
from .factorize import TrainConfig, load_model, save_model
from .mnist import load_mnist, sample_subset, train_test_subsets
from .nmf import nmf_infer, train_nmf_classifier
from .qubo import BRUTE_FORCE_MAX_DIM, build_column_qubos
from .seeding import derive_seed

__all__ = [
    "RunSpec",
    "RunResult",
    "SweepResult",
    "load_datasets",
    "model_test_set",
    "run_single",
    "run_train",
    "run_eval",
    "run_sweep",
    "run_bench",
    "run_inspect",
    "format_bench_table",
    "write_point",
    "point_name",
    "repeat_seed",
]

log = logging.getLogger(__name__)

M_TEST = 500


@dataclass
class RunSpec:
    command: str = "train"
    data_dir: str = None
    out: str = "runs"
    model: str = None
    cfg: TrainConfig = field(default_factory=TrainConfig)
    m: int = 300
    m_test: int = M_TEST
    g: float = DEFAULT_G
    solver: str = "sa"
    baseline: str = "nbmf"
    repeats: int = 3
    sweep_axis: str = None
    sweep_values: list = None
    official_test: bool = False
    parallel: bool = False
    bench_m: tuple = (10, 100)

    def __post_init__(self):
        if self.repeats < 1:
            raise ValidationError("repeats must be >= 1")
        if self.baseline not in ("nbmf", "nmf"):
            raise ValidationError(f"unknown baseline {self.baseline!r}")
        if self.command == "sweep":
            if self.sweep_axis not in ("m", "k", "epochs"):
                raise ValidationError("sweep axis must be one of m, k, epochs")
            if not self.sweep_values:
                raise ValidationError("sweep needs at least one value")

    def to_dict(self):
        d = asdict(self)
        d["cfg"] = self.cfg.to_dict()
        d["bench_m"] = list(self.bench_m)
        return d


def repeat_seed(master_seed, repeat):
    return derive_seed(master_seed, repeat)


def _comment_line(meta):
    return "# " + json.dumps(meta, sort_keys=True, separators=(",", ":")) + "\n"


def _write_csv(path, header, rows, meta):
    with open(path, "w", newline="") as fh:
        fh.write(_comment_line(meta))
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _dump_json(path, data):
    Path(path).write_text(json.dumps(data, sort_keys=True, indent=2) + "\n")


def load_datasets(spec, m=None):
    """Train/test :class:`LabeledImageSet` pair for ``spec`` (split by master seed)."""
    m = spec.m if m is None else m
    seed = spec.cfg.master_seed
    images, labels = load_mnist(spec.data_dir, "train")
    if spec.official_test:
        test_images, test_labels = load_mnist(spec.data_dir, "test")
        return (
            sample_subset(images, labels, m, seed),
            sample_subset(test_images, test_labels, spec.m_test, seed),
        )
    return train_test_subsets(images, labels, m, spec.m_test, seed)


@dataclass
class RunResult:
    model: ClassifierModel
    epochs: list
    final: dict
    wall_time: float

    @property
    def best_accuracy(self):
        return max(e["accuracy"] for e in self.epochs)


def _score(model, test, solver):
    if model.kind == "nmf":
        _, u, _ = nmf_infer(model, test.pixels)
        return evaluate_scores(u, test.labels, model.classes)
    return evaluate(model, test, solver)


def run_single(train_set, test_set, cfg, baseline="nbmf", solver_name="sa", g=DEFAULT_G, eval_each_epoch=True):
    """Train once, scoring the test set after every epoch (or only at the end)."""
    solver = make_solver(solver_name, cfg.sweeps_multiplier, cfg.t_final_ratio)
    test_solver = make_solver("sa", cfg.sweeps_multiplier, cfg.t_final_ratio)
    epochs = []
    last = {}

    def on_epoch(epoch, model):
        if eval_each_epoch or epoch == cfg.epochs - 1:
            res = _score(model, test_set, test_solver)
            last["eval"] = res
            epochs.append({
                "epoch": epoch + 1, "accuracy": res.accuracy, "cross_entropy": res.cross_entropy,
                "w_min": float(min(model.w1.min(), model.w2.min())),
                "w_max": float(max(model.w1.max(), model.w2.max())),
            })
            log.info("epoch %d accuracy %.4f cross-entropy %.4f", epoch + 1, res.accuracy, res.cross_entropy)

    start = time.monotonic()
    if baseline == "nmf":
        model = train_nmf_classifier(train_set, cfg, g, callback=on_epoch)
    else:
        model = train_classifier(train_set, cfg, solver, g, callback=on_epoch)
    wall = time.monotonic() - start
    # The last epoch's snapshot is the final model, so its score is the final score.
    return RunResult(model, epochs, last["eval"].to_dict(), wall)


def _metrics_record(result, spec, m, seed):
    cfg = result.model.cfg
    return {
        "accuracy": result.final["accuracy"],
        "cross_entropy": result.final["cross_entropy"],
        "confusion": result.final["confusion"],
        "best_accuracy": result.best_accuracy,
        "m": m,
        "m_test": spec.m_test,
        "k": cfg.k,
        "epochs": cfg.epochs,
        "seed": seed,
        "split_seed": spec.cfg.master_seed,
        "baseline": spec.baseline,
        "solver": spec.solver,
        "g": spec.g,
        "config": cfg.persisted_dict(),
    }


def write_point(out_dir, result, spec, m, seed):
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = _metrics_record(result, spec, m, seed)
    _dump_json(out_dir / "metrics.json", metrics)
    meta = {k: v for k, v in metrics.items() if k != "confusion"}
    rows = []
    for e in result.epochs:
        hist = result.model.history[e["epoch"] - 1]
        rows.append([e["epoch"], repr(e["accuracy"]), repr(e["cross_entropy"]), repr(hist["rmse"]), repr(hist["residual"])])
    _write_csv(out_dir / "metrics.csv", ["epoch", "accuracy", "cross_entropy", "train_rmse", "residual"], rows, meta)
    _dump_json(out_dir / "run.json", {"spec": spec.to_dict(), "m": m, "seed": seed, "wall_time_s": result.wall_time})
    if result.model.kind == "nbmf":
        model = result.model.to_nbmf_model()
        model.meta.update({"split_seed": spec.cfg.master_seed, "m_test": spec.m_test})
        save_model(model, out_dir / "model.nbmf")
    else:
        np.savez(out_dir / "model_nmf.npz", w1=result.model.w1, w2=result.model.w2)
    return metrics


def point_name(m, k, epochs, seed):
    return f"m{m}_k{k}_e{epochs}_s{seed}"


def run_train(spec):
    """One training run at ``spec.m`` using the master seed for init."""
    train_set, test_set = load_datasets(spec)
    seed = spec.cfg.master_seed
    result = run_single(train_set, test_set, spec.cfg, spec.baseline, spec.solver, spec.g)
    out = Path(spec.out) / point_name(spec.m, spec.cfg.k, spec.cfg.epochs, seed)
    return write_point(out, result, spec, spec.m, seed)


def model_test_set(spec, stored):
    """The test split a saved model was trained against (seed and size from its metadata)."""
    split_seed = stored.meta.get("split_seed", spec.cfg.master_seed)
    m_test = stored.meta.get("m_test", spec.m_test)
    split_spec = replace(spec, cfg=replace(spec.cfg, master_seed=split_seed), m_test=m_test)
    return load_datasets(split_spec, stored.h.shape[1])[1]


def run_eval(spec):
    """Score a saved model on the test split it was trained against."""
    if not spec.model:
        raise ValidationError("eval needs a model file")
    stored = load_model(spec.model)
    model = ClassifierModel.from_nbmf_model(stored)
    test_set = model_test_set(spec, stored)
    split_seed = stored.meta.get("split_seed", spec.cfg.master_seed)
    m_test = test_set.m
    m_train = stored.h.shape[1]
    solver = make_solver("sa", model.cfg.sweeps_multiplier, model.cfg.t_final_ratio)
    res = evaluate(model, test_set, solver)
    metrics = {
        **res.to_dict(),
        "m": m_train, "m_test": m_test, "k": model.k, "epochs": model.cfg.epochs,
        "seed": model.cfg.master_seed, "split_seed": split_seed, "config": model.cfg.persisted_dict(),
        "model": str(spec.model),
    }
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(out / "eval.json", metrics)
    return metrics


@dataclass
class SweepResult:
    axis: str
    records: list
    summary: list


def _point_config(spec, axis, value, seed):
    changes = {"master_seed": seed}
    if axis in ("k", "epochs"):
        changes[axis] = int(value)
    return replace(spec.cfg, **changes)


def run_sweep(spec):
    """Sweep one axis; every point is trained ``spec.repeats`` times.

    The train/test split is drawn once from the master seed (train draws of
    different ``m`` are nested), and each repeat re-initializes from its
    own derived seed.  Failing points are recorded and skipped.
    """
    axis, values = spec.sweep_axis, [int(v) for v in spec.sweep_values]
    max_m = max(values) if axis == "m" else spec.m
    train_pool, test_set = load_datasets(spec, max_m)
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)

    jobs = []
    for value in values:
        m = value if axis == "m" else spec.m
        for r in range(spec.repeats):
            jobs.append((value, r, m, repeat_seed(spec.cfg.master_seed, r)))

    def run_job(job):
        value, r, m, seed = job
        cfg = _point_config(spec, axis, value, seed)
        train_set = _head(train_pool, m)
        rec = {"axis": axis, "value": value, "repeat": r, "seed": seed, "m": m, "k": cfg.k, "epochs": cfg.epochs}
        try:
            result = run_single(train_set, test_set, cfg, spec.baseline, spec.solver, spec.g)
            write_point(out / point_name(m, cfg.k, cfg.epochs, seed), result, spec, m, seed)
            rec.update(
                best_accuracy=result.best_accuracy,
                final_cross_entropy=result.epochs[-1]["cross_entropy"],
                final_rmse=result.model.history[-1]["rmse"],
                rmse_history=[h["rmse"] for h in result.model.history],
                wall_time_s=result.wall_time,
                error="",
            )
        except Exception as exc:  # noqa: BLE001 - recorded, sweep continues
            log.exception("sweep point %s=%s repeat %d failed", axis, value, r)
            rec.update(best_accuracy=None, final_cross_entropy=None, final_rmse=None,
                       rmse_history=[], wall_time_s=None, error=repr(exc))
        return rec

    if spec.parallel:
        with ThreadPoolExecutor(max_workers=len(jobs)) as pool:
            records = list(pool.map(run_job, jobs))
    else:
        records = [run_job(j) for j in jobs]

    summary = []
    for value in values:
        ok = [r for r in records if r["value"] == value and not r["error"]]
        summary.append({
            "axis": axis,
            "value": value,
            "n_ok": len(ok),
            "mean_best_accuracy": _mean([r["best_accuracy"] for r in ok]),
            "mean_final_cross_entropy": _mean([r["final_cross_entropy"] for r in ok]),
            "mean_final_rmse": _mean([r["final_rmse"] for r in ok]),
        })

    meta = spec.to_dict()
    _write_csv(
        out / "sweep.csv",
        ["axis", "value", "repeat", "seed", "m", "k", "epochs", "best_accuracy",
         "final_cross_entropy", "final_rmse", "wall_time_s", "error"],
        [[r[c] for c in ("axis", "value", "repeat", "seed", "m", "k", "epochs", "best_accuracy",
                         "final_cross_entropy", "final_rmse", "wall_time_s", "error")] for r in records],
        meta,
    )
    _write_csv(
        out / "summary.csv",
        ["axis", "value", "n_ok", "mean_best_accuracy", "mean_final_cross_entropy", "mean_final_rmse"],
        [[s[c] for c in ("axis", "value", "n_ok", "mean_best_accuracy", "mean_final_cross_entropy",
                         "mean_final_rmse")] for s in summary],
        meta,
    )
    _dump_json(out / "sweep.json", {"spec": meta, "records": records, "summary": summary})
    return SweepResult(axis, records, summary)


def _head(data, m):
    return type(data)(data.pixels[:, :m], data.labels[:m], data.classes,
                      None if data.indices is None else data.indices[:m])


def _mean(values):
    return float(np.mean(values)) if values else None


def _time_per_column(problems, solver, reads, seed):
    total = 0.0
    for j, p in enumerate(problems):
        t0 = time.monotonic()
        solver.solve(p, reads, derive_seed(seed, j))
        total += time.monotonic() - t0
    return 1000.0 * total / len(problems)


def run_bench(spec, n=794, k=None, write=True):
    """Average solve time per column on synthetic ``V = W H``.

    Only the solve call is timed.  The no-op solver row measures what the
    timing harness itself costs.
    """
    cfg = spec.cfg
    k = cfg.k if k is None else k
    rows = {"sa": {}, "brute": {}, "zero": {}}
    sa = make_solver("sa", cfg.sweeps_multiplier, cfg.t_final_ratio)
    for m in spec.bench_m:
        rng = np.random.default_rng(derive_seed(cfg.master_seed, m))
        w = rng.uniform(0.0, 1.0, (n, k))
        h = (rng.random((k, m)) < 0.5).astype(np.float64)
        problems = build_column_qubos(w, w @ h)
        # Untimed warm-up so JIT compilation is not billed to the first column.
        sa.solve(problems[0], 1, 0)
        rows["sa"][m] = _time_per_column(problems, sa, cfg.reads, cfg.master_seed)
        rows["brute"][m] = (
            _time_per_column(problems, BruteForceSolver(), 1, 0) if k <= BRUTE_FORCE_MAX_DIM else None
        )
        rows["zero"][m] = _time_per_column(problems, ZeroSolver(), cfg.reads, cfg.master_seed)
    report = {
        "n": n, "k": k, "m_values": list(spec.bench_m), "reads": cfg.reads,
        "sweeps_multiplier": cfg.sweeps_multiplier, "config": cfg.to_dict(),
        "rows": [
            {"solver": "SA", "usage": "Local", "type": "Total execution time", "ms": rows["sa"]},
            {"solver": "Brute force", "usage": "Local", "type": "Total execution time", "ms": rows["brute"]},
            {"solver": "No-op", "usage": "Local", "type": "Harness overhead", "ms": rows["zero"]},
        ],
    }
    if write:
        out = Path(spec.out)
        out.mkdir(parents=True, exist_ok=True)
        _dump_json(out / "bench.json", report)
        _write_csv(
            out / "bench.csv",
            ["solver", "usage", "type"] + [f"m={m}" for m in spec.bench_m],
            [[r["solver"], r["usage"], r["type"]] + [_fmt_ms(r["ms"][m]) for m in spec.bench_m]
             for r in report["rows"]],
            {"n": n, "k": k, "config": cfg.to_dict()},
        )
        (out / "bench.txt").write_text(format_bench_table(report))
    return report


def _fmt_ms(value):
    return "n/a" if value is None else f"{value:.3f}"


def format_bench_table(report):
    ms = report["m_values"]
    head = f"{'Solver':<12} {'Usage':<6} {'Type':<22} | Average time (ms) per vector"
    sub = f"{'':<12} {'':<6} {'':<22} | " + " ".join(f"{'m=' + str(m):>10}" for m in ms)
    lines = [head, sub, "-" * len(head)]
    for r in report["rows"]:
        cells = " ".join(f"{_fmt_ms(r['ms'][m]):>10}" for m in ms)
        lines.append(f"{r['solver']:<12} {r['usage']:<6} {r['type']:<22} | {cells}")
    return "\n".join(lines) + "\n"


def run_inspect(spec):
    """Feature images and usage tables for every feature of a saved model."""
    if not spec.model:
        raise ValidationError("inspect needs a model file")
    stored = load_model(spec.model)
    model = ClassifierModel.from_nbmf_model(stored)
    if model.labels is None:
        raise ValidationError("model file carries no training labels")
    records = feature_report(model, stored.h, model.labels)
    comment = json.dumps({"model": str(spec.model), "config": stored.config.to_dict(), "g": model.g},
                         sort_keys=True, separators=(",", ":"))
    export_feature_report(records, spec.out, stored.config.x_max, comment)
    return records
