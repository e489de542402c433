"""Command-line entry point (``nbmf --cmd ...``).

Exit codes: 0 success, 2 invalid input, 3 I/O failure, 4 solver capacity.
"""

import argparse
import json
import logging
import sys
from dataclasses import fields

from .annealer import make_solver, write_read_energies_csv
from .classify import ClassifierModel
from .exceptions import CapacityError, IdxParseError, ModelFormatError, ValidationError
from .experiments import (
    RunSpec,
    format_bench_table,
    model_test_set,
    run_bench,
    run_eval,
    run_inspect,
    run_sweep,
    run_train,
)
from .factorize import TrainConfig, load_model
from .qubo import build_column_qubo

log = logging.getLogger("nbmf")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_CAPACITY = 0, 2, 3, 4

# flag dest -> TrainConfig field
CONFIG_FLAGS = {
    "k": "k",
    "epochs": "epochs",
    "alpha": "alpha",
    "beta": "beta",
    "eta": "eta",
    "epsilon": "epsilon",
    "x_max": "x_max",
    "reads": "reads",
    "inner_iters": "inner_iters",
    "gamma": "gamma",
    "w_update": "w_update_mode",
    "sweeps_multiplier": "sweeps_multiplier",
    "t_final_ratio": "t_final_ratio",
    "seed": "master_seed",
    "jobs": "n_jobs",
}
SPEC_FLAGS = (
    "cmd", "data_dir", "out", "model", "m", "m_test", "g", "solver", "baseline", "repeats",
    "sweep_axis", "sweep_values", "official_test", "parallel", "bench_m",
)


def build_parser():
    p = argparse.ArgumentParser(prog="nbmf", description=__doc__.splitlines()[0])
    a = p.add_argument
    a("--cmd", choices=["train", "eval", "sweep", "bench", "inspect"])
    a("--config", help="JSON file with the same keys as the flags; flags win")
    a("--data-dir", help="directory with MNIST IDX files (default: $NBMF_DATA_DIR)")
    a("--out", help="output directory (default: runs)")
    a("--model", help="model file for eval/inspect")
    a("--m", type=int, help="training columns (default 300)")
    a("--m-test", type=int, help="test columns (default 500)")
    a("--k", type=int)
    a("--epochs", type=int)
    a("--g", type=float, help="label row weight (default 9)")
    a("--alpha", type=float)
    a("--beta", type=float)
    a("--eta", type=float)
    a("--epsilon", type=float)
    a("--x-max", type=float)
    a("--reads", type=int)
    a("--inner-iters", type=int)
    a("--gamma", type=float, help="projected gradient step for --w-update pgm")
    a("--w-update", choices=["rmsprop", "pgm"])
    a("--solver", choices=["sa", "brute"])
    a("--baseline", choices=["nbmf", "nmf"])
    a("--seed", type=int)
    a("--repeats", type=int)
    a("--sweep-axis", choices=["m", "k", "epochs"])
    a("--sweep-values", type=lambda s: [int(x) for x in s.split(",") if x], help="comma-separated")
    a("--bench-m", type=lambda s: [int(x) for x in s.split(",") if x], help="bench m values (default 10,100)")
    a("--sweeps-multiplier", type=float)
    a("--t-final-ratio", type=float)
    a("--jobs", type=int, help="worker threads for per-column solves")
    a("--parallel", action="store_true", default=None, help="run sweep points concurrently")
    a("--official-test", action="store_true", default=None, help="draw the test set from t10k files")
    a("--dump-reads", help="eval: write per-read energies of test column 0 to this CSV")
    a("--dump-qubo", help="eval: write the QUBO of test column 0 to this JSON file")
    a("-v", "--verbose", action="store_true")
    return p


def _normalize_keys(data):
    return {key.replace("-", "_"): value for key, value in data.items()}


def spec_from_args(args):
    """Merge defaults < config file < explicit flags into a :class:`RunSpec`."""
    values = {}
    if args.config:
        with open(args.config) as fh:
            values.update(_normalize_keys(json.load(fh)))
    for key, value in vars(args).items():
        if value is not None and key not in ("config", "verbose", "dump_reads", "dump_qubo"):
            values[key] = value
    known = set(CONFIG_FLAGS) | set(SPEC_FLAGS)
    unknown = set(values) - known
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    defaults = {f.name: f.default for f in fields(TrainConfig)}
    cfg = TrainConfig(**{**defaults, **{CONFIG_FLAGS[k]: v for k, v in values.items() if k in CONFIG_FLAGS}})
    spec_kwargs = {k: v for k, v in values.items() if k in SPEC_FLAGS and k != "cmd"}
    if "bench_m" in spec_kwargs:
        spec_kwargs["bench_m"] = tuple(spec_kwargs["bench_m"])
    if not values.get("cmd"):
        raise ValidationError("--cmd is required")
    return RunSpec(command=values["cmd"], cfg=cfg, **spec_kwargs)


def _dump(spec, reads_path, qubo_path):
    stored = load_model(spec.model)
    model = ClassifierModel.from_nbmf_model(stored)
    test = model_test_set(spec, stored)
    problem = build_column_qubo(model.w1, test.pixels[:, 0])
    if qubo_path:
        with open(qubo_path, "w") as fh:
            fh.write(problem.to_json())
    if reads_path:
        cfg = model.cfg
        sols = make_solver("sa", cfg.sweeps_multiplier, cfg.t_final_ratio).sample(problem, cfg.reads, cfg.master_seed)
        write_read_energies_csv(reads_path, sols)


def run(spec, dump_reads=None, dump_qubo=None):
    cmd = spec.command
    if cmd == "train":
        return run_train(spec)
    if cmd == "eval":
        metrics = run_eval(spec)
        if dump_reads or dump_qubo:
            _dump(spec, dump_reads, dump_qubo)
        return metrics
    if cmd == "sweep":
        result = run_sweep(spec)
        return {"summary": result.summary}
    if cmd == "bench":
        if spec.parallel:
            raise ValidationError("bench runs cannot be parallel")
        report = run_bench(spec)
        print(format_bench_table(report), end="")
        return None
    if cmd == "inspect":
        records = run_inspect(spec)
        return {"features": len(records), "out": spec.out}
    raise ValidationError(f"unknown command {cmd!r}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        spec = spec_from_args(args)
        result = run(spec, args.dump_reads, args.dump_qubo)
    except CapacityError as exc:
        print(f"nbmf: solver capacity: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (ValidationError, IdxParseError, ModelFormatError, json.JSONDecodeError) as exc:
        print(f"nbmf: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"nbmf: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    if result is not None:
        summary = {k: v for k, v in result.items() if k != "confusion"} if isinstance(result, dict) else result
        print(json.dumps(summary, sort_keys=True, indent=2, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
