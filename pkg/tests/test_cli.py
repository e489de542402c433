import csv
import json

import numpy as np
import pytest

from nbmf.cli import main
from nbmf.experiments import RunSpec, format_bench_table, run_bench, run_sweep
from nbmf.exceptions import ValidationError
from nbmf.factorize import TrainConfig, load_model

SMALL = ["--m", "30", "--m-test", "20", "--k", "6", "--epochs", "2", "--reads", "3"]


def read_csv(path):
    with open(path) as fh:
        meta = json.loads(fh.readline()[2:])
        return meta, list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def trained_run(digit_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    assert main(["--cmd", "train", "--data-dir", str(digit_dir), "--out", str(out), "--seed", "5"] + SMALL) == 0
    return out / "m30_k6_e2_s5"


class TestTrain:
    def test_layout(self, trained_run):
        names = sorted(p.name for p in trained_run.iterdir())
        assert names == ["metrics.csv", "metrics.json", "model.nbmf", "run.json"]

    def test_metrics(self, trained_run):
        metrics = json.loads((trained_run / "metrics.json").read_text())
        assert metrics["m"] == 30 and metrics["k"] == 6 and metrics["seed"] == 5
        assert np.sum(metrics["confusion"]) == 20
        assert metrics["config"]["master_seed"] == 5
        meta, rows = read_csv(trained_run / "metrics.csv")
        assert meta["config"] == metrics["config"]
        assert [int(r["epoch"]) for r in rows] == [1, 2]
        assert float(rows[-1]["accuracy"]) == metrics["accuracy"]

    def test_byte_identical_rerun(self, trained_run, digit_dir, tmp_path):
        args = ["--cmd", "train", "--data-dir", str(digit_dir), "--seed", "5"] + SMALL
        assert main(args + ["--out", str(tmp_path / "a"), "--jobs", "2"]) == 0
        again = tmp_path / "a" / trained_run.name
        for name in ("model.nbmf", "metrics.json", "metrics.csv"):
            assert (again / name).read_bytes() == (trained_run / name).read_bytes()

    def test_eval_reproduces(self, trained_run, tmp_path, digit_dir):
        out = tmp_path / "eval"
        rc = main(["--cmd", "eval", "--data-dir", str(digit_dir), "--model", str(trained_run / "model.nbmf"),
                   "--out", str(out), "--dump-reads", str(tmp_path / "reads.csv"),
                   "--dump-qubo", str(tmp_path / "q.json")])
        assert rc == 0
        ev = json.loads((out / "eval.json").read_text())
        metrics = json.loads((trained_run / "metrics.json").read_text())
        assert ev["accuracy"] == metrics["accuracy"] and ev["confusion"] == metrics["confusion"]
        lines = (tmp_path / "reads.csv").read_text().splitlines()
        assert lines[0] == "read_index,energy" and len(lines) == 1 + 3
        assert json.loads((tmp_path / "q.json").read_text())["dim"] == 6

    def test_inspect(self, trained_run, tmp_path):
        out = tmp_path / "inspect"
        assert main(["--cmd", "inspect", "--model", str(trained_run / "model.nbmf"), "--out", str(out)]) == 0
        assert len(list(out.glob("feature_*.pgm"))) == 6
        meta, rows = read_csv(out / "features.csv")
        assert len(rows) == 60 and meta["config"]["k"] == 6
        h = load_model(trained_run / "model.nbmf").h
        for j in range(6):
            assert sum(int(r["histogram_count"]) for r in rows if int(r["feature_id"]) == j) == h[j].sum()

    def test_nmf_baseline(self, digit_dir, tmp_path):
        rc = main(["--cmd", "train", "--baseline", "nmf", "--data-dir", str(digit_dir), "--out", str(tmp_path)] + SMALL)
        assert rc == 0
        assert (tmp_path / "m30_k6_e2_s0" / "model_nmf.npz").exists()


class TestSweep:
    @pytest.fixture(scope="class")
    @classmethod
    def sweep(cls, digit_dir, tmp_path_factory):
        out = tmp_path_factory.mktemp("sweep")
        spec = RunSpec(command="sweep", data_dir=str(digit_dir), out=str(out), m_test=20,
                       cfg=TrainConfig(k=4, epochs=2, reads=2, master_seed=1),
                       sweep_axis="m", sweep_values=[10, 20], repeats=2)
        return run_sweep(spec), out

    def test_record_count(self, sweep):
        result, out = sweep
        assert len(result.records) == 4
        _, rows = read_csv(out / "sweep.csv")
        assert len(rows) == 4 and all(r["error"] == "" for r in rows)

    def test_point_dirs(self, sweep):
        result, out = sweep
        for rec in result.records:
            assert (out / f"m{rec['m']}_k4_e2_s{rec['seed']}" / "model.nbmf").exists()

    def test_means_consistent(self, sweep):
        _, out = sweep
        _, rows = read_csv(out / "sweep.csv")
        meta, summary = read_csv(out / "summary.csv")
        assert meta["cfg"]["master_seed"] == 1
        for s in summary:
            vals = [float(r["best_accuracy"]) for r in rows if r["value"] == s["value"]]
            assert float(s["mean_best_accuracy"]) == pytest.approx(np.mean(vals), rel=1e-12)

    def test_repeat_seeds_differ(self, sweep):
        result, _ = sweep
        assert len({r["seed"] for r in result.records}) == 2

    def test_failures_recorded(self, digit_dir, tmp_path):
        spec = RunSpec(command="sweep", data_dir=str(digit_dir), out=str(tmp_path), m=20, m_test=20,
                       cfg=TrainConfig(k=4, epochs=1, reads=2), solver="brute",
                       sweep_axis="k", sweep_values=[3, 30], repeats=1)
        result = run_sweep(spec)
        assert result.records[0]["error"] == ""
        assert "CapacityError" in result.records[1]["error"]
        assert result.summary[1]["n_ok"] == 0

    def test_single_point(self, digit_dir, tmp_path):
        spec = RunSpec(command="sweep", data_dir=str(digit_dir), out=str(tmp_path), m=20, m_test=20,
                       cfg=TrainConfig(k=3, epochs=1, reads=2), sweep_axis="epochs", sweep_values=[1], repeats=1)
        assert len(run_sweep(spec).records) == 1

    def test_invalid_specs(self):
        with pytest.raises(ValidationError):
            RunSpec(command="sweep", sweep_axis="m", sweep_values=[])
        with pytest.raises(ValidationError):
            RunSpec(command="train", repeats=0)


class TestBench:
    def spec(self, **cfg):
        return RunSpec(command="bench", cfg=TrainConfig(k=12, reads=5, **cfg), bench_m=(10, 20))

    def test_layout(self):
        report = run_bench(self.spec(), n=60, write=False)
        table = format_bench_table(report)
        assert "Average time (ms) per vector" in table
        assert "m=10" in table and "m=20" in table
        zero = report["rows"][2]["ms"]
        assert all(v < 1.0 for v in zero.values())

    def test_brute_infeasible(self):
        report = run_bench(self.spec(), n=30, k=30, write=False)
        assert report["rows"][1]["ms"][10] is None
        assert "n/a" in format_bench_table(report)

    def test_more_sweeps_slower(self):
        fast = run_bench(self.spec(sweeps_multiplier=100), n=60, write=False)["rows"][0]["ms"][20]
        slow = run_bench(self.spec(sweeps_multiplier=400), n=60, write=False)["rows"][0]["ms"][20]
        assert slow > fast

    def test_cli_writes_files(self, tmp_path, capsys):
        rc = main(["--cmd", "bench", "--k", "8", "--reads", "2", "--bench-m", "3", "--out", str(tmp_path)])
        assert rc == 0
        assert "Average time (ms) per vector" in capsys.readouterr().out
        assert {p.name for p in tmp_path.iterdir()} == {"bench.csv", "bench.json", "bench.txt"}

    def test_parallel_forbidden(self):
        assert main(["--cmd", "bench", "--parallel", "--bench-m", "2", "--k", "4"]) == 2


class TestExitCodes:
    def test_missing_cmd(self):
        assert main([]) == 2

    def test_bad_sweep(self):
        assert main(["--cmd", "sweep", "--sweep-axis", "m"]) == 2

    def test_missing_data(self, tmp_path):
        assert main(["--cmd", "train", "--data-dir", str(tmp_path / "none")] + SMALL) == 3

    def test_capacity(self, digit_dir, tmp_path):
        rc = main(["--cmd", "train", "--solver", "brute", "--data-dir", str(digit_dir),
                   "--out", str(tmp_path), "--m", "5", "--m-test", "5", "--k", "30", "--epochs", "1"])
        assert rc == 4

    def test_corrupt_model(self, tmp_path):
        (tmp_path / "bad.nbmf").write_bytes(b"junk")
        assert main(["--cmd", "inspect", "--model", str(tmp_path / "bad.nbmf"), "--out", str(tmp_path)]) == 2

    def test_missing_model(self, tmp_path):
        assert main(["--cmd", "inspect", "--model", str(tmp_path / "none.nbmf")]) == 3

    def test_invalid_config_value(self):
        assert main(["--cmd", "train", "--k", "0"]) == 2


class TestConfigFile:
    def test_flags_override_file(self, digit_dir, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"cmd": "train", "data-dir": str(digit_dir), "m": 30, "m_test": 20,
                                   "k": 5, "epochs": 1, "reads": 2, "seed": 9}))
        assert main(["--config", str(cfg), "--k", "4", "--out", str(tmp_path)]) == 0
        metrics = json.loads((tmp_path / "m30_k4_e1_s9" / "metrics.json").read_text())
        assert metrics["k"] == 4 and metrics["config"]["reads"] == 2

    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"cmd": "train", "bogus": 1}))
        assert main(["--config", str(cfg)]) == 2
