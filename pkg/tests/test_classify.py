import numpy as np
import pytest

from nbmf.annealer import BruteForceSolver, SimulatedAnnealingSolver
from nbmf.classify import (
    ClassifierModel,
    assemble_training_matrix,
    evaluate,
    evaluate_scores,
    export_feature_report,
    feature_report,
    infer,
    predict_from_scores,
    split_basis,
    train_classifier,
    write_pgm,
)
from nbmf.exceptions import ShapeError, ValidationError
from nbmf.factorize import TrainConfig, load_model, save_model
from nbmf.mnist import LabeledImageSet

from conftest import small_set


def tiny_set():
    pixels = np.array([[0.0, 1.0, 0.5], [1.0, 0.0, 0.25]])
    return LabeledImageSet(pixels, np.array([2, 0, 9]))


class TestAssemble:
    def test_layout(self):
        v = assemble_training_matrix(tiny_set(), g=9.0)
        assert v.shape == (12, 3)
        np.testing.assert_array_equal(v[:2], tiny_set().pixels)
        np.testing.assert_array_equal(v[2:].sum(axis=0), [9.0, 9.0, 9.0])
        assert v[2 + 2, 0] == 9.0 and v[2 + 0, 1] == 9.0 and v[2 + 9, 2] == 9.0

    def test_rejects_bad_g(self):
        with pytest.raises(ValidationError):
            assemble_training_matrix(tiny_set(), g=0.0)

    def test_split(self):
        w = np.arange(24.0).reshape(12, 2)
        w1, w2 = split_basis(w, 2)
        assert w1.shape == (2, 2) and w2.shape == (10, 2)
        np.testing.assert_array_equal(np.vstack([w1, w2]), w)


class TestPredict:
    def test_argmax(self):
        u = np.array([[0.0, 5.0], [3.0, 1.0]])
        np.testing.assert_array_equal(predict_from_scores(u), [1, 0])

    def test_tie_lowest_class(self):
        np.testing.assert_array_equal(predict_from_scores(np.ones((4, 2))), [0, 0])

    def test_evaluate_scores(self):
        u = np.array([[2.0, 0.0, 0.0], [0.0, 2.0, 2.0]])
        res = evaluate_scores(u, np.array([0, 1, 0]))
        assert res.accuracy == pytest.approx(2 / 3)
        np.testing.assert_array_equal(res.confusion, [[1, 1], [0, 1]])
        p = np.exp(2) / (np.exp(2) + 1)
        assert res.cross_entropy == pytest.approx(-(2 * np.log(p) + np.log(1 - p)) / 3)


def model_from(w1, w2, cfg=None):
    return ClassifierModel(np.asarray(w1, float), np.asarray(w2, float), cfg=cfg or TrainConfig(k=np.shape(w1)[1]))


class TestInfer:
    def test_exact_codes(self):
        # Each test column is an exact basis column; brute force recovers it.
        w1 = np.eye(4)[:, :3]
        w2 = np.array([[1.0, 0, 0], [0, 1, 0], [0, 0, 1]])
        model = model_from(w1, w2)
        labels, u, h = infer(model, w1.copy(), BruteForceSolver())
        np.testing.assert_array_equal(h, np.eye(3, dtype=np.uint8))
        np.testing.assert_array_equal(labels, [0, 1, 2])
        np.testing.assert_array_equal(u, w2 @ h)

    def test_row_mismatch(self):
        model = model_from(np.ones((4, 2)), np.ones((3, 2)))
        with pytest.raises(ShapeError):
            infer(model, np.ones((5, 1)), BruteForceSolver())

    def test_k_mismatch(self):
        with pytest.raises(ShapeError):
            model_from(np.ones((4, 2)), np.ones((3, 3)))

    def test_independent_of_jobs(self):
        rng = np.random.default_rng(0)
        model = model_from(rng.random((16, 6)), rng.random((10, 6)), TrainConfig(k=6, reads=4))
        pixels = rng.random((16, 12))
        a = infer(model, pixels, SimulatedAnnealingSolver(), n_jobs=1)[2]
        b = infer(model, pixels, SimulatedAnnealingSolver(), n_jobs=3)[2]
        np.testing.assert_array_equal(a, b)


@pytest.fixture(scope="module")
def trained():
    train_set, test_set = small_set(60, 0), small_set(30, 1)
    cfg = TrainConfig(k=8, epochs=3, reads=5, master_seed=3)
    snapshots = []
    model = train_classifier(train_set, cfg, SimulatedAnnealingSolver(), callback=lambda e, m: snapshots.append(m))
    return model, train_set, test_set, snapshots


class TestTrain:
    def test_shapes(self, trained):
        model, train_set, _, snapshots = trained
        assert model.w1.shape == (100, 8) and model.w2.shape == (10, 8)
        assert model.h.shape == (8, 60)
        assert len(snapshots) == 3 and len(model.history) == 3
        np.testing.assert_array_equal(snapshots[-1].w1, model.w1)

    def test_bounds(self, trained):
        model = trained[0]
        assert model.w1.min() >= 0 and model.w1.max() <= 1.0
        assert model.w2.min() >= 0 and model.w2.max() <= 1.0

    def test_learns_separable_patterns(self, trained):
        model, _, test_set, _ = trained
        # Ten distinct bar patterns: far above chance after a few epochs.
        assert evaluate(model, test_set, SimulatedAnnealingSolver()).accuracy >= 0.5

    def test_model_file_round_trip(self, trained, tmp_path):
        model = trained[0]
        save_model(model.to_nbmf_model(), tmp_path / "m.nbmf")
        back = ClassifierModel.from_nbmf_model(load_model(tmp_path / "m.nbmf"))
        np.testing.assert_array_equal(back.w1, model.w1)
        np.testing.assert_array_equal(back.w2, model.w2)
        np.testing.assert_array_equal(back.h, model.h)
        np.testing.assert_array_equal(back.labels, model.labels)
        assert back.g == model.g and back.cfg == model.cfg


class TestFeatureReport:
    def test_histogram_totals(self, trained):
        model, train_set, _, _ = trained
        records = feature_report(model, model.h, train_set.labels)
        assert len(records) == 8
        for rec in records:
            assert rec.image.shape == (10, 10)
            assert rec.histogram.sum() == model.h[rec.feature_id].sum()

    def test_histogram_by_label(self):
        model = model_from(np.zeros((4, 2)), np.zeros((10, 2)))
        h = np.array([[1, 1, 0], [0, 1, 1]], dtype=np.uint8)
        records = feature_report(model, h, np.array([3, 3, 5]))
        assert records[0].histogram[3] == 2 and records[0].histogram.sum() == 2
        assert records[1].histogram[3] == 1 and records[1].histogram[5] == 1

    def test_shape_check(self):
        model = model_from(np.zeros((4, 2)), np.zeros((10, 2)))
        with pytest.raises(ShapeError):
            feature_report(model, np.zeros((3, 2), dtype=np.uint8), [0, 1])

    def test_export(self, trained, tmp_path):
        model, train_set, _, _ = trained
        export_feature_report(feature_report(model, model.h, train_set.labels), tmp_path, comment='{"k":8}')
        assert len(list(tmp_path.glob("feature_*.pgm"))) == 8
        lines = (tmp_path / "features.csv").read_text().splitlines()
        assert lines[0] == '# {"k":8}' and lines[1] == "feature_id,label,histogram_count"
        assert len(lines) == 2 + 8 * 10
        assert len((tmp_path / "w2.csv").read_text().splitlines()) == 2 + 8 * 10


class TestPgm:
    def test_zero_column_is_black(self, tmp_path):
        write_pgm(tmp_path / "z.pgm", np.zeros((3, 4)))
        data = (tmp_path / "z.pgm").read_bytes()
        assert data == b"P5\n4 3\n255\n" + bytes(12)

    def test_scaling(self, tmp_path):
        write_pgm(tmp_path / "s.pgm", np.array([[0.0, 0.5, 1.0]]), x_max=1.0)
        assert (tmp_path / "s.pgm").read_bytes()[-3:] == bytes([0, 128, 255])
        write_pgm(tmp_path / "t.pgm", np.array([[2.0]]), x_max=2.0)
        assert (tmp_path / "t.pgm").read_bytes()[-1] == 255
