import numpy as np
import pandas as pd
import pytest

from config import FusionInputVariant, IntegratorArch
from errors import DatasetError, ShapeError
from engines.integrator import build_integrator
from engines.metrics import (build_report, denormalize_batch, evaluate_mpjpe, joint_errors, load_predictions,
                             load_report, mpjpe, save_predictions, save_report_tables)
from engines.perceptron import build_perceptron
from engines.skeleton import NormParams


def _meta(subjects):
    n = len(subjects)
    return pd.DataFrame({"seq": [f"S{s:03d}_FK_A00_R2" for s in subjects], "subject": subjects,
                         "vertical_range": ["FK"] * n, "end_angle": [0] * n, "frame": list(range(1, 2 * n, 2))})


def _mpjpe_oracle(pred, gt):
    total, count = 0.0, 0
    for f in range(pred.shape[0]):
        for j in range(pred.shape[1]):
            total += np.sqrt(sum((pred[f, j, k] - gt[f, j, k]) ** 2 for k in range(3)))
            count += 1
    return total / count


class TestMpjpe:
    def test_three_four_five(self):
        gt = np.zeros((1, 14, 3))
        pred = np.zeros((1, 14, 3))
        pred[..., 0], pred[..., 1] = 3.0, 4.0
        assert mpjpe(pred, gt) == pytest.approx(5.0, abs=1e-12)

    def test_matches_brute_force(self, rng):
        for _ in range(100):
            frames = int(rng.integers(1, 5))
            pred, gt = rng.normal(0, 300, (frames, 14, 3)), rng.normal(0, 300, (frames, 14, 3))
            assert mpjpe(pred, gt) == pytest.approx(_mpjpe_oracle(pred, gt), rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            joint_errors(np.zeros((2, 14, 3)), np.zeros((2, 13, 3)))

    def test_denormalize_batch(self):
        norm = NormParams(np.array([-1.0, -2.0, 0.0]), np.array([1.0, 2.0, 10.0]))
        out = denormalize_batch(np.full((1, 14, 3), 0.5), norm)
        assert np.allclose(out[0, 0], [0.0, 0.0, 5.0])


class TestReport:
    def test_overall_mean_is_frame_weighted_subject_mean(self, rng):
        subjects = [0, 0, 0, 1, 2, 2]
        pred, gt = rng.normal(0, 100, (6, 14, 3)), rng.normal(0, 100, (6, 14, 3))
        report = build_report(pred, gt, _meta(subjects), "unit")
        weighted = np.average(report.per_subject["mpjpe_mm"], weights=report.per_subject["n_frames"])
        assert report.overall_mean_mm == pytest.approx(weighted, rel=1e-12)
        assert report.overall_mean_mm == pytest.approx(mpjpe(pred, gt), rel=1e-12)
        assert list(report.per_subject["n_frames"]) == [3, 1, 2]

    def test_per_subject_variance(self, rng):
        pred, gt = rng.normal(0, 100, (4, 14, 3)), np.zeros((4, 14, 3))
        report = build_report(pred, gt, _meta([5, 5, 5, 5]), "unit")
        frame_errors = joint_errors(pred, gt).mean(axis=1)
        assert report.per_subject["variance_mm2"].iloc[0] == pytest.approx(np.var(frame_errors), rel=1e-12)
        assert report.std_across_subjects_mm == 0.0

    def test_tables(self, rng):
        report = build_report(rng.normal(size=(3, 14, 3)), rng.normal(size=(3, 14, 3)), _meta([0, 1, 1]), "unit",
                              meta={"arch": "HALF_HOURGLASS"})
        assert len(report.per_joint) == 14
        assert len(report.per_task) == 1 and report.per_task["n_frames"].iloc[0] == 3
        assert report.to_row()["arch"] == "HALF_HOURGLASS"
        assert "unit" in report.summary()

    def test_metadata_length_mismatch(self):
        with pytest.raises(ShapeError):
            build_report(np.zeros((2, 14, 3)), np.zeros((2, 14, 3)), _meta([0]), "unit")

    def test_empty_split(self):
        with pytest.raises(DatasetError):
            build_report(np.zeros((0, 14, 3)), np.zeros((0, 14, 3)), _meta([]), "unit")


class TestPersistence:
    def test_report_tables_reload(self, tmp_path, rng):
        report = build_report(rng.normal(size=(4, 14, 3)), rng.normal(size=(4, 14, 3)), _meta([0, 0, 1, 1]), "unit")
        save_report_tables(report, tmp_path)
        again = load_report(tmp_path, "unit")
        assert again.overall_mean_mm == pytest.approx(report.overall_mean_mm, rel=1e-9)
        assert list(again.per_subject["subject"]) == [0, 1]
        with pytest.raises(DatasetError):
            load_report(tmp_path, "other")

    def test_predictions_reload(self, tmp_path, rng):
        meta = _meta([0, 1])
        pred, gt = rng.normal(size=(2, 14, 3)), rng.normal(size=(2, 14, 3))
        save_predictions(meta, pred, gt, tmp_path / "pred.csv")
        table, pred_back, gt_back = load_predictions(tmp_path / "pred.csv")
        assert list(table["subject"]) == [0, 1]
        np.testing.assert_allclose(pred_back, pred, rtol=1e-12)
        np.testing.assert_allclose(gt_back, gt, rtol=1e-12)


def test_evaluate_on_tiny_dataset(tiny_dataset, tiny_perceptron_cfg, tiny_integrator_cfg):
    split = tiny_dataset.split("test")
    integrator = build_integrator(IntegratorArch.SIMPLE_ENCODER, FusionInputVariant.HEATMAPS_ONLY,
                                  tiny_integrator_cfg, tiny_perceptron_cfg)
    report = evaluate_mpjpe(build_perceptron(tiny_perceptron_cfg), integrator, split, tiny_dataset.norm_params,
                            experiment="untrained")
    assert report.n_frames == 24
    assert set(report.per_subject["subject"]) == {0, 1}
    assert report.meta["views"] == "0,1"
    assert report.predictions_mm.shape == (24, 14, 3)
    assert report.overall_mean_mm == pytest.approx(mpjpe(report.predictions_mm, split.poses3d()), rel=1e-12)
