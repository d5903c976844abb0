import numpy as np
import pandas as pd
import pytest

import dataclasses

import config
from config import (ExperimentConfig, FusionInputVariant, IntegratorArch, IntegratorConfig, OcclusionConfig,
                    PerceptronConfig, RigConfig, Stage, TrainConfig)
from errors import ConfigError, DatasetError
from engines.ablation import AblationSuite, experiment_name, run_ablation, suite_arms, summarize
from engines.metrics import build_report
from data_loaders.dataset import synthesize
from ui.report import collect_reports, emit_report, metrics_table, pick_samples, plot_pose_samples


def _report(rng, experiment, subjects, meta=None, scale=1.0):
    n = len(subjects)
    frame_meta = pd.DataFrame({"seq": [f"S{s:03d}_KS_A30_R2" for s in subjects], "subject": subjects,
                               "vertical_range": ["KS"] * n, "end_angle": [30] * n, "frame": [1] * n})
    return build_report(scale * rng.normal(size=(n, 14, 3)), np.zeros((n, 14, 3)), frame_meta, experiment, meta)


class TestSuites:
    def test_arm_counts(self):
        assert [a.variant for a in suite_arms(AblationSuite.INPUT_VARIANTS, 2)] == list(FusionInputVariant)
        encoders = suite_arms("encoders", 2)
        assert [a.arch for a in encoders] == list(IntegratorArch)
        assert {a.variant for a in encoders} == {FusionInputVariant.HEATMAPS_PLUS_IMAGE}
        views = suite_arms(AblationSuite.VIEW_COUNT, 3)
        assert [a.views for a in views] == [(0,), (1,), (2,), (0, 1, 2)]

    def test_views_suite_needs_two_cameras(self):
        with pytest.raises(ConfigError):
            suite_arms(AblationSuite.VIEW_COUNT, 1)

    def test_experiment_name(self):
        assert experiment_name("views", "single_v0", 2) == "views/single_v0/seed2"


class TestSummary:
    def test_error_reduction_is_relative_to_baseline(self):
        table = pd.DataFrame({
            "arm": ["HEATMAPS_ONLY"] * 3 + ["HEATMAPS_PLUS_SKIPS"] * 3,
            "seed": [0, 1, 2] * 2,
            "mpjpe_mm": [100.0, 120.0, 80.0, 60.0, 70.0, 90.0],
        })
        summary = summarize(table, AblationSuite.INPUT_VARIANTS).set_index("arm")
        assert summary.loc["HEATMAPS_ONLY", "median_mpjpe_mm"] == 100.0
        assert summary.loc["HEATMAPS_PLUS_SKIPS", "median_mpjpe_mm"] == 70.0
        assert summary.loc["HEATMAPS_PLUS_SKIPS", "error_reduction"] == pytest.approx(0.3)
        assert summary.loc["HEATMAPS_ONLY", "error_reduction"] == 0.0
        assert set(summary["seeds"]) == {3}

    def test_views_baseline_is_best_single_view(self):
        table = pd.DataFrame({"arm": ["single_v0", "single_v1", "multi_view"], "seed": [0, 0, 0],
                              "mpjpe_mm": [80.0, 50.0, 40.0]})
        summary = summarize(table, AblationSuite.VIEW_COUNT).set_index("arm")
        assert set(summary["baseline"]) == {"single_v1"}
        assert summary.loc["multi_view", "error_reduction"] == pytest.approx(0.2)

    def test_summary_reproduces_from_table(self, tmp_path):
        table = pd.DataFrame({"arm": ["SIMPLE_ENCODER", "HALF_HOURGLASS"] * 2, "seed": [0, 0, 1, 1],
                              "mpjpe_mm": [90.0, 60.0, 110.0, 70.0]})
        summary = summarize(table, AblationSuite.ENCODER_VARIANTS).set_index("arm")
        a, b = np.median([90.0, 110.0]), np.median([60.0, 70.0])
        assert summary.loc["HALF_HOURGLASS", "error_reduction"] == pytest.approx((a - b) / a)


class TestReport:
    def test_metrics_table_has_one_row_per_experiment_and_subject(self, rng):
        reports = [_report(rng, "b", [0, 1, 1]), _report(rng, "a", [2, 0])]
        table = metrics_table(reports)
        assert len(table) == 4
        assert list(zip(table["experiment"], table["subject"])) == [("a", 0), ("a", 2), ("b", 0), ("b", 1)]

    def test_emit_report_writes_table_and_charts(self, tmp_path, rng):
        reports = [_report(rng, "inputs/HEATMAPS_ONLY/seed0", [0, 0, 1], {"suite": "inputs", "arm": "HEATMAPS_ONLY"}),
                   _report(rng, "inputs/HEATMAPS_PLUS_SKIPS/seed0", [0, 1, 1],
                           {"suite": "inputs", "arm": "HEATMAPS_PLUS_SKIPS"}, scale=0.5),
                   _report(rng, "default", [0, 1])]
        paths = emit_report(reports, tmp_path)
        assert set(paths) == {"metrics", "chart_inputs", "chart_eval"}
        assert all(p.exists() and p.stat().st_size > 0 for p in paths.values())
        first = paths["metrics"].read_bytes()
        emit_report(reports, tmp_path, error_bar="std")
        assert paths["metrics"].read_bytes() == first
        assert len(pd.read_csv(paths["metrics"])) == 6

    def test_bad_error_bar_and_empty_input(self, tmp_path, rng):
        with pytest.raises(ConfigError):
            emit_report([_report(rng, "x", [0])], tmp_path, error_bar="sem")
        with pytest.raises(DatasetError):
            emit_report([], tmp_path)

    def test_pose_samples(self, tmp_path, rng):
        pred, gt = rng.normal(0, 300, (6, 14, 3)), rng.normal(0, 300, (6, 14, 3))
        picks = pick_samples(pred, gt, count=3)
        errors = np.linalg.norm(pred - gt, axis=-1).mean(axis=1)
        assert picks[0] == np.argmin(errors) and picks[-1] == np.argmax(errors)
        path = plot_pose_samples(pred[picks], gt[picks], tmp_path / "samples.png", titles=["a", "b", "c"])
        assert path.exists()
        with pytest.raises(DatasetError):
            plot_pose_samples(pred[:2], gt[:3], tmp_path / "bad.png")

    def test_collect_reports_without_outputs(self, tmp_path):
        with pytest.raises(DatasetError):
            collect_reports(tmp_path)


def test_inputs_ablation_end_to_end(tmp_path, tiny_dataset, tiny_experiment):
    result = run_ablation(AblationSuite.INPUT_VARIANTS, tiny_experiment, seeds=[0], dataset=tiny_dataset,
                          out_dir=tmp_path)
    assert len(result.table) == 3
    assert set(result.table["test_records"]) == {24}
    assert np.isfinite(result.table["mpjpe_mm"]).all()
    for name in ("ablation", "ablation_summary", "ablation_frames"):
        assert (tmp_path / config.OUTPUT_FILES[name].format(suite="inputs")).exists()

    summary = result.summary.set_index("arm")
    a = summary.loc["HEATMAPS_ONLY", "median_mpjpe_mm"]
    for arm, row in summary.iterrows():
        assert row["error_reduction"] == pytest.approx((a - row["median_mpjpe_mm"]) / a)

    reports = collect_reports(tmp_path)
    assert {r.meta["arm"] for r in reports} == {v.value for v in FusionInputVariant}


@pytest.mark.slow
def test_views_ablation_end_to_end(tmp_path, tiny_dataset, tiny_experiment):
    result = run_ablation(AblationSuite.VIEW_COUNT, tiny_experiment, seeds=[0, 1], dataset=tiny_dataset,
                          out_dir=tmp_path)
    assert list(result.summary["arm"]) == ["single_v0", "single_v1", "multi_view"]
    assert set(result.table.groupby("arm")["seed"].nunique()) == {2}


# 64px, 피험자 3명, 짧은 궤적으로 줄인 ablation 설정. arm 간 순서만 확인하며 절대 오차(mm)는 보지 않음.
ORDERING_SEEDS = [0, 1, 2]
ORDERING_RIG = RigConfig(image_size=64, num_subjects=3, duration_frames=12, focal_px=120.0,
                         limb_width_px=2.0, joint_radius_px=1.5)


@pytest.fixture(scope="module")
def ordering_experiment() -> ExperimentConfig:
    return ExperimentConfig(
        rig=ORDERING_RIG,
        perceptron=PerceptronConfig(image_size=64, heatmap_resolution=16, base_channels=8),
        integrator=IntegratorConfig(num_views=2, width=16),
        stage1=TrainConfig(stage=Stage.STAGE1_2D, learning_rate=1e-3, optimizer="adam", epochs=10, batch_size=8),
        stage2=TrainConfig(stage=Stage.STAGE2_3D, learning_rate=1e-3, optimizer="adam", epochs=30, batch_size=8),
    )


@pytest.fixture(scope="module")
def ordering_dataset(tmp_path_factory):
    return synthesize(ORDERING_RIG, seed=0, out_dir=tmp_path_factory.mktemp("ordering"))


@pytest.mark.slow
def test_skips_beat_image_beat_heatmaps_only(tmp_path, ordering_dataset, ordering_experiment):
    result = run_ablation(AblationSuite.INPUT_VARIANTS, ordering_experiment, seeds=ORDERING_SEEDS,
                          dataset=ordering_dataset, out_dir=tmp_path)
    skips = result.median(FusionInputVariant.HEATMAPS_PLUS_SKIPS.value)
    image = result.median(FusionInputVariant.HEATMAPS_PLUS_IMAGE.value)
    only = result.median(FusionInputVariant.HEATMAPS_ONLY.value)
    assert skips < image < only
    assert result.summary.set_index("arm").loc[FusionInputVariant.HEATMAPS_PLUS_SKIPS.value, "error_reduction"] > 0


@pytest.mark.slow
def test_half_hourglass_beats_simple_encoder(tmp_path, ordering_dataset, ordering_experiment):
    result = run_ablation(AblationSuite.ENCODER_VARIANTS, ordering_experiment, seeds=ORDERING_SEEDS,
                          dataset=ordering_dataset, out_dir=tmp_path)
    assert result.median(IntegratorArch.HALF_HOURGLASS.value) < result.median(IntegratorArch.SIMPLE_ENCODER.value)


@pytest.mark.slow
def test_multi_view_beats_best_single_view_under_occlusion(tmp_path, ordering_experiment):
    rig_cfg = dataclasses.replace(ORDERING_RIG, occlusion=OcclusionConfig(view=1, probability=0.5))
    occluded = synthesize(rig_cfg, seed=0, out_dir=tmp_path / "occluded")
    result = run_ablation(AblationSuite.VIEW_COUNT, ordering_experiment, seeds=ORDERING_SEEDS, dataset=occluded,
                          out_dir=tmp_path / "out")
    summary = result.summary.set_index("arm")
    best_single = summary.loc[[a for a in summary.index if a.startswith("single_")], "median_mpjpe_mm"].min()
    assert summary.loc["multi_view", "median_mpjpe_mm"] < best_single
    assert summary.loc["multi_view", "error_reduction"] > 0
