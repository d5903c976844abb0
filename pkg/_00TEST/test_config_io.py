import sys
import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
import torch
import yaml
from click.testing import CliRunner

import config
from config import ExperimentConfig, FusionInputVariant, Stage, load_experiment_config, parse_override
from errors import ConfigError, DataIOError
from data_loaders import io as local_io

LAB_DIR = Path(__file__).resolve().parents[1] / "_02LiftPose_Lab"
if str(LAB_DIR) not in sys.path:
    sys.path.append(str(LAB_DIR))

import main  # noqa: E402

TINY_CONFIG = {
    "rig": {"image_size": 32, "num_subjects": 1, "duration_frames": 4, "focal_px": 60.0,
            "limb_width_px": 1.5, "joint_radius_px": 1.0},
    "perceptron": {"image_size": 32, "heatmap_resolution": 16, "base_channels": 4},
    "integrator": {"width": 8},
    "stage1": {"stage": "STAGE1_2D", "epochs": 1, "batch_size": 4},
    "stage2": {"stage": "STAGE2_3D", "epochs": 1, "batch_size": 4},
}


@pytest.fixture
def isolated_logs(tmp_path, monkeypatch):
    monkeypatch.setattr(config, "LOG_DIR", tmp_path / "logs")
    yield tmp_path / "logs"
    logging.basicConfig(handlers=[logging.NullHandler()], force=True)


@pytest.fixture
def tiny_config_file(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(TINY_CONFIG), encoding="utf-8")
    return path


class TestExperimentConfig:
    def test_default_document_loads(self):
        cfg = load_experiment_config()
        assert isinstance(cfg, ExperimentConfig)
        assert cfg.stage2.stage == Stage.STAGE2_3D
        assert cfg.integrator.variant == FusionInputVariant.HEATMAPS_PLUS_SKIPS
        assert cfg.rig.camera_azimuths_deg == (90.0, 135.0)

    def test_overrides_win(self):
        cfg = load_experiment_config(overrides=dict([parse_override("stage2.epochs=3"),
                                                     parse_override("integrator.variant=HEATMAPS_ONLY")]))
        assert cfg.stage2.epochs == 3
        assert cfg.integrator.variant == FusionInputVariant.HEATMAPS_ONLY

    def test_fidelity_profile(self):
        cfg = load_experiment_config(overrides={"runtime.profile": "fidelity"})
        assert cfg.perceptron.base_channels == 256 and cfg.integrator.width == 256
        assert cfg.stage2.epochs == 50

    @pytest.mark.parametrize("overrides", [
        {"stage2.epocs": 3},
        {"integrator.variant": "HEATMAPS_PLUS_DEPTH"},
        {"stage1.epochs": "many"},
        {"runtime.profile": "cluster"},
        {"perceptron.image_size": 128},
    ])
    def test_invalid_documents(self, overrides):
        with pytest.raises(ConfigError):
            load_experiment_config(overrides=overrides)

    def test_override_syntax(self):
        assert parse_override("rig.occlusion.view=1") == ("rig.occlusion.view", 1)
        with pytest.raises(ConfigError):
            parse_override("stage2.epochs")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_experiment_config(tmp_path / "nope.yaml")


class TestLocalIo:
    def test_csv_is_byte_stable(self, tmp_path):
        df = pd.DataFrame({"a": [0.1, 1 / 3], "b": ["x", "y"]})
        local_io.save_csv(df, tmp_path / "deep" / "t.csv")
        local_io.save_csv(df, tmp_path / "again.csv")
        assert (tmp_path / "deep" / "t.csv").read_bytes() == (tmp_path / "again.csv").read_bytes()
        assert local_io.load_csv(tmp_path / "again.csv")["a"].tolist() == pytest.approx([0.1, 1 / 3], rel=1e-15)

    def test_missing_file_names_the_path(self, tmp_path):
        with pytest.raises(DataIOError) as info:
            local_io.load_csv(tmp_path / "absent.csv")
        assert "absent.csv" in str(info.value)
        assert info.value.to_dict()["error"] == "io"

    def test_png_round_trip_is_eight_bit(self, tmp_path, rng):
        img = rng.uniform(0, 1, (5, 7, 3))
        local_io.save_png(img, tmp_path / "x.png")
        back = local_io.load_png(tmp_path / "x.png")
        assert back.shape == (5, 7, 3)
        assert np.max(np.abs(back - img)) <= 0.5 / 255 + 1e-12

    def test_checkpoint_container(self, tmp_path):
        state = {"w": torch.arange(6, dtype=torch.float64).reshape(2, 3), "n": torch.tensor(3)}
        local_io.save_checkpoint(tmp_path / "c.ckpt", {"kind": "unit", "dims": (2, 3)}, state)
        header, back = local_io.load_checkpoint(tmp_path / "c.ckpt")
        assert header["kind"] == "unit" and header["dims"] == [2, 3]
        assert torch.equal(back["w"], state["w"]) and torch.equal(back["n"], state["n"])

    def test_foreign_file_is_not_a_checkpoint(self, tmp_path):
        (tmp_path / "c.ckpt").write_bytes(b"PK\x03\x04 not ours")
        with pytest.raises(ConfigError):
            local_io.load_checkpoint(tmp_path / "c.ckpt")


class TestCli:
    def test_missing_dataset_exits_with_category_code(self, tmp_path, isolated_logs):
        result = CliRunner().invoke(main.cli, ["train-2d", "--dataset", str(tmp_path / "empty")])
        assert result.exit_code == 4
        payload = json.loads(result.stderr.strip().splitlines()[-1])
        assert payload["error"] == "dataset"
        assert "synth" in payload["message"]

    def test_bad_override_exits_with_config_code(self, isolated_logs):
        result = CliRunner().invoke(main.cli, ["synth", "--set", "rig.focal_px=-1"])
        assert result.exit_code == 2
        assert json.loads(result.stderr.strip().splitlines()[-1])["error"] == "config"

    def test_unexpected_exception_is_reported_as_internal(self, tmp_path, isolated_logs, monkeypatch):
        def explode(*args, **kwargs):
            raise RuntimeError("disk vanished")

        monkeypatch.setattr(main, "synthesize", explode)
        result = CliRunner().invoke(main.cli, ["synth", "--out", str(tmp_path / "data")])
        assert result.exit_code == 1
        payload = json.loads(result.stderr.strip().splitlines()[-1])
        assert payload == {"error": "internal", "message": "RuntimeError: disk vanished"}

    def test_full_pipeline(self, tmp_path, tiny_config_file, isolated_logs):
        runner = CliRunner()
        data, ckpt, results = tmp_path / "data", tmp_path / "ckpt", tmp_path / "results"
        common = ["--config", str(tiny_config_file)]

        steps = [
            ["synth", *common, "--out", str(data)],
            ["train-2d", *common, "--dataset", str(data), "--out", str(ckpt)],
            ["train-3d", *common, "--dataset", str(data), "--out", str(ckpt), "--variant", "HEATMAPS_PLUS_IMAGE"],
            ["eval", *common, "--dataset", str(data), "--out", str(results),
             "--perceptron", str(ckpt / config.CHECKPOINT_FILES["perceptron"]),
             "--integrator", str(ckpt / config.CHECKPOINT_FILES["integrator"])],
            ["report", *common, "--out", str(results), "--samples", "2"],
        ]
        for args in steps:
            result = runner.invoke(main.cli, args)
            assert result.exit_code == 0, (args[0], result.output)

        assert (ckpt / config.CHECKPOINT_FILES["stage1_curve"]).exists()
        assert (ckpt / config.CHECKPOINT_FILES["stage2_curve"]).exists()
        metrics = pd.read_csv(results / config.OUTPUT_FILES["metrics"])
        assert list(metrics["subject"]) == [0]
        assert (results / config.OUTPUT_FILES["pose_samples"]).exists()
        assert (results / config.OUTPUT_FILES["chart"].format(suite="eval")).exists()
        assert any(isolated_logs.glob("eval_*.log"))

        again = runner.invoke(main.cli, ["synth", *common, "--out", str(data)])
        assert again.exit_code == 4
