"""
@Title: Shared Test Fixtures
@Description: 작은 설정(32px 이미지, 16px heatmap, base_channels 4)과 tmp_path 기반 합성 데이터셋 fixture
@Author: Allen
@Date: 2026-10-18
"""

import sys
from pathlib import Path

import numpy as np
import pytest

SRC_DIR = Path(__file__).resolve().parents[1] / "_02LiftPose_Lab" / "02src"
if str(SRC_DIR) not in sys.path:
    sys.path.append(str(SRC_DIR))

from config import (ExperimentConfig, IntegratorConfig, PerceptronConfig, RigConfig, Stage,  # noqa: E402
                    TrainConfig)
from engines import rig  # noqa: E402
from engines.skeleton import Pose3D  # noqa: E402
from data_loaders.dataset import build_dataset  # noqa: E402

TINY_IMAGE = 32
TINY_RES = 16


@pytest.fixture
def tiny_rig_cfg() -> RigConfig:
    return RigConfig(image_size=TINY_IMAGE, num_subjects=2, duration_frames=6, focal_px=60.0,
                     limb_width_px=1.5, joint_radius_px=1.0)


@pytest.fixture
def tiny_perceptron_cfg() -> PerceptronConfig:
    return PerceptronConfig(image_size=TINY_IMAGE, heatmap_resolution=TINY_RES, base_channels=4, seed=0)


@pytest.fixture
def tiny_integrator_cfg() -> IntegratorConfig:
    return IntegratorConfig(num_views=2, width=8, seed=0)


@pytest.fixture
def tiny_experiment(tiny_rig_cfg, tiny_perceptron_cfg, tiny_integrator_cfg) -> ExperimentConfig:
    return ExperimentConfig(
        rig=tiny_rig_cfg,
        perceptron=tiny_perceptron_cfg,
        integrator=tiny_integrator_cfg,
        stage1=TrainConfig(stage=Stage.STAGE1_2D, learning_rate=0.00025, epochs=1, batch_size=4),
        stage2=TrainConfig(stage=Stage.STAGE2_3D, learning_rate=0.0005, epochs=1, batch_size=4),
    )


def tiny_tasks(subject_ids=(0, 1)):
    """subject마다 FK/FS × 0°/60° × 2 repetition = 8 sequence"""
    return [rig.LiftTask(vr, angle, rep, sid, duration_frames=6)
            for sid in subject_ids
            for vr in (rig.VerticalRange.FK, rig.VerticalRange.FS)
            for angle in (0, 60)
            for rep in rig.REPETITIONS]


def build_tiny_dataset(out_dir: Path, rig_cfg: RigConfig, seed: int = 0):
    subjects = [rig.make_subject(sid, seed) for sid in (0, 1)]
    return build_dataset(subjects, tiny_tasks(), rig.default_cameras(rig_cfg), seed, out_dir, rig_cfg)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """48 records (train 24 / test 24), 2 views, 32px"""
    rig_cfg = RigConfig(image_size=TINY_IMAGE, num_subjects=2, duration_frames=6, focal_px=60.0,
                        limb_width_px=1.5, joint_radius_px=1.0)
    return build_tiny_dataset(tmp_path_factory.mktemp("tiny_dataset"), rig_cfg)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def random_pose(rng: np.random.Generator, scale: float = 1000.0) -> Pose3D:
    return Pose3D(rng.normal(0.0, scale, size=(14, 3)))
