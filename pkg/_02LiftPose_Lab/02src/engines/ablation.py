"""
@Title: Ablation Harness
@Description: 세 가지 비교 실험 (integration 입력 변형 / encoder 구조 / 시점 수)을 같은 seed·데이터·학습 예산으로 실행하고
              arm × seed 결과 테이블, seed 중앙값, error reduction을 계산합니다.
@Author: Allen
@Date: 2026-10-18
"""

# 1. Imports
import sys
import copy
import logging
import dataclasses
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

# 상위 디렉토리 참조 설정
CURRENT_DIR = Path(__file__).resolve().parent
SRC_DIR = CURRENT_DIR.parent
if str(SRC_DIR) not in sys.path:
    sys.path.append(str(SRC_DIR))

import config
from config import ExperimentConfig, FusionInputVariant, IntegratorArch
from errors import ConfigError, LiftPoseError
from engines.perceptron import ViewPerceptron, build_perceptron, load_perceptron
from engines.integrator import build_integrator
from engines.trainer import train_stage1, train_stage2
from engines.metrics import MetricsReport, evaluate_mpjpe
from data_loaders.dataset import DatasetIndex
from data_loaders import io as local_io

# 2. Constants
MODULE_TAG = "[Ablation]"
TABLE_COLUMNS = ["suite", "arm", "seed", "arch", "variant", "views", "train_records", "test_records",
                 "mpjpe_mm", "std_frames_mm", "std_subjects_mm", "final_train_loss"]
logger = logging.getLogger(__name__)


class AblationSuite(str, Enum):
    INPUT_VARIANTS = "inputs"
    ENCODER_VARIANTS = "encoders"
    VIEW_COUNT = "views"


# 3. Domain Types
@dataclasses.dataclass(frozen=True)
class Arm:
    name: str
    arch: IntegratorArch
    variant: FusionInputVariant
    views: Tuple[int, ...]


@dataclasses.dataclass
class AblationResult:
    suite: AblationSuite
    table: pd.DataFrame                      # arm × seed
    summary: pd.DataFrame                    # arm별 seed 중앙값 + error_reduction
    reports: Dict[Tuple[str, int], MetricsReport]

    def median(self, arm: str) -> float:
        return float(self.summary.set_index("arm").loc[arm, "median_mpjpe_mm"])


# 4. Suite Definition
def suite_arms(suite: AblationSuite, num_views: int) -> List[Arm]:
    """
    inputs:   HALF_HOURGLASS × {HEATMAPS_ONLY, HEATMAPS_PLUS_IMAGE, HEATMAPS_PLUS_SKIPS}, 전체 시점
    encoders: {SIMPLE_ENCODER, HALF_HOURGLASS} × HEATMAPS_PLUS_IMAGE (두 encoder가 공통으로 받는 최대 입력)
    views:    HALF_HOURGLASS + HEATMAPS_PLUS_SKIPS, 시점별 single-view + 전체 multi-view
    """
    suite = AblationSuite(suite)
    all_views = tuple(range(num_views))
    hh = IntegratorArch.HALF_HOURGLASS
    if suite == AblationSuite.INPUT_VARIANTS:
        return [Arm(v.value, hh, v, all_views) for v in FusionInputVariant]
    if suite == AblationSuite.ENCODER_VARIANTS:
        return [Arm(a.value, a, FusionInputVariant.HEATMAPS_PLUS_IMAGE, all_views) for a in IntegratorArch]
    if num_views < 2:
        raise ConfigError("the views suite needs a dataset with at least two cameras")
    arms = [Arm(f"single_v{n}", hh, FusionInputVariant.HEATMAPS_PLUS_SKIPS, (n,)) for n in range(num_views)]
    arms.append(Arm("multi_view", hh, FusionInputVariant.HEATMAPS_PLUS_SKIPS, all_views))
    return arms


def summarize(table: pd.DataFrame, suite: AblationSuite) -> pd.DataFrame:
    """
    arm별 seed 중앙값. error_reduction = (a − b) / a, a는 기준 arm의 중앙값
    (inputs: HEATMAPS_ONLY, encoders: SIMPLE_ENCODER, views: 가장 좋은 single-view).
    """
    medians = table.groupby("arm", sort=False)["mpjpe_mm"].median()
    summary = pd.DataFrame({"suite": AblationSuite(suite).value, "arm": medians.index,
                            "seeds": table.groupby("arm", sort=False)["seed"].nunique().to_numpy(),
                            "median_mpjpe_mm": medians.to_numpy()})
    suite = AblationSuite(suite)
    if suite == AblationSuite.INPUT_VARIANTS:
        baseline = FusionInputVariant.HEATMAPS_ONLY.value
    elif suite == AblationSuite.ENCODER_VARIANTS:
        baseline = IntegratorArch.SIMPLE_ENCODER.value
    else:
        singles = summary[summary["arm"].str.startswith("single_")]
        baseline = singles.loc[singles["median_mpjpe_mm"].idxmin(), "arm"] if len(singles) else summary["arm"].iloc[0]
    if baseline not in set(summary["arm"]):
        baseline = summary["arm"].iloc[0]
    a = float(summary.loc[summary["arm"] == baseline, "median_mpjpe_mm"].iloc[0])
    summary["baseline"] = baseline
    summary["error_reduction"] = (a - summary["median_mpjpe_mm"]) / a
    return summary


def _save_partial(rows: List[Dict], suite: AblationSuite, out_dir: Path) -> None:
    path = out_dir / config.OUTPUT_FILES["ablation_partial"].format(suite=suite.value)
    local_io.save_csv(pd.DataFrame(rows, columns=TABLE_COLUMNS), path)


# 5. Main Logic
def run_ablation(suite: AblationSuite, base_config: ExperimentConfig, seeds: Sequence[int], dataset: DatasetIndex,
                 out_dir: Path, init_checkpoint: Optional[Path] = None) -> AblationResult:
    """
    모든 arm이 seed별로 같은 stage-1 perceptron, 같은 train/test split, 같은 학습 예산을 공유합니다.
    arm 하나가 끝날 때마다 ablation_<suite>_partial.csv를 갱신하므로 중단되어도 결과가 남습니다.

    Args:
        init_checkpoint: stage 1 시작점 (pretrain 체크포인트). None이면 seeded 초기화
    """
    suite = AblationSuite(suite)
    if not seeds:
        raise ConfigError("run_ablation needs at least one seed")
    out_dir = Path(out_dir)
    arms = suite_arms(suite, dataset.num_views)
    occluded = (dataset.meta.get("occlusion") or {}).get("view")
    if suite == AblationSuite.VIEW_COUNT and occluded is None:
        logger.warning(f"⚠️ {MODULE_TAG} views suite on a dataset without occluders")
    logger.info(f"🚀 {MODULE_TAG} {suite.value} 시작: {len(arms)} arms × {len(seeds)} seeds")

    dtype = base_config.runtime.dtype
    train_all = dataset.split("train")
    rows: List[Dict] = []
    reports: Dict[Tuple[str, int], MetricsReport] = {}

    try:
        for seed in seeds:
            perceptron = _stage1_for_seed(base_config, seed, train_all, dtype, init_checkpoint)
            for arm in arms:
                rows.append(_run_arm(suite, arm, seed, base_config, perceptron, dataset, dtype, reports))
                _save_partial(rows, suite, out_dir)
    except LiftPoseError:
        logger.error(f"❌ {MODULE_TAG} {suite.value} 중단: {len(rows)} arm 결과가 partial 파일에 남아 있습니다")
        raise

    table = pd.DataFrame(rows, columns=TABLE_COLUMNS)
    summary = summarize(table, suite)
    local_io.save_csv(table, out_dir / config.OUTPUT_FILES["ablation"].format(suite=suite.value))
    local_io.save_csv(summary, out_dir / config.OUTPUT_FILES["ablation_summary"].format(suite=suite.value))
    frames = pd.concat([r.frame_errors for r in reports.values()], ignore_index=True)
    local_io.save_csv(frames, out_dir / config.OUTPUT_FILES["ablation_frames"].format(suite=suite.value))
    for _, row in summary.iterrows():
        logger.info(f"ℹ️ {MODULE_TAG} {row['arm']}: median {row['median_mpjpe_mm']:.2f} mm "
                    f"(error reduction vs {row['baseline']}: {row['error_reduction'] * 100:.1f}%)")
    logger.info(f"✅ {MODULE_TAG} {suite.value} 완료")
    return AblationResult(suite=suite, table=table, summary=summary, reports=reports)


def experiment_name(suite: AblationSuite, arm: str, seed: int) -> str:
    return f"{AblationSuite(suite).value}/{arm}/seed{seed}"


def _stage1_for_seed(cfg: ExperimentConfig, seed: int, train_split, dtype: str,
                     init_checkpoint: Optional[Path]) -> ViewPerceptron:
    if init_checkpoint is not None:
        perceptron = load_perceptron(init_checkpoint, dtype)
    else:
        perceptron = build_perceptron(dataclasses.replace(cfg.perceptron, seed=seed), dtype)
    train_stage1(perceptron, train_split, dataclasses.replace(cfg.stage1, seed=seed))
    return perceptron


def _run_arm(suite: AblationSuite, arm: Arm, seed: int, cfg: ExperimentConfig, perceptron: ViewPerceptron,
             dataset: DatasetIndex, dtype: str, reports: Dict) -> Dict:
    train_split = dataset.split("train", views=arm.views)
    test_split = dataset.split("test", views=arm.views)
    icfg = dataclasses.replace(cfg.integrator, num_views=len(arm.views), seed=seed)
    integrator = build_integrator(arm.arch, arm.variant, icfg, perceptron.cfg, dtype)
    # fine-tune 모드에서도 seed 내 arm들이 같은 stage-1 출발점을 쓰도록 복사본 사용
    arm_perceptron = copy.deepcopy(perceptron) if cfg.stage2.finetune_perceptron else perceptron
    result = train_stage2(integrator, arm_perceptron, train_split, dataclasses.replace(cfg.stage2, seed=seed))

    name = experiment_name(suite, arm.name, seed)
    report = evaluate_mpjpe(arm_perceptron, integrator, test_split, dataset.norm_params, experiment=name,
                            batch_size=cfg.stage2.batch_size,
                            meta={"suite": suite.value, "arm": arm.name, "seed": seed})
    reports[(arm.name, seed)] = report
    return {
        "suite": suite.value, "arm": arm.name, "seed": seed, "arch": arm.arch.value, "variant": arm.variant.value,
        "views": ",".join(str(v) for v in arm.views), "train_records": len(train_split),
        "test_records": len(test_split), "mpjpe_mm": report.overall_mean_mm,
        "std_frames_mm": report.std_across_frames_mm, "std_subjects_mm": report.std_across_subjects_mm,
        "final_train_loss": result.final_loss,
    }
