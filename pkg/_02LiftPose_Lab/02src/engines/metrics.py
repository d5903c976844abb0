"""
@Title: MPJPE Metrics Engine
@Description: 예측 3D 포즈를 mm로 복원하여 MPJPE(Mean Per-Joint Position Error)를 계산하고
              피험자별 평균/분산, 관절별, task별 breakdown을 담은 MetricsReport를 만드는 엔진
@Author: Allen
@Date: 2026-10-18
"""

# 1. Imports
import sys
import logging
import dataclasses
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd

# 상위 디렉토리 참조 설정
CURRENT_DIR = Path(__file__).resolve().parent
SRC_DIR = CURRENT_DIR.parent
if str(SRC_DIR) not in sys.path:
    sys.path.append(str(SRC_DIR))

import config
from errors import DatasetError, ShapeError
from engines.skeleton import JOINT_NAMES, NormParams
from data_loaders import io as local_io

# 2. Constants
MODULE_TAG = "[Metrics]"
SUBJECT_COLUMNS = ["experiment", "subject", "n_frames", "mpjpe_mm", "variance_mm2", "std_mm"]
logger = logging.getLogger(__name__)


# 3. Domain Types
@dataclasses.dataclass
class MetricsReport:
    """
    per_subject:  experiment, subject, n_frames, mpjpe_mm, variance_mm2, std_mm (프레임 오차의 피험자 내 분산/표준편차)
    frame_errors: 프레임별 MPJPE + seq/subject/task 메타
    per_joint:    관절별 평균 오차
    per_task:     vertical_range × end_angle 별 평균 오차
    """
    experiment: str
    per_subject: pd.DataFrame
    frame_errors: pd.DataFrame
    per_joint: pd.DataFrame
    per_task: pd.DataFrame
    overall_mean_mm: float
    std_across_frames_mm: float
    std_across_subjects_mm: float
    meta: Dict = dataclasses.field(default_factory=dict)
    predictions_mm: Optional[np.ndarray] = None     # evaluate_mpjpe만 채움 (F, J, 3)

    @property
    def n_frames(self) -> int:
        return len(self.frame_errors)

    def summary(self) -> str:
        return (f"{self.experiment}: {self.overall_mean_mm:.2f} ± {self.std_across_subjects_mm:.2f} mm "
                f"(subjects), ± {self.std_across_frames_mm:.2f} mm (frames), {self.n_frames} frames")

    def to_row(self) -> Dict:
        return {"experiment": self.experiment, "n_frames": self.n_frames, "mpjpe_mm": self.overall_mean_mm,
                "std_frames_mm": self.std_across_frames_mm, "std_subjects_mm": self.std_across_subjects_mm,
                **self.meta}


# 4. Core Computation
def joint_errors(pred_mm: np.ndarray, gt_mm: np.ndarray) -> np.ndarray:
    """(F, J, 3) 두 배열 -> (F, J) 관절별 Euclidean 거리 (mm)"""
    pred = np.asarray(pred_mm, dtype=np.float64)
    gt = np.asarray(gt_mm, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    if pred.ndim == 2:
        pred, gt = pred[None], gt[None]
    if pred.ndim != 3 or pred.shape[-1] != 3:
        raise ShapeError(f"expected (F, J, 3) poses, got {pred.shape}")
    return np.linalg.norm(pred - gt, axis=-1)


def mpjpe(pred_mm: np.ndarray, gt_mm: np.ndarray) -> float:
    """모든 프레임·관절에 대한 평균 관절 위치 오차 (mm)"""
    return float(joint_errors(pred_mm, gt_mm).mean())


def denormalize_batch(q: np.ndarray, norm: NormParams) -> np.ndarray:
    return np.asarray(q, dtype=np.float64) * norm.span + norm.min_xyz


def build_report(pred_mm: np.ndarray, gt_mm: np.ndarray, frame_meta: pd.DataFrame, experiment: str,
                 meta: Optional[Dict] = None) -> MetricsReport:
    """
    Args:
        frame_meta: 예측과 같은 순서의 프레임 메타 (subject, seq, vertical_range, end_angle, frame 컬럼)
    """
    errors = joint_errors(pred_mm, gt_mm)
    if len(frame_meta) != errors.shape[0]:
        raise ShapeError(f"{len(frame_meta)} metadata rows for {errors.shape[0]} predictions")
    if errors.shape[0] == 0:
        raise DatasetError("cannot report MPJPE on an empty split")

    frames = frame_meta[["seq", "subject", "vertical_range", "end_angle", "frame"]].reset_index(drop=True).copy()
    frames.insert(0, "experiment", experiment)
    frames["mpjpe_mm"] = errors.mean(axis=1)
    per_joint = pd.DataFrame({"experiment": experiment, "joint": list(JOINT_NAMES),
                              "mpjpe_mm": errors.mean(axis=0)})
    report = report_from_frames(frames, per_joint, experiment, meta)
    logger.info(f"✅ {MODULE_TAG} MPJPE {report.summary()}")
    return report


def report_from_frames(frames: pd.DataFrame, per_joint: pd.DataFrame, experiment: str,
                       meta: Optional[Dict] = None) -> MetricsReport:
    """프레임별 MPJPE 테이블 -> 피험자/task 집계. 전체 평균은 프레임 수 가중 피험자 평균과 같습니다."""
    grouped = frames.groupby("subject", sort=True)["mpjpe_mm"]
    per_subject = pd.DataFrame({
        "experiment": experiment,
        "subject": grouped.size().index.astype(int),
        "n_frames": grouped.size().to_numpy(),
        "mpjpe_mm": grouped.mean().to_numpy(),
        "variance_mm2": grouped.var(ddof=0).to_numpy(),
        "std_mm": grouped.std(ddof=0).to_numpy(),
    }, columns=SUBJECT_COLUMNS)

    task_groups = frames.groupby(["vertical_range", "end_angle"], sort=True)["mpjpe_mm"]
    per_task = task_groups.agg(n_frames="size", mpjpe_mm="mean", std_mm=lambda s: s.std(ddof=0)).reset_index()
    per_task.insert(0, "experiment", experiment)

    subject_means = per_subject["mpjpe_mm"].to_numpy()
    return MetricsReport(
        experiment=experiment,
        per_subject=per_subject,
        frame_errors=frames,
        per_joint=per_joint,
        per_task=per_task,
        overall_mean_mm=float(frames["mpjpe_mm"].mean()),
        std_across_frames_mm=float(frames["mpjpe_mm"].std(ddof=0)),
        std_across_subjects_mm=float(np.std(subject_means)) if len(subject_means) > 1 else 0.0,
        meta=dict(meta or {}),
    )


# 5. Main Logic
def evaluate_mpjpe(perceptron, integrator, test_split, norm_params: NormParams, experiment: str = "default",
                   batch_size: int = 8, meta: Optional[Dict] = None) -> MetricsReport:
    """
    test split 전체를 추론 -> mm로 역정규화 -> 피험자별 MPJPE 평균/분산.

    Raises:
        DatasetError: 3D GT가 없는 split
    """
    from engines.trainer import predict_split

    gt = test_split.poses3d()
    if gt.size == 0 or not np.all(np.isfinite(gt)):
        raise DatasetError(f"{test_split.name} split has no usable 3D ground truth")
    logger.info(f"🚀 {MODULE_TAG} 평가 시작: {experiment} ({len(test_split)} frames)")
    pred = denormalize_batch(predict_split(perceptron, integrator, test_split, batch_size), norm_params)
    meta = dict(meta or {})
    meta.setdefault("views", ",".join(str(v) for v in test_split.views))
    report = build_report(pred, gt, test_split.frame, experiment, meta)
    report.predictions_mm = pred
    return report


def save_report_tables(report: MetricsReport, out_dir: Path) -> Dict[str, Path]:
    """평가 결과의 프레임/관절/task 테이블 저장 (피험자 테이블은 ui.report에서 실험별로 합쳐 저장)"""
    out_dir = Path(out_dir)
    paths = {
        "frame_errors": out_dir / config.OUTPUT_FILES["frame_errors"],
        "per_joint": out_dir / config.OUTPUT_FILES["per_joint"],
        "per_task": out_dir / config.OUTPUT_FILES["per_task"],
    }
    local_io.save_csv(report.frame_errors, paths["frame_errors"])
    local_io.save_csv(report.per_joint, paths["per_joint"])
    local_io.save_csv(report.per_task, paths["per_task"])
    return paths


def load_report(out_dir: Path, experiment: Optional[str] = None) -> MetricsReport:
    """저장된 frame_errors 테이블에서 MetricsReport를 재구성 (관절별 오차는 저장된 테이블 사용)"""
    out_dir = Path(out_dir)
    frames = local_io.load_csv(out_dir / config.OUTPUT_FILES["frame_errors"])
    per_joint = local_io.load_csv(out_dir / config.OUTPUT_FILES["per_joint"])
    if experiment is not None:
        frames = frames[frames["experiment"] == experiment]
        per_joint = per_joint[per_joint["experiment"] == experiment]
    if frames.empty:
        raise DatasetError(f"no frame errors for experiment {experiment!r} in {out_dir}")
    name = experiment or str(frames["experiment"].iloc[0])
    return report_from_frames(frames.reset_index(drop=True), per_joint.reset_index(drop=True), name)


def save_predictions(frame_meta: pd.DataFrame, pred_mm: np.ndarray, gt_mm: np.ndarray, path: Path) -> None:
    """프레임별 예측/GT 3D 좌표 (mm) 테이블. report의 pose sample 그림에 사용"""
    table = frame_meta[["seq", "subject", "frame"]].reset_index(drop=True).copy()
    for prefix, poses in (("pred", pred_mm), ("gt", gt_mm)):
        flat = np.asarray(poses, dtype=np.float64).reshape(len(table), -1)
        cols = [f"{prefix}_{name}_{axis}" for name in JOINT_NAMES for axis in "xyz"]
        table = pd.concat([table, pd.DataFrame(flat, columns=cols)], axis=1)
    local_io.save_csv(table, path)


def load_predictions(path: Path) -> Tuple[pd.DataFrame, np.ndarray, np.ndarray]:
    """Returns: (메타, 예측 (F, J, 3), GT (F, J, 3))"""
    table = local_io.load_csv(path)
    poses = []
    for prefix in ("pred", "gt"):
        cols = [f"{prefix}_{name}_{axis}" for name in JOINT_NAMES for axis in "xyz"]
        poses.append(table[cols].to_numpy(dtype=np.float64).reshape(len(table), len(JOINT_NAMES), 3))
    return table[["seq", "subject", "frame"]], poses[0], poses[1]
