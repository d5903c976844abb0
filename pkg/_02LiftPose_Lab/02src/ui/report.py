"""
@Title: Report Emitter
@Description: MetricsReport 묶음 -> 피험자×실험 메트릭 테이블(CSV), suite별 피험자 MPJPE 막대그래프(분산 error bar),
              예측 vs GT 3D stick-figure 샘플 그림
@Author: Allen
@Date: 2026-10-18
"""

# 1. Imports
import sys
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# 상위 디렉토리 참조 설정
CURRENT_DIR = Path(__file__).resolve().parent
SRC_DIR = CURRENT_DIR.parent
if str(SRC_DIR) not in sys.path:
    sys.path.append(str(SRC_DIR))

import config
from errors import ConfigError, DataIOError, DatasetError
from engines.skeleton import BONES
from engines.metrics import SUBJECT_COLUMNS, MetricsReport, load_report, report_from_frames
from data_loaders import io as local_io

# 2. Constants
MODULE_TAG = "[Report]"
EVAL_SUITE = "eval"
ERROR_BARS = ("variance", "std")
PNG_METADATA = {"Software": None}
logger = logging.getLogger(__name__)


# 3. Helper Functions
def _suite_of(report: MetricsReport) -> str:
    return str(report.meta.get("suite", EVAL_SUITE))


def _arm_of(report: MetricsReport) -> str:
    return str(report.meta.get("arm", report.experiment))


def metrics_table(reports: Sequence[MetricsReport]) -> pd.DataFrame:
    """실험 × 피험자 행 (experiment, subject 순 정렬)"""
    table = pd.concat([r.per_subject for r in reports], ignore_index=True)
    return table.sort_values(["experiment", "subject"], kind="mergesort").reset_index(drop=True)[SUBJECT_COLUMNS]


def _save_figure(fig, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        fig.savefig(path, dpi=120, metadata=PNG_METADATA)
    except OSError as e:
        raise DataIOError(f"{MODULE_TAG} 그림 저장 실패: {e}", str(path))
    finally:
        plt.close(fig)
    logger.info(f"💾 {MODULE_TAG} 저장 완료: {path.name}")


# 4. Charts
def plot_suite_chart(reports: Sequence[MetricsReport], suite: str, out_path: Path, error_bar: str = "variance") -> Path:
    """
    피험자별 평균 MPJPE 막대 (arm마다 한 묶음). seed가 여러 개면 seed 평균,
    error bar는 피험자 내 프레임 오차의 분산(mm²) 또는 표준편차(mm).
    """
    if error_bar not in ERROR_BARS:
        raise ConfigError(f"error_bar must be one of {ERROR_BARS}, got {error_bar!r}")
    rows = []
    for r in reports:
        per_subject = r.per_subject.assign(arm=_arm_of(r))
        rows.append(per_subject)
    table = pd.concat(rows, ignore_index=True)
    agg = table.groupby(["arm", "subject"], sort=False).agg(
        mpjpe_mm=("mpjpe_mm", "mean"), variance_mm2=("variance_mm2", "mean"), std_mm=("std_mm", "mean")
    ).reset_index()

    arms = list(dict.fromkeys(agg["arm"]))
    subjects = sorted(agg["subject"].unique())
    x = np.arange(len(subjects))
    width = 0.8 / max(len(arms), 1)
    err_col = "variance_mm2" if error_bar == "variance" else "std_mm"

    fig, ax = plt.subplots(figsize=(max(6.0, 1.2 * len(subjects) * len(arms) / 2 + 3), 4.5))
    for k, arm in enumerate(arms):
        sub = agg[agg["arm"] == arm].set_index("subject").reindex(subjects)
        ax.bar(x + (k - (len(arms) - 1) / 2) * width, sub["mpjpe_mm"], width, yerr=sub[err_col], capsize=3,
               label=arm)
    ax.set_xticks(x)
    ax.set_xticklabels([f"S{int(s)}" for s in subjects])
    ax.set_xlabel("subject")
    ax.set_ylabel("MPJPE (mm)")
    ax.set_title(f"{suite}: average 3D error per subject (bars: {error_bar})")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save_figure(fig, Path(out_path))
    return Path(out_path)


def plot_pose_samples(predictions: np.ndarray, ground_truth: np.ndarray, out_path: Path,
                      titles: Optional[Sequence[str]] = None) -> Path:
    """예측(빨강) vs GT(파랑) 3D stick figure 패널 (K개 샘플)"""
    pred = np.asarray(predictions, dtype=np.float64)
    gt = np.asarray(ground_truth, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 3 or pred.shape[0] == 0:
        raise DatasetError(f"pose samples need matching non-empty (K, J, 3) arrays, got {pred.shape} / {gt.shape}")

    k = pred.shape[0]
    fig = plt.figure(figsize=(3.2 * k, 3.6))
    for i in range(k):
        ax = fig.add_subplot(1, k, i + 1, projection="3d")
        for poses, colour in ((gt[i], "tab:blue"), (pred[i], "tab:red")):
            for parent, child in BONES:
                seg = poses[[parent, child]]
                ax.plot(seg[:, 0], seg[:, 1], seg[:, 2], color=colour, linewidth=1.5)
        both = np.concatenate([gt[i], pred[i]])
        centre = both.mean(axis=0)
        radius = max(float(np.abs(both - centre).max()), 1.0)
        ax.set_xlim(centre[0] - radius, centre[0] + radius)
        ax.set_ylim(centre[1] - radius, centre[1] + radius)
        ax.set_zlim(centre[2] - radius, centre[2] + radius)
        ax.set_xticks([])
        ax.set_yticks([])
        ax.set_zticks([])
        if titles is not None:
            ax.set_title(titles[i], fontsize=8)
    fig.tight_layout()
    _save_figure(fig, Path(out_path))
    return Path(out_path)


# 5. Main Logic
def emit_report(reports: Sequence[MetricsReport], out_dir: Path, error_bar: str = "variance") -> Dict[str, Path]:
    """
    Returns:
        {'metrics': 테이블 경로, 'chart_<suite>': 그림 경로, ...}
    """
    if not reports:
        raise DatasetError("emit_report needs at least one MetricsReport")
    out_dir = Path(out_dir)
    logger.info(f"🚀 {MODULE_TAG} 리포트 생성: {len(reports)} reports")

    paths = {"metrics": out_dir / config.OUTPUT_FILES["metrics"]}
    local_io.save_csv(metrics_table(reports), paths["metrics"])

    suites: Dict[str, List[MetricsReport]] = {}
    for r in reports:
        suites.setdefault(_suite_of(r), []).append(r)
    for suite in sorted(suites):
        path = out_dir / config.OUTPUT_FILES["chart"].format(suite=suite.replace("/", "_"))
        paths[f"chart_{suite}"] = plot_suite_chart(suites[suite], suite, path, error_bar)

    logger.info(f"✅ {MODULE_TAG} 리포트 완료: {len(paths)} files")
    return paths


def collect_reports(out_dir: Path, suites: Sequence[str] = ("inputs", "encoders", "views")) -> List[MetricsReport]:
    """eval/ablate가 남긴 프레임 오차 테이블에서 MetricsReport 목록을 재구성"""
    out_dir = Path(out_dir)
    reports: List[MetricsReport] = []
    if (out_dir / config.OUTPUT_FILES["frame_errors"]).exists():
        reports.append(load_report(out_dir))
    for suite in suites:
        path = out_dir / config.OUTPUT_FILES["ablation_frames"].format(suite=suite)
        if not path.exists():
            continue
        frames = local_io.load_csv(path)
        for experiment, group in frames.groupby("experiment", sort=True):
            _, arm, seed = str(experiment).split("/")
            reports.append(report_from_frames(group.reset_index(drop=True), pd.DataFrame(), str(experiment),
                                              {"suite": suite, "arm": arm, "seed": int(seed.replace("seed", ""))}))
    if not reports:
        raise DatasetError(f"no evaluation or ablation outputs found in {out_dir}")
    logger.info(f"📂 {MODULE_TAG} {len(reports)} reports 로드 ({out_dir})")
    return reports


def pick_samples(pred: np.ndarray, gt: np.ndarray, count: int = 4) -> np.ndarray:
    """오차 분위수(최소/중앙/최대 포함)에 고르게 걸친 프레임 인덱스"""
    errors = np.linalg.norm(pred - gt, axis=-1).mean(axis=1)
    order = np.argsort(errors, kind="stable")
    picks = np.linspace(0, len(order) - 1, num=min(count, len(order))).round().astype(int)
    return order[picks]
