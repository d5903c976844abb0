"""
@Title: Heatmap Codec
@Description: 2D 관절 -> Gaussian heatmap 렌더링, heatmap -> 좌표 디코딩, 그리고 2D heatmap loss(L2d) 계산
@Author: Allen
@Date: 2026-10-18
"""

# 1. Imports
import sys
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import torch

# 상위 디렉토리 참조 설정
CURRENT_DIR = Path(__file__).resolve().parent
SRC_DIR = CURRENT_DIR.parent
if str(SRC_DIR) not in sys.path:
    sys.path.append(str(SRC_DIR))

from errors import ConfigError, ShapeError
from engines.skeleton import Pose2D

# 2. Constants
MODULE_TAG = "[Heatmap]"
SIGMA = 1.0                       # 분산 1 (heatmap pixel 단위)
OUT_OF_FRAME_MARGIN = 3.0 * SIGMA

ArrayLike = Union[np.ndarray, torch.Tensor]


# 3. Main Logic
def render_heatmap(joint: Tuple[float, float], size: Tuple[int, int]) -> Tuple[np.ndarray, bool]:
    """
    관절 하나에 대한 단일 heatmap (peak amplitude 1, 분산 1).
    배열은 (H_h, W_h) row-major이며 values[y, x] = exp(−((x−jx)² + (y−jy)²) / 2).

    Args:
        joint: heatmap 해상도 기준 (x, y) 픽셀 좌표
        size: (W_h, H_h)

    Returns:
        (heatmap, out_of_frame): 맵 밖으로 3σ 이상 벗어나면 0 맵과 True
    """
    width, height = int(size[0]), int(size[1])
    if width < 2 or height < 2:
        raise ShapeError(f"heatmap size must be at least 2x2, got {width}x{height}")

    jx, jy = float(joint[0]), float(joint[1])
    if (jx < -OUT_OF_FRAME_MARGIN or jx > width - 1 + OUT_OF_FRAME_MARGIN
            or jy < -OUT_OF_FRAME_MARGIN or jy > height - 1 + OUT_OF_FRAME_MARGIN):
        return np.zeros((height, width), dtype=np.float64), True

    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)
    gx = np.exp(-((xs - jx) ** 2) / (2.0 * SIGMA ** 2))
    gy = np.exp(-((ys - jy) ** 2) / (2.0 * SIGMA ** 2))
    return np.outer(gy, gx), False


def render_heatmaps(pose: Pose2D, image_size: Tuple[int, int],
                    heatmap_size: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray]:
    """
    J개 관절의 heatmap stack (J, H_h, W_h). 입력 이미지 좌표는 W_h/W 비율로 스케일됩니다.
    가려진(occluded) 관절도 실제 위치에 렌더링합니다.
    """
    scale = np.array([heatmap_size[0] / image_size[0], heatmap_size[1] / image_size[1]])
    scaled = pose.coords * scale
    maps = []
    flags = []
    for joint in scaled:
        hm, out_of_frame = render_heatmap((joint[0], joint[1]), heatmap_size)
        maps.append(hm)
        flags.append(out_of_frame)
    return np.stack(maps), np.array(flags, dtype=bool)


def decode_heatmap(h: np.ndarray) -> Optional[Tuple[int, int]]:
    """
    argmax 위치 (x, y). 동률이면 row-major 순서상 가장 앞선 위치 (np.argmax 규칙).

    Returns:
        (x, y) 또는 None (모두 0인 맵 = no detection)
    """
    h = np.asarray(h)
    if h.ndim != 2 or h.size == 0:
        raise ShapeError(f"decode_heatmap expects a non-empty 2D map, got shape {h.shape}")
    if not np.any(h):
        return None
    flat = int(np.argmax(h))
    y, x = divmod(flat, h.shape[1])
    return x, y


def decode_heatmaps(stack: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(J, H, W) -> (J, 2) 좌표 + detection 여부. 검출 실패 관절은 (-1, -1)"""
    stack = np.asarray(stack)
    if stack.ndim != 3:
        raise ShapeError(f"decode_heatmaps expects (J, H, W), got {stack.shape}")
    coords = np.full((stack.shape[0], 2), -1.0)
    detected = np.zeros(stack.shape[0], dtype=bool)
    for j, hm in enumerate(stack):
        peak = decode_heatmap(hm)
        if peak is not None:
            coords[j] = peak
            detected[j] = True
    return coords, detected


def pck_2d(pred: np.ndarray, gt: np.ndarray, visible: np.ndarray, threshold_px: float) -> float:
    """2D 진단 지표: visible 관절 중 threshold 이내로 디코딩된 비율"""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    mask = np.asarray(visible, dtype=bool)
    if pred.shape != gt.shape:
        raise ShapeError(f"pck_2d shape mismatch: {pred.shape} vs {gt.shape}")
    if not mask.any():
        return float("nan")
    dist = np.linalg.norm(pred - gt, axis=-1)
    return float(np.mean(dist[mask] <= threshold_px))


def heatmap_loss(pred: ArrayLike, gt: ArrayLike, kind: str = "euclidean") -> ArrayLike:
    """
    L2d = (1/J) Σ_j ‖h_j − ĥ_j‖ (관절별 차이 맵의 Frobenius norm 평균).
    배치 차원이 있으면 배치 평균까지 취합니다. kind='squared'는 norm 제곱 버전.

    Args:
        pred, gt: (..., J, H, W) 텐서 또는 배열 (동일 shape)

    Returns:
        torch 입력이면 scalar tensor (autograd 유지), numpy 입력이면 float
    """
    as_numpy = isinstance(pred, np.ndarray) and isinstance(gt, np.ndarray)
    pred_t = torch.as_tensor(pred)
    gt_t = torch.as_tensor(gt, dtype=pred_t.dtype, device=pred_t.device)
    if pred_t.shape != gt_t.shape:
        raise ShapeError(f"heatmap_loss shape mismatch: {tuple(pred_t.shape)} vs {tuple(gt_t.shape)}")
    if pred_t.ndim < 3:
        raise ShapeError(f"heatmap_loss expects (..., J, H, W), got {tuple(pred_t.shape)}")

    diff = (pred_t - gt_t).flatten(start_dim=-2)
    if kind == "euclidean":
        per_joint = torch.linalg.vector_norm(diff, dim=-1)
    elif kind == "squared":
        per_joint = diff.pow(2).sum(dim=-1)
    else:
        raise ConfigError(f"unknown heatmap loss kind {kind!r}")

    loss = per_joint.mean()
    return float(loss.item()) if as_numpy else loss
