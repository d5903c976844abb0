"""
@Title: Two-stage Trainer
@Description: Stage 1 (perceptron, heatmap loss) / Stage 2 (integrator, normalized 3D loss, perceptron 고정) 학습 루프.
              seed 고정 데이터 순서 + seeded 초기화로 같은 (config, seed, data) -> 같은 loss curve.
@Author: Allen
@Date: 2026-10-18
"""

# 1. Imports
import sys
import time
import logging
import dataclasses
from contextlib import nullcontext
from pathlib import Path
from typing import Callable, Iterable, List, Optional

import numpy as np
import pandas as pd
import torch
from torch import nn

# 상위 디렉토리 참조 설정
CURRENT_DIR = Path(__file__).resolve().parent
SRC_DIR = CURRENT_DIR.parent
if str(SRC_DIR) not in sys.path:
    sys.path.append(str(SRC_DIR))

from config import Stage, TrainConfig
from errors import ConfigError, DatasetError, TrainingDivergedError
from engines.skeleton import Pose2D
from engines.heatmap import heatmap_loss, render_heatmaps
from engines.perceptron import ViewPerceptron, images_to_tensor, perceptron_forward, perceptron_forward_all
from engines.integrator import MultiViewIntegrator, ViewOutput, fuse_views, integrator_forward, pose_loss
from data_loaders.dataset import DatasetSplit

# 2. Constants
MODULE_TAG = "[Trainer]"
CURVE_COLUMNS = ["stage", "epoch", "loss", "steps", "seconds"]
logger = logging.getLogger(__name__)


# 3. Domain Types
@dataclasses.dataclass
class TrainResult:
    model: nn.Module
    curve: pd.DataFrame          # stage, epoch, loss(epoch 평균), steps(누적), seconds
    initial_loss: float          # 첫 step 직전 loss
    final_loss: float            # 마지막 epoch 평균 loss

    @property
    def steps(self) -> int:
        return int(self.curve["steps"].iloc[-1]) if len(self.curve) else 0


# 4. Helper Functions
def configure_runtime(seed: int, num_threads: Optional[int] = None) -> None:
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)
    if num_threads:
        torch.set_num_threads(int(num_threads))


def model_dtype(model: nn.Module) -> torch.dtype:
    return next(model.parameters()).dtype


def make_optimizer(params: Iterable[nn.Parameter], cfg: TrainConfig) -> torch.optim.Optimizer:
    params = list(params)
    if cfg.optimizer == "rmsprop":
        return torch.optim.RMSprop(params, lr=cfg.learning_rate, momentum=cfg.momentum, weight_decay=cfg.weight_decay)
    if cfg.optimizer == "adam":
        return torch.optim.Adam(params, lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    if cfg.optimizer == "sgd":
        return torch.optim.SGD(params, lr=cfg.learning_rate, momentum=cfg.momentum, weight_decay=cfg.weight_decay)
    raise ConfigError(f"unknown optimizer {cfg.optimizer!r}")


def make_scheduler(optimizer: torch.optim.Optimizer, cfg: TrainConfig) -> Optional[torch.optim.lr_scheduler.LRScheduler]:
    """epoch마다 step. cosine은 마지막 epoch에서 lr 0에 도달"""
    if cfg.lr_schedule == "cosine":
        return torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=cfg.epochs)
    return None


def _limit(split: DatasetSplit, cfg: TrainConfig) -> DatasetSplit:
    if len(split) == 0:
        raise DatasetError(f"{split.name} split is empty")
    if cfg.max_frames is not None:
        split = split.head(cfg.max_frames)
    return split


def target_heatmaps(coords: np.ndarray, visible: np.ndarray, image_size: int, resolution: int) -> np.ndarray:
    """(B, V, J, 2) 2D 관절 -> (B·V, J, r, r) GT heatmap. 가려진 관절도 실제 위치에 렌더링"""
    maps = []
    for b in range(coords.shape[0]):
        for n in range(coords.shape[1]):
            stack, _ = render_heatmaps(Pose2D(coords[b, n], visible[b, n]), (image_size, image_size),
                                       (resolution, resolution))
            maps.append(stack)
    return np.stack(maps)


def view_outputs(perceptron: ViewPerceptron, images: np.ndarray, with_grad: bool = False) -> List[ViewOutput]:
    """(B, V, H, W, 3) 이미지 -> 시점별 perceptron 출력 (camera index 오름차순)"""
    dtype = model_dtype(perceptron)
    outputs = []
    with nullcontext() if with_grad else torch.no_grad():
        for n in range(images.shape[1]):
            x = images_to_tensor(images[:, n], dtype)
            heatmaps, skips = perceptron_forward(perceptron, x)
            outputs.append(ViewOutput(heatmaps=heatmaps, skips=skips, image=x))
    return outputs


def _batches(order: np.ndarray, batch_size: int) -> List[np.ndarray]:
    """순서대로 자른 batch 목록. 크기 1인 마지막 batch는 직전 batch에 합침 (BatchNorm 학습 모드)"""
    bounds = list(range(0, len(order), batch_size))
    if len(bounds) > 1 and len(order) - bounds[-1] == 1:
        bounds.pop()
    ends = bounds[1:] + [len(order)]
    return [order[s:e] for s, e in zip(bounds, ends)]


def _run_epochs(stage: Stage, model_name: str, optimizer: torch.optim.Optimizer, cfg: TrainConfig,
                num_records: int, step: Callable[[np.ndarray], torch.Tensor]) -> tuple:
    rng = np.random.default_rng(cfg.seed)
    scheduler = make_scheduler(optimizer, cfg)
    rows_log = []
    initial_loss = None
    steps = 0
    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        order = rng.permutation(num_records)
        losses = []
        for batch_no, rows in enumerate(_batches(order, cfg.batch_size)):
            if cfg.max_steps is not None and steps >= cfg.max_steps:
                break
            optimizer.zero_grad(set_to_none=True)
            loss = step(rows)
            value = float(loss.detach().item())
            if not np.isfinite(value):
                logger.error(f"❌ {MODULE_TAG} {model_name} 발산: epoch {epoch}, batch {batch_no}, loss {value}")
                raise TrainingDivergedError(epoch, batch_no, value)
            loss.backward()
            optimizer.step()
            steps += 1
            if initial_loss is None:
                initial_loss = value
            losses.append(value)
        if not losses:
            break
        if scheduler is not None:
            scheduler.step()
        mean_loss = float(np.mean(losses))
        seconds = time.perf_counter() - started
        rows_log.append({"stage": stage.value, "epoch": epoch, "loss": mean_loss, "steps": steps,
                         "seconds": round(seconds, 3)})
        logger.info(f"ℹ️ {MODULE_TAG} {model_name} epoch {epoch}/{cfg.epochs}: loss {mean_loss:.6f} ({seconds:.1f}s)")

    curve = pd.DataFrame(rows_log, columns=CURVE_COLUMNS)
    final_loss = float(curve["loss"].iloc[-1]) if len(curve) else float("nan")
    return curve, (initial_loss if initial_loss is not None else float("nan")), final_loss


# 5. Main Logic
def train_stage1(perceptron: ViewPerceptron, train_split: DatasetSplit, cfg: TrainConfig) -> TrainResult:
    """
    모든 (frame, view) 이미지에 대해 렌더링된 GT heatmap과의 heatmap_loss를 최소화합니다.
    stack이 여러 개면 stack별 loss 평균 (intermediate supervision).

    Raises:
        ConfigError: stage가 STAGE1_2D가 아닌 경우
        DatasetError: 빈 split
        TrainingDivergedError: NaN/Inf loss (epoch, batch, loss 포함)
    """
    if cfg.stage != Stage.STAGE1_2D:
        raise ConfigError(f"train_stage1 needs a STAGE1_2D config, got {cfg.stage.value}")
    split = _limit(train_split, cfg)
    pcfg = perceptron.cfg
    dtype = model_dtype(perceptron)
    logger.info(f"🚀 {MODULE_TAG} Stage 1 시작: {len(split)} frames × {len(split.views)} views, "
                f"lr {cfg.learning_rate}, {cfg.epochs} epochs")

    perceptron.train()
    optimizer = make_optimizer(perceptron.parameters(), cfg)

    coords2d, visible = split.poses2d(), split.visible()

    def step(rows: np.ndarray) -> torch.Tensor:
        images = split.load_images(rows)
        images = images.reshape((-1,) + images.shape[2:])
        maps = target_heatmaps(coords2d[rows], visible[rows], pcfg.image_size, pcfg.heatmap_resolution)
        target = torch.from_numpy(maps).to(dtype)
        stack_preds, _ = perceptron_forward_all(perceptron, images_to_tensor(images, dtype))
        losses = [heatmap_loss(pred, target, kind=cfg.loss_kind) for pred in stack_preds]
        return torch.stack(losses).mean()

    curve, initial, final = _run_epochs(Stage.STAGE1_2D, "perceptron", optimizer, cfg, len(split), step)
    perceptron.eval()
    logger.info(f"✅ {MODULE_TAG} Stage 1 완료: L2d {initial:.6f} -> {final:.6f}")
    return TrainResult(model=perceptron, curve=curve, initial_loss=initial, final_loss=final)


def train_stage2(integrator: MultiViewIntegrator, perceptron: ViewPerceptron, train_split: DatasetSplit,
                 cfg: TrainConfig) -> TrainResult:
    """
    perceptron을 고정(eval, no_grad)한 채 정규화 3D 타깃에 대한 pose_loss를 최소화합니다.
    cfg.finetune_perceptron이면 perceptron도 함께 학습합니다.

    Raises:
        ConfigError: stage 불일치, 시점 수/perceptron 설정이 integrator와 맞지 않는 경우
        DatasetError: 빈 split
        TrainingDivergedError: NaN/Inf loss
    """
    if cfg.stage != Stage.STAGE2_3D:
        raise ConfigError(f"train_stage2 needs a STAGE2_3D config, got {cfg.stage.value}")
    split = _limit(train_split, cfg)
    check_compatible(integrator, perceptron, split)
    dtype = model_dtype(integrator)
    targets = torch.from_numpy(split.normalized3d()).to(dtype)
    finetune = cfg.finetune_perceptron
    logger.info(f"🚀 {MODULE_TAG} Stage 2 시작: {integrator.cfg.arch.value} + {integrator.cfg.variant.value}, "
                f"{len(split)} frames × {len(split.views)} views, perceptron "
                f"{'fine-tune' if finetune else 'frozen'}")

    integrator.train()
    params = list(integrator.parameters())
    if finetune:
        perceptron.train()
        params += list(perceptron.parameters())
    else:
        perceptron.eval()
        for p in perceptron.parameters():
            p.requires_grad_(False)
    optimizer = make_optimizer(params, cfg)

    def step(rows: np.ndarray) -> torch.Tensor:
        outputs = view_outputs(perceptron, split.load_images(rows), with_grad=finetune)
        fused = fuse_views(outputs, integrator.cfg.variant)
        pred = integrator_forward(integrator, fused)
        return pose_loss(pred, targets[torch.as_tensor(rows)], kind=cfg.loss_kind)

    try:
        curve, initial, final = _run_epochs(Stage.STAGE2_3D, "integrator", optimizer, cfg, len(split), step)
    finally:
        for p in perceptron.parameters():
            p.requires_grad_(True)
        perceptron.eval()
    integrator.eval()
    logger.info(f"✅ {MODULE_TAG} Stage 2 완료: L3d {initial:.6f} -> {final:.6f}")
    return TrainResult(model=integrator, curve=curve, initial_loss=initial, final_loss=final)


def check_compatible(integrator: MultiViewIntegrator, perceptron: ViewPerceptron, split: DatasetSplit) -> None:
    if integrator.cfg.num_views != len(split.views):
        raise ConfigError(f"integrator expects {integrator.cfg.num_views} views, split has {len(split.views)}")
    if integrator.perceptron_cfg.num_joints != perceptron.cfg.num_joints \
            or integrator.perceptron_cfg.heatmap_resolution != perceptron.cfg.heatmap_resolution \
            or integrator.perceptron_cfg.skip_channels != perceptron.cfg.skip_channels:
        raise ConfigError("integrator was built for a different perceptron (joints/resolution/skip channels)")


def predict_split(perceptron: ViewPerceptron, integrator: MultiViewIntegrator, split: DatasetSplit,
                  batch_size: int = 8) -> np.ndarray:
    """split 전체에 대한 정규화 3D 예측 (F, J, 3), inference mode"""
    check_compatible(integrator, perceptron, split)
    perceptron.eval()
    integrator.eval()
    preds = []
    with torch.no_grad():
        for start in range(0, len(split), batch_size):
            rows = np.arange(start, min(start + batch_size, len(split)))
            fused = fuse_views(view_outputs(perceptron, split.load_images(rows)), integrator.cfg.variant)
            preds.append(integrator_forward(integrator, fused).cpu().numpy().astype(np.float64))
    return np.concatenate(preds) if preds else np.zeros((0, perceptron.cfg.num_joints, 3))
