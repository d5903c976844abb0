"""
@Title: View-specific Perceptron
@Description: 시점별 hourglass 네트워크 f. RGB 이미지 -> J개 관절 heatmap + 4단계 hierarchical skip feature(SkipPyramid)
@Author: Allen
@Date: 2026-10-18
"""

# 1. Imports
import sys
import dataclasses
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

# 상위 디렉토리 참조 설정
CURRENT_DIR = Path(__file__).resolve().parent
SRC_DIR = CURRENT_DIR.parent
if str(SRC_DIR) not in sys.path:
    sys.path.append(str(SRC_DIR))

import config
from config import PerceptronConfig
from errors import ConfigError, ShapeError
from engines.layers import ConvBnRelu, DTYPES, Residual, count_parameters, seeded
from data_loaders import io as local_io

# 2. Constants
MODULE_TAG = "[Perceptron]"
CHECKPOINT_KIND = "perceptron"


# 3. Domain Types
@dataclasses.dataclass
class SkipPyramid:
    """t_1..t_4: pooling 직전 feature map (해상도 r, r/2, r/4, r/8)"""
    levels: List[torch.Tensor]

    def __post_init__(self):
        if len(self.levels) != config.NUM_SKIP_LEVELS:
            raise ShapeError(f"SkipPyramid needs {config.NUM_SKIP_LEVELS} levels, got {len(self.levels)}")
        for s in range(1, len(self.levels)):
            prev, cur = self.levels[s - 1].shape[-1], self.levels[s].shape[-1]
            if cur * 2 != prev:
                raise ShapeError(f"skip level {s} side {cur} is not half of level {s - 1} side {prev}")

    @property
    def resolutions(self) -> List[int]:
        return [int(t.shape[-1]) for t in self.levels]

    @property
    def channels(self) -> List[int]:
        return [int(t.shape[-3]) for t in self.levels]

    def detach(self) -> "SkipPyramid":
        return SkipPyramid([t.detach() for t in self.levels])


# 4. Network
class Hourglass(nn.Module):
    """
    단일 hourglass (depth 4). encoder 쪽 각 pooling 직전 feature를 skip으로 내보내고
    decoder에서는 nearest upsampling 후 같은 해상도의 skip branch와 합칩니다.
    """

    def __init__(self, channels: int, depth: int = config.NUM_SKIP_LEVELS):
        super().__init__()
        self.depth = depth
        self.down = nn.ModuleList([Residual(channels, channels) for _ in range(depth)])
        self.skip_branch = nn.ModuleList([Residual(channels, channels) for _ in range(depth)])
        self.up = nn.ModuleList([Residual(channels, channels) for _ in range(depth)])
        self.bottom = Residual(channels, channels)
        self.pool = nn.MaxPool2d(2, 2)

    def forward(self, x: torch.Tensor) -> Tuple[torch.Tensor, List[torch.Tensor]]:
        skips = []
        for s in range(self.depth):
            x = self.down[s](x)
            skips.append(x)
            x = self.pool(x)
        x = self.bottom(x)
        for s in reversed(range(self.depth)):
            x = self.up[s](x)
            x = F.interpolate(x, scale_factor=2, mode="nearest")
            x = x + self.skip_branch[s](skips[s])
        return x, skips


class ViewPerceptron(nn.Module):
    def __init__(self, cfg: PerceptronConfig):
        super().__init__()
        self.cfg = cfg
        c = cfg.base_channels
        ratio = cfg.image_size // cfg.heatmap_resolution

        # 입력 해상도 -> heatmap 해상도 (7x7 stride-2 conv + residual/pool)
        stem: List[nn.Module] = [ConvBnRelu(3, c, 7, stride=2 if ratio >= 2 else 1), Residual(c, c)]
        remaining = ratio // 2 if ratio >= 2 else 1
        while remaining > 1:
            stem += [nn.MaxPool2d(2, 2), Residual(c, c)]
            remaining //= 2
        self.stem = nn.Sequential(*stem)

        self.hourglasses = nn.ModuleList([Hourglass(c) for _ in range(cfg.num_stacks)])
        self.features = nn.ModuleList([
            nn.Sequential(Residual(c, c), ConvBnRelu(c, c, 1)) for _ in range(cfg.num_stacks)])
        self.outs = nn.ModuleList([nn.Conv2d(c, cfg.num_joints, 1) for _ in range(cfg.num_stacks)])
        self.merge_features = nn.ModuleList([nn.Conv2d(c, c, 1) for _ in range(cfg.num_stacks - 1)])
        self.merge_preds = nn.ModuleList([nn.Conv2d(cfg.num_joints, c, 1) for _ in range(cfg.num_stacks - 1)])

    def forward(self, x: torch.Tensor) -> Tuple[List[torch.Tensor], List[torch.Tensor]]:
        x = self.stem(x)
        stack_preds = []
        skips: List[torch.Tensor] = []
        for i in range(self.cfg.num_stacks):
            hg, skips = self.hourglasses[i](x)
            feature = self.features[i](hg)
            preds = self.outs[i](feature)
            stack_preds.append(preds)
            if i < self.cfg.num_stacks - 1:
                x = x + self.merge_preds[i](preds) + self.merge_features[i](feature)
        return stack_preds, skips


# 5. Main Logic
def build_perceptron(cfg: PerceptronConfig, dtype: Union[str, torch.dtype] = "float64") -> ViewPerceptron:
    """
    seed 고정 초기화로 perceptron을 생성합니다 (같은 seed -> bit-identical 파라미터).

    Raises:
        ConfigError: shape 산술이 맞지 않는 설정
    """
    if cfg.heatmap_resolution // (2 ** config.NUM_SKIP_LEVELS) < 1:
        raise ConfigError(f"heatmap_resolution {cfg.heatmap_resolution} too small for a depth-4 hourglass")
    torch_dtype = DTYPES[dtype] if isinstance(dtype, str) else dtype
    with seeded(cfg.seed):
        model = ViewPerceptron(cfg)
    return model.to(torch_dtype)


def _check_input(model: ViewPerceptron, x: torch.Tensor) -> None:
    size = model.cfg.image_size
    if x.ndim != 4 or tuple(x.shape[1:]) != (3, size, size):
        raise ShapeError(f"perceptron expects (B, 3, {size}, {size}), got {tuple(x.shape)}")


def perceptron_forward_all(model: ViewPerceptron, x: torch.Tensor) -> Tuple[List[torch.Tensor], SkipPyramid]:
    """모든 stack의 heatmap (intermediate supervision용) + 마지막 stack의 SkipPyramid"""
    _check_input(model, x)
    stack_preds, skips = model(x)
    return stack_preds, SkipPyramid(skips)


def perceptron_forward(model: ViewPerceptron, x: torch.Tensor) -> Tuple[torch.Tensor, SkipPyramid]:
    """
    ((h_1..h_J), (t_1..t_S)) = f(x).

    Args:
        x: (B, 3, H, W) 이미지 텐서 (값 범위 [0, 1])

    Returns:
        heatmaps (B, J, r, r), SkipPyramid (r, r/2, r/4, r/8)
    """
    stack_preds, pyramid = perceptron_forward_all(model, x)
    return stack_preds[-1], pyramid


def images_to_tensor(images: np.ndarray, dtype: torch.dtype = torch.float64) -> torch.Tensor:
    """(B, H, W, 3) 또는 (H, W, 3) numpy 이미지 -> (B, 3, H, W) 텐서"""
    arr = np.asarray(images)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[-1] != 3:
        raise ShapeError(f"images must be (B, H, W, 3), got {arr.shape}")
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(0, 3, 1, 2))).to(dtype)


def parameter_count(cfg: PerceptronConfig) -> int:
    return count_parameters(build_perceptron(cfg))


def save_perceptron(model: ViewPerceptron, path: Path, extra: Optional[dict] = None) -> None:
    header = {
        "kind": CHECKPOINT_KIND,
        "config": dataclasses.asdict(model.cfg),
        "seed": model.cfg.seed,
        "extra": extra or {},
    }
    local_io.save_checkpoint(path, header, model.state_dict())


def load_perceptron(path: Path, dtype: Union[str, torch.dtype] = "float64") -> ViewPerceptron:
    """
    Raises:
        ConfigError: perceptron 체크포인트가 아니거나 설정이 유효하지 않은 경우
    """
    header, state = local_io.load_checkpoint(path)
    if header.get("kind") != CHECKPOINT_KIND:
        raise ConfigError(f"{path} holds a {header.get('kind')!r} checkpoint, expected {CHECKPOINT_KIND!r}")
    cfg = PerceptronConfig(**header["config"])
    model = build_perceptron(cfg, dtype)
    model.load_state_dict({k: v.to(model.stem[0].conv.weight.dtype) if v.is_floating_point() else v
                           for k, v in state.items()})
    # BatchNorm은 저장 시점의 running stats로 추론
    model.eval()
    return model
