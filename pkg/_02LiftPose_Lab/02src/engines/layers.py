"""
@Title: Shared Network Layers
@Description: 두 네트워크가 공유하는 빌딩 블록 (bottleneck residual module, conv-bn-relu, seeded 초기화)
@Author: Allen
@Date: 2026-10-18
"""

# 1. Imports
from contextlib import contextmanager
from typing import Iterator

import torch
from torch import nn

# 2. Constants
DTYPES = {"float64": torch.float64, "float32": torch.float32}


# 3. Building Blocks
class ConvBnRelu(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 1, stride: int = 1):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, kernel_size, stride=stride, padding=(kernel_size - 1) // 2)
        self.bn = nn.BatchNorm2d(out_channels)
        self.relu = nn.ReLU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.relu(self.bn(self.conv(x)))


class Residual(nn.Module):
    """
    Hourglass 계열의 residual module: identity(또는 1x1 projection) shortcut +
    BN-ReLU-Conv1x1 -> BN-ReLU-Conv3x3 -> BN-ReLU-Conv1x1 bottleneck 경로 (bottleneck = out/2).
    force_projection이면 채널 수가 같아도 1x1 conv shortcut을 사용합니다 (파라미터가 모두 0이면 출력도 0).
    """

    def __init__(self, in_channels: int, out_channels: int, force_projection: bool = False):
        super().__init__()
        mid = max(out_channels // 2, 1)
        self.path = nn.Sequential(
            nn.BatchNorm2d(in_channels), nn.ReLU(), nn.Conv2d(in_channels, mid, 1),
            nn.BatchNorm2d(mid), nn.ReLU(), nn.Conv2d(mid, mid, 3, padding=1),
            nn.BatchNorm2d(mid), nn.ReLU(), nn.Conv2d(mid, out_channels, 1),
        )
        identity = in_channels == out_channels and not force_projection
        self.shortcut = nn.Identity() if identity else nn.Conv2d(in_channels, out_channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.shortcut(x) + self.path(x)


# 4. Helper Functions
@contextmanager
def seeded(seed: int) -> Iterator[None]:
    """전역 RNG를 오염시키지 않고 seed 고정 상태에서 파라미터를 초기화 (fan-in scaled 기본 초기화)"""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        yield


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def zero_module(module: nn.Module) -> None:
    """모듈의 모든 파라미터(BN affine 포함)를 0으로 설정. identity shortcut처럼 파라미터가 없는 경로는 그대로 남습니다"""
    with torch.no_grad():
        for p in module.parameters():
            p.zero_()
