"""
@Title: Multi-view Integrator
@Description: 두 번째 네트워크 g. N개 시점의 heatmap/skip/image를 채널 방향으로 이어 붙이고
              (simple encoder 또는 half-hourglass) -> FC(3×J)로 정규화된 3D 포즈를 회귀합니다.
@Author: Allen
@Date: 2026-10-18
"""

# 1. Imports
import sys
import dataclasses
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import torch
import torch.nn.functional as F
from torch import nn

# 상위 디렉토리 참조 설정
CURRENT_DIR = Path(__file__).resolve().parent
SRC_DIR = CURRENT_DIR.parent
if str(SRC_DIR) not in sys.path:
    sys.path.append(str(SRC_DIR))

import config
from config import FusionInputVariant, IntegratorArch, IntegratorConfig, PerceptronConfig
from errors import ConfigError, ShapeError, UnsupportedCombinationError
from engines.layers import ConvBnRelu, DTYPES, Residual, count_parameters, seeded
from engines.perceptron import SkipPyramid
from data_loaders import io as local_io

# 2. Constants
MODULE_TAG = "[Integrator]"
CHECKPOINT_KIND = "integrator"
SIMPLE_ENCODER_FINAL_RES = 4


# 3. Domain Types
@dataclasses.dataclass
class ViewOutput:
    """한 시점의 perceptron 출력 (+ 원본 이미지)"""
    heatmaps: torch.Tensor                  # (B, J, r, r)
    skips: Optional[SkipPyramid] = None
    image: Optional[torch.Tensor] = None    # (B, 3, H, W)


@dataclasses.dataclass
class FusedInput:
    """
    heatmaps: (B, J·N, r, r), 채널 j·N + n = 관절 j의 시점 n (concat(h_j^1..h_j^N)이 관절 순서대로)
    images:   (B, 3·N, r, r) 또는 None, 시점 n의 RGB가 채널 3n..3n+2
    skips:    레벨별 (B, N·L_s, r_s, r_s) 또는 None, 시점 n의 feature가 채널 n·L_s..(n+1)·L_s−1
    """
    heatmaps: torch.Tensor
    num_views: int
    images: Optional[torch.Tensor] = None
    skips: Optional[SkipPyramid] = None

    @property
    def num_joints(self) -> int:
        return self.heatmaps.shape[1] // self.num_views

    def trunk_input(self) -> torch.Tensor:
        if self.images is None:
            return self.heatmaps
        return torch.cat([self.heatmaps, self.images], dim=1)


# 4. Fusion
def fuse_views(per_view: Sequence[ViewOutput], variant: FusionInputVariant) -> FusedInput:
    """
    시점 순서(오름차순 camera index)를 유지한 채 채널 방향으로 이어 붙입니다.

    Raises:
        ShapeError: 시점 간 shape 불일치 (시점 번호 포함), 필요한 입력 누락
    """
    if not per_view:
        raise ShapeError("fuse_views needs at least one view")
    ref = per_view[0]
    for n, view in enumerate(per_view):
        if view.heatmaps.shape != ref.heatmaps.shape:
            raise ShapeError(f"view {n}: heatmaps {tuple(view.heatmaps.shape)} != view 0 {tuple(ref.heatmaps.shape)}")

    batch, joints, res, _ = ref.heatmaps.shape
    num_views = len(per_view)
    heatmaps = torch.stack([v.heatmaps for v in per_view], dim=2).reshape(batch, joints * num_views, res, res)
    fused = FusedInput(heatmaps=heatmaps, num_views=num_views)

    if variant == FusionInputVariant.HEATMAPS_PLUS_IMAGE:
        images = []
        for n, view in enumerate(per_view):
            if view.image is None:
                raise ShapeError(f"view {n}: HEATMAPS_PLUS_IMAGE needs the input image")
            if view.image.shape != ref.image.shape:
                raise ShapeError(f"view {n}: image {tuple(view.image.shape)} != view 0 {tuple(ref.image.shape)}")
            images.append(F.interpolate(view.image, size=(res, res), mode="bilinear", align_corners=False))
        fused.images = torch.cat(images, dim=1)

    if variant == FusionInputVariant.HEATMAPS_PLUS_SKIPS:
        for n, view in enumerate(per_view):
            if view.skips is None:
                raise ShapeError(f"view {n}: HEATMAPS_PLUS_SKIPS needs the skip pyramid")
            for s, (a, b) in enumerate(zip(view.skips.levels, ref.skips.levels)):
                if a.shape != b.shape:
                    raise ShapeError(f"view {n}: skip level {s} {tuple(a.shape)} != view 0 {tuple(b.shape)}")
        levels = [torch.cat([v.skips.levels[s] for v in per_view], dim=1) for s in range(config.NUM_SKIP_LEVELS)]
        fused.skips = SkipPyramid(levels)

    return fused


def split_fused(fused: FusedInput) -> List[ViewOutput]:
    """fuse_views의 역연산 (concat은 lossless): 시점별 heatmap/skip/저해상도 이미지 복원"""
    batch, _, res, _ = fused.heatmaps.shape
    n_views = fused.num_views
    hm = fused.heatmaps.reshape(batch, -1, n_views, res, res)
    outputs = []
    for n in range(n_views):
        skips = None
        if fused.skips is not None:
            skips = SkipPyramid([lvl.chunk(n_views, dim=1)[n] for lvl in fused.skips.levels])
        image = fused.images[:, 3 * n:3 * n + 3] if fused.images is not None else None
        outputs.append(ViewOutput(heatmaps=hm[:, :, n], skips=skips, image=image))
    return outputs


# 5. Network
class SimpleEncoder(nn.Module):
    """kernel=stride=2 conv를 반복하여 해상도를 절반씩 줄이는 encoder"""

    def __init__(self, in_channels: int, width: int, stages: int):
        super().__init__()
        layers = []
        for s in range(stages):
            layers.append(ConvBnRelu(in_channels if s == 0 else width, width, kernel_size=2, stride=2))
        self.layers = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor, skips: Optional[SkipPyramid] = None) -> torch.Tensor:
        return self.layers(x)


class HalfHourglass(nn.Module):
    """
    hourglass의 encoder 절반: stage마다 residual stack -> (skip 합산) -> max-pool.
    skip 레벨 s는 residual module 하나로 채널을 trunk 폭에 맞춘 뒤 pooling 직전에 더해집니다.
    skip branch의 shortcut은 항상 1x1 conv이므로 branch 파라미터가 0이면 HEATMAPS_ONLY trunk와 같아집니다.
    """

    def __init__(self, in_channels: int, width: int, residual_per_stage: int,
                 skip_channels: Optional[List[int]] = None):
        super().__init__()
        self.entry = ConvBnRelu(in_channels, width, 1)
        self.stages = nn.ModuleList([
            nn.Sequential(*[Residual(width, width) for _ in range(residual_per_stage)])
            for _ in range(config.NUM_SKIP_LEVELS)])
        self.pool = nn.MaxPool2d(2, 2)
        self.skip_branches = None
        if skip_channels is not None:
            self.skip_branches = nn.ModuleList([Residual(c, width, force_projection=True) for c in skip_channels])

    def forward(self, x: torch.Tensor, skips: Optional[SkipPyramid] = None) -> torch.Tensor:
        x = self.entry(x)
        for s, stage in enumerate(self.stages):
            x = stage(x)
            if self.skip_branches is not None:
                x = x + self.skip_branches[s](skips.levels[s])
            x = self.pool(x)
        return x


class MultiViewIntegrator(nn.Module):
    def __init__(self, cfg: IntegratorConfig, perceptron_cfg: PerceptronConfig):
        super().__init__()
        self.cfg = cfg
        self.perceptron_cfg = perceptron_cfg
        res = perceptron_cfg.heatmap_resolution
        n_views = cfg.num_views
        joints = perceptron_cfg.num_joints

        in_channels = joints * n_views
        if cfg.variant == FusionInputVariant.HEATMAPS_PLUS_IMAGE:
            in_channels += 3 * n_views

        if cfg.arch == IntegratorArch.SIMPLE_ENCODER:
            if cfg.variant == FusionInputVariant.HEATMAPS_PLUS_SKIPS:
                raise UnsupportedCombinationError(
                    "SIMPLE_ENCODER has no pyramid stages to receive skips; use HALF_HOURGLASS")
            stages = cfg.simple_encoder_stages
            if stages is None:
                stages = max(int(res // SIMPLE_ENCODER_FINAL_RES).bit_length() - 1, 1)
            if res // (2 ** stages) < 1:
                raise ConfigError(f"{stages} stride-2 stages reduce a {res}px input below 1px")
            self.encoder = SimpleEncoder(in_channels, cfg.width, stages)
            final_res = res // (2 ** stages)
        else:
            skip_channels = None
            if cfg.variant == FusionInputVariant.HEATMAPS_PLUS_SKIPS:
                skip_channels = [n_views * c for c in perceptron_cfg.skip_channels]
            self.encoder = HalfHourglass(in_channels, cfg.width, cfg.residual_per_stage, skip_channels)
            final_res = res // (2 ** config.NUM_SKIP_LEVELS)
            if final_res < 1:
                raise ConfigError(f"heatmap resolution {res} too small for four pooling stages")

        self.final_resolution = final_res
        self.head = nn.Linear(cfg.width * final_res * final_res, 3 * joints)

    def forward(self, x: torch.Tensor, skips: Optional[SkipPyramid] = None) -> torch.Tensor:
        code = self.encoder(x, skips)
        out = self.head(code.flatten(start_dim=1))
        return out.view(out.shape[0], -1, 3)


# 6. Main Logic
def build_integrator(arch: IntegratorArch, variant: FusionInputVariant, cfg: IntegratorConfig,
                     perceptron_cfg: PerceptronConfig,
                     dtype: Union[str, torch.dtype] = "float64") -> MultiViewIntegrator:
    """
    encoder(arch) + FC(3×J). 같은 seed/config -> bit-identical 초기 파라미터.

    Raises:
        UnsupportedCombinationError: SIMPLE_ENCODER + HEATMAPS_PLUS_SKIPS
    """
    cfg = dataclasses.replace(cfg, arch=IntegratorArch(arch), variant=FusionInputVariant(variant))
    torch_dtype = DTYPES[dtype] if isinstance(dtype, str) else dtype
    with seeded(cfg.seed):
        model = MultiViewIntegrator(cfg, perceptron_cfg)
    return model.to(torch_dtype)


def integrator_forward(model: MultiViewIntegrator, fused: FusedInput,
                       skips: Optional[SkipPyramid] = None) -> torch.Tensor:
    """
    Args:
        fused: fuse_views 결과
        skips: 시점 결합된 SkipPyramid (None이면 fused.skips 사용)

    Returns:
        (B, J, 3) 정규화 3D 좌표
    """
    cfg = model.cfg
    if fused.num_views != cfg.num_views:
        raise ShapeError(f"integrator built for {cfg.num_views} views, got {fused.num_views}")
    x = fused.trunk_input()
    expected = model.perceptron_cfg.num_joints * cfg.num_views
    if cfg.variant == FusionInputVariant.HEATMAPS_PLUS_IMAGE:
        if fused.images is None:
            raise ShapeError("HEATMAPS_PLUS_IMAGE integrator needs fused images")
        expected += 3 * cfg.num_views
    res = model.perceptron_cfg.heatmap_resolution
    if x.ndim != 4 or x.shape[1] != expected or tuple(x.shape[-2:]) != (res, res):
        raise ShapeError(f"integrator expects (B, {expected}, {res}, {res}), got {tuple(x.shape)}")

    skips = skips if skips is not None else fused.skips
    if cfg.variant == FusionInputVariant.HEATMAPS_PLUS_SKIPS:
        if skips is None:
            raise ShapeError("HEATMAPS_PLUS_SKIPS integrator called without skip features")
        return model(x, skips)
    return model(x)


def pose_loss(pred: torch.Tensor, gt: torch.Tensor, kind: str = "euclidean") -> torch.Tensor:
    """
    L3d = (1/J) Σ_j ‖p_j − p̂_j‖ (배치가 있으면 배치 평균). kind='squared'는 거리 제곱 버전.
    """
    pred = torch.as_tensor(pred)
    gt = torch.as_tensor(gt, dtype=pred.dtype, device=pred.device)
    if pred.shape != gt.shape:
        raise ShapeError(f"pose_loss shape mismatch: {tuple(pred.shape)} vs {tuple(gt.shape)}")
    if pred.ndim < 2 or pred.shape[-1] != 3:
        raise ShapeError(f"pose_loss expects (..., J, 3), got {tuple(pred.shape)}")
    diff = pred - gt
    if kind == "euclidean":
        per_joint = torch.linalg.vector_norm(diff, dim=-1)
    elif kind == "squared":
        per_joint = diff.pow(2).sum(dim=-1)
    else:
        raise ConfigError(f"unknown pose loss kind {kind!r}")
    return per_joint.mean()


def parameter_count(model: MultiViewIntegrator) -> int:
    return count_parameters(model)


def save_integrator(model: MultiViewIntegrator, path: Path, view_order: Sequence[int],
                    extra: Optional[dict] = None) -> None:
    header = {
        "kind": CHECKPOINT_KIND,
        "config": config._to_plain(dataclasses.asdict(model.cfg)),
        "perceptron_config": dataclasses.asdict(model.perceptron_cfg),
        "seed": model.cfg.seed,
        "view_order": [int(v) for v in view_order],
        "extra": extra or {},
    }
    local_io.save_checkpoint(path, header, model.state_dict())


def load_integrator(path: Path, dtype: Union[str, torch.dtype] = "float64") -> Tuple[MultiViewIntegrator, List[int]]:
    """
    Returns:
        (model, view_order)
    """
    header, state = local_io.load_checkpoint(path)
    if header.get("kind") != CHECKPOINT_KIND:
        raise ConfigError(f"{path} holds a {header.get('kind')!r} checkpoint, expected {CHECKPOINT_KIND!r}")
    raw = dict(header["config"])
    cfg = IntegratorConfig(**{**raw, "arch": IntegratorArch(raw["arch"]), "variant": FusionInputVariant(raw["variant"])})
    perceptron_cfg = PerceptronConfig(**header["perceptron_config"])
    model = build_integrator(cfg.arch, cfg.variant, cfg, perceptron_cfg, dtype)
    target = model.head.weight.dtype
    model.load_state_dict({k: v.to(target) if v.is_floating_point() else v for k, v in state.items()})
    model.eval()
    return model, list(header["view_order"])
