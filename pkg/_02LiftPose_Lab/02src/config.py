"""
@Title: Global Configuration
@Description: 프로젝트 전반의 경로, 파일명 매핑, 공통 상수와 실험 설정(YAML -> dataclass)을 관리하는 모듈
@Author: Allen
@Date: 2026-10-18
"""

# 1. Imports
import sys
import copy
import logging
import dataclasses
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union, get_args, get_origin, get_type_hints

import yaml

from errors import ConfigError

# 2. Path Configuration (경로 설정)
# SRC_DIR: config.py가 위치한 현재 폴더 (02src)
SRC_DIR = Path(__file__).resolve().parent

# BASE_DIR: 프로젝트 최상위 루트 폴더 (_02LiftPose_Lab)
BASE_DIR = SRC_DIR.parent

# 데이터/산출물 저장소 경로
DATA_DIR = BASE_DIR / "01DATA"
DATASET_DIR = DATA_DIR / "synthetic"
PRETRAIN_DATASET_DIR = DATA_DIR / "synthetic_pretrain"
OCCLUDED_DATASET_DIR = DATA_DIR / "synthetic_occluded"
CHECKPOINT_DIR = DATA_DIR / "checkpoints"
OUTPUT_DIR = BASE_DIR / "03Output"
LOG_DIR = BASE_DIR / "logs"

DEFAULT_CONFIG_FILE = SRC_DIR / "experiment_config.yaml"

# 3. File Name Mapping (파일명 매핑 상수)
DATASET_FILES = {
    'index': 'index.yaml',           # 버전/카메라/정규화/split/시퀀스 목록 (사람이 읽는 문서)
    'records': 'records.csv',        # 프레임 단위 2D/3D 관절 테이블
    'images': 'images',              # images/<seq>/<view>/<frame>.png
}

CHECKPOINT_FILES = {
    'perceptron': '10Perceptron.ckpt',
    'pretrained': '09Perceptron_Pretrained.ckpt',
    'integrator': '11Integrator.ckpt',
    'finetuned_perceptron': '11Perceptron_Finetuned.ckpt',   # train-3d --finetune-perceptron
    'stage1_curve': '10Stage1_Loss.csv',
    'stage2_curve': '11Stage2_Loss.csv',
}

OUTPUT_FILES = {
    'metrics': '20Metrics_Table.csv',            # experiment, subject, n_frames, mpjpe_mm, variance_mm2, std_mm
    'frame_errors': '21Frame_Errors.csv',
    'per_joint': '22Per_Joint_Error.csv',
    'per_task': '23Per_Task_Error.csv',
    'predictions': '24Predictions.csv',
    'ablation': 'ablation_{suite}.csv',                  # arm × seed 행
    'ablation_partial': 'ablation_{suite}_partial.csv',  # arm 하나 끝날 때마다 갱신
    'ablation_summary': 'ablation_{suite}_summary.csv',  # arm별 seed 중앙값 + error_reduction
    'ablation_frames': 'ablation_{suite}_frames.csv',    # report 재생성용 프레임 오차
    'chart': 'chart_{suite}.png',
    'pose_samples': 'pose_samples.png',
}

# 4. Global Constants (공통 상수)
ENCODING_STD = 'utf-8'   # 내부 처리용 표준 (byte-stable 출력)
DATASET_FORMAT_VERSION = 1
CHECKPOINT_FORMAT_VERSION = 1
NUM_JOINTS = 14
NUM_SKIP_LEVELS = 4


# 5. Enumerations
class Stage(str, Enum):
    STAGE1_2D = "STAGE1_2D"
    STAGE2_3D = "STAGE2_3D"


class FusionInputVariant(str, Enum):
    HEATMAPS_ONLY = "HEATMAPS_ONLY"
    HEATMAPS_PLUS_IMAGE = "HEATMAPS_PLUS_IMAGE"
    HEATMAPS_PLUS_SKIPS = "HEATMAPS_PLUS_SKIPS"


class IntegratorArch(str, Enum):
    SIMPLE_ENCODER = "SIMPLE_ENCODER"
    HALF_HOURGLASS = "HALF_HOURGLASS"


# 6. Experiment Settings (dataclass)
@dataclasses.dataclass(frozen=True)
class OcclusionConfig:
    view: Optional[int] = None
    probability: float = 0.5
    size_frac: float = 0.3

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ConfigError(f"rig.occlusion.probability must be in [0, 1], got {self.probability}")
        if not 0.0 < self.size_frac <= 1.0:
            raise ConfigError(f"rig.occlusion.size_frac must be in (0, 1], got {self.size_frac}")


@dataclasses.dataclass(frozen=True)
class RigConfig:
    image_size: int = 256
    num_subjects: int = 4
    duration_frames: int = 200
    fps: int = 30
    camera_azimuths_deg: Tuple[float, ...] = (90.0, 135.0)
    camera_distance_mm: float = 4000.0
    camera_height_mm: float = 1000.0
    look_at_height_mm: float = 900.0
    focal_px: float = 480.0
    norm_scope: str = "train"
    pretrain_subject_offset: int = 100
    background: float = 0.15
    limb_width_px: float = 4.0
    joint_radius_px: float = 3.0
    occlusion: OcclusionConfig = OcclusionConfig()

    def __post_init__(self):
        if self.duration_frames < 2:
            raise ConfigError("rig.duration_frames must be >= 2")
        if not self.camera_azimuths_deg:
            raise ConfigError("rig.camera_azimuths_deg needs at least one camera")
        if self.focal_px <= 0:
            raise ConfigError("rig.focal_px must be > 0")
        if self.norm_scope not in ("train", "all"):
            raise ConfigError(f"rig.norm_scope must be 'train' or 'all', got {self.norm_scope!r}")
        if self.occlusion.view is not None and not 0 <= self.occlusion.view < len(self.camera_azimuths_deg):
            raise ConfigError(f"rig.occlusion.view {self.occlusion.view} does not name a camera")

    @property
    def num_views(self) -> int:
        return len(self.camera_azimuths_deg)


@dataclasses.dataclass(frozen=True)
class PerceptronConfig:
    num_joints: int = NUM_JOINTS
    image_size: int = 256
    heatmap_resolution: int = 64
    base_channels: int = 16
    num_stacks: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.base_channels < 4:
            raise ConfigError(f"perceptron.base_channels must be >= 4, got {self.base_channels}")
        if self.num_stacks < 1:
            raise ConfigError("perceptron.num_stacks must be >= 1")
        if self.heatmap_resolution <= 0 or self.image_size % self.heatmap_resolution:
            raise ConfigError(
                f"perceptron.heatmap_resolution {self.heatmap_resolution} must divide image_size {self.image_size}")
        ratio = self.image_size // self.heatmap_resolution
        if ratio & (ratio - 1):
            raise ConfigError(f"image_size / heatmap_resolution must be a power of two, got {ratio}")
        # 4단계 skip pyramid의 마지막 레벨(r/8)이 최소 1px 이상이어야 함
        if self.heatmap_resolution % (2 ** (NUM_SKIP_LEVELS - 1)):
            raise ConfigError(f"perceptron.heatmap_resolution must be divisible by 8, got {self.heatmap_resolution}")

    @property
    def skip_resolutions(self) -> List[int]:
        return [self.heatmap_resolution // (2 ** s) for s in range(NUM_SKIP_LEVELS)]

    @property
    def skip_channels(self) -> List[int]:
        return [self.base_channels] * NUM_SKIP_LEVELS


@dataclasses.dataclass(frozen=True)
class IntegratorConfig:
    arch: IntegratorArch = IntegratorArch.HALF_HOURGLASS
    variant: FusionInputVariant = FusionInputVariant.HEATMAPS_PLUS_SKIPS
    num_views: int = 2
    width: int = 32
    residual_per_stage: int = 1
    simple_encoder_stages: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.num_views < 1:
            raise ConfigError("integrator.num_views must be >= 1")
        if self.width < 4:
            raise ConfigError(f"integrator.width must be >= 4, got {self.width}")
        if self.residual_per_stage < 1:
            raise ConfigError("integrator.residual_per_stage must be >= 1")


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    stage: Stage = Stage.STAGE1_2D
    learning_rate: float = 0.00025
    epochs: int = 5
    batch_size: int = 8
    seed: int = 0
    optimizer: str = "rmsprop"
    momentum: float = 0.0
    weight_decay: float = 0.0
    loss_kind: str = "euclidean"
    lr_schedule: str = "constant"
    finetune_perceptron: bool = False
    max_steps: Optional[int] = None
    max_frames: Optional[int] = None

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.optimizer not in ("rmsprop", "adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.loss_kind not in ("euclidean", "squared"):
            raise ConfigError(f"unknown loss_kind {self.loss_kind!r}")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ConfigError(f"unknown lr_schedule {self.lr_schedule!r}")


@dataclasses.dataclass(frozen=True)
class AblationConfig:
    seeds: Tuple[int, ...] = (0, 1, 2)
    occluded_view: Optional[int] = 1

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("ablation.seeds needs at least one seed")


@dataclasses.dataclass(frozen=True)
class RuntimeConfig:
    profile: str = "desk"
    dtype: str = "float64"
    num_threads: Optional[int] = None
    log_json: bool = False

    def __post_init__(self):
        if self.dtype not in ("float64", "float32"):
            raise ConfigError(f"runtime.dtype must be float64 or float32, got {self.dtype!r}")


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    rig: RigConfig = RigConfig()
    perceptron: PerceptronConfig = PerceptronConfig()
    integrator: IntegratorConfig = IntegratorConfig()
    stage1: TrainConfig = TrainConfig()
    stage2: TrainConfig = TrainConfig(stage=Stage.STAGE2_3D, learning_rate=0.0005, epochs=20)
    ablation: AblationConfig = AblationConfig()
    runtime: RuntimeConfig = RuntimeConfig()

    def __post_init__(self):
        if self.stage1.stage != Stage.STAGE1_2D:
            raise ConfigError("stage1.stage must be STAGE1_2D")
        if self.stage2.stage != Stage.STAGE2_3D:
            raise ConfigError("stage2.stage must be STAGE2_3D")
        if self.perceptron.image_size != self.rig.image_size:
            raise ConfigError("perceptron.image_size must equal rig.image_size")

    def to_dict(self) -> Dict[str, Any]:
        return _to_plain(dataclasses.asdict(self))


# 7. Helper Functions (YAML -> dataclass)
def _to_plain(value: Any) -> Any:
    """Enum/tuple을 YAML 친화적인 기본 타입으로 변환"""
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {k: _to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_plain(v) for v in value]
    return value


def _coerce(tp: Any, value: Any, where: str) -> Any:
    origin = get_origin(tp)
    if origin is Union:
        args = [a for a in get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _coerce(args[0], value, where)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{where} must be a mapping")
        return _build(tp, value, where)
    if isinstance(tp, type) and issubclass(tp, Enum):
        try:
            return tp(value)
        except ValueError:
            choices = ", ".join(m.value for m in tp)
            raise ConfigError(f"{where}: {value!r} is not one of {choices}")
    if origin in (tuple, list):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where} must be a list")
        inner = get_args(tp)[0]
        return tuple(_coerce(inner, v, where) for v in value)
    if tp is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if tp in (int, bool, str) and not isinstance(value, tp):
        raise ConfigError(f"{where} must be {tp.__name__}, got {value!r}")
    return value


def _build(cls, data: Dict[str, Any], section: str):
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown key(s) in {section or 'config'}: {', '.join(sorted(unknown))}")
    kwargs = {k: _coerce(hints[k], v, f"{section}.{k}" if section else k) for k, v in data.items()}
    return cls(**kwargs)


def _apply_dotted(tree: Dict[str, Any], dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = tree
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {dotted!r} descends into a scalar")
    node[keys[-1]] = value


def parse_override(text: str) -> Tuple[str, Any]:
    """'stage2.epochs=20' 형태의 CLI override를 (key, value)로 분리"""
    if "=" not in text:
        raise ConfigError(f"override must look like key=value, got {text!r}")
    key, raw = text.split("=", 1)
    return key.strip(), yaml.safe_load(raw)


# 8. Main Logic
def load_experiment_config(path: Optional[Union[str, Path]] = None,
                           overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """
    YAML 설정 문서를 읽어 ExperimentConfig로 변환합니다.

    Args:
        path: 설정 파일 경로 (None이면 02src/experiment_config.yaml)
        overrides: 'section.key' -> value 형태의 덮어쓰기 값 (CLI --set)

    Returns:
        ExperimentConfig: 검증이 끝난 불변 설정 객체
    """
    cfg_path = Path(path) if path else DEFAULT_CONFIG_FILE
    if not cfg_path.exists():
        raise ConfigError(f"config file not found: {cfg_path}")

    with open(cfg_path, "r", encoding="utf-8") as f:
        raw = yaml.safe_load(f) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping: {cfg_path}")

    tree = copy.deepcopy(raw)
    profiles = tree.pop("profiles", {}) or {}
    overrides = dict(overrides or {})

    # profile 선택: CLI override > 파일 값 > desk
    profile = overrides.get("runtime.profile", tree.get("runtime", {}).get("profile", "desk"))
    if profile != "desk":
        if profile not in profiles:
            raise ConfigError(f"unknown profile {profile!r}; known: {', '.join(sorted(profiles)) or 'none'}")
        for dotted, value in profiles[profile].items():
            _apply_dotted(tree, dotted, value)

    for dotted, value in overrides.items():
        _apply_dotted(tree, dotted, value)

    return _build(ExperimentConfig, tree, "")


def setup_logging(name: str, log_json: bool = False, level: int = logging.INFO) -> Path:
    """
    콘솔(stdout) + 타임스탬프 로그 파일 핸들러를 설정합니다.

    Returns:
        Path: 생성된 로그 파일 경로
    """
    LOG_DIR.mkdir(parents=True, exist_ok=True)
    log_file = LOG_DIR / f"{name}_{datetime.now().strftime('%Y%m%d_%H%M%S')}.log"

    file_handler = logging.FileHandler(log_file, encoding="utf-8")
    if log_json:
        from pythonjsonlogger import jsonlogger
        file_handler.setFormatter(jsonlogger.JsonFormatter("%(asctime)s %(levelname)s %(name)s %(message)s"))
    else:
        file_handler.setFormatter(logging.Formatter("%(asctime)s [%(levelname)s] %(message)s"))

    stream_handler = logging.StreamHandler(sys.stdout)
    stream_handler.setFormatter(logging.Formatter("%(asctime)s [%(levelname)s] %(message)s"))

    logging.basicConfig(level=level, handlers=[file_handler, stream_handler], force=True)
    return log_file
