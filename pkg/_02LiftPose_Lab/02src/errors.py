"""
@Title: Error Taxonomy
@Description: 파이프라인 전반에서 사용하는 예외 계층. CLI는 category/exit_code를 그대로 사용자에게 노출합니다.
@Author: Allen
@Date: 2026-10-18
"""

# 1. Imports
from typing import Optional


# 2. Base Error
class LiftPoseError(Exception):
    """모든 도메인 예외의 최상위 클래스 (machine-readable category 포함)"""

    category = "internal"
    exit_code = 1

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    def to_dict(self) -> dict:
        return {"error": self.category, "message": self.message}


# 3. Concrete Errors
class ConfigError(LiftPoseError):
    category = "config"
    exit_code = 2


class UnsupportedCombinationError(ConfigError):
    """SIMPLE_ENCODER + HEATMAPS_PLUS_SKIPS 처럼 정의되지 않은 조합"""


class ShapeError(LiftPoseError):
    category = "shape"
    exit_code = 3


class DatasetError(LiftPoseError):
    category = "dataset"
    exit_code = 4


class DataIOError(LiftPoseError):
    category = "io"
    exit_code = 5

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(f"{message} ({path})" if path else message)
        self.path = path


class TrainingDivergedError(LiftPoseError):
    """Loss가 NaN/Inf가 되었을 때 진단 정보(epoch, batch, loss)를 함께 전달"""

    category = "training"
    exit_code = 6

    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


class GeometryError(LiftPoseError):
    category = "geometry"
    exit_code = 7


class InternalError(LiftPoseError):
    """도메인 예외로 분류되지 않은 실패 (torch/OS 등). CLI가 원래 예외를 감싸서 사용"""

    category = "internal"
    exit_code = 1

    @classmethod
    def wrap(cls, exc: BaseException) -> "InternalError":
        return cls(f"{type(exc).__name__}: {exc}")
