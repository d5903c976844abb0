"""
@Title: Skeleton Core
@Description: 14관절 분류 체계, 3D/2D 포즈 타입, 0~1 좌표 정규화, 핀홀 카메라 투영을 제공하는 공용 모듈
@Author: Allen
@Date: 2026-10-18
"""

# 1. Imports
import sys
import dataclasses
from enum import IntEnum
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

# 상위 디렉토리 참조 설정
CURRENT_DIR = Path(__file__).resolve().parent
SRC_DIR = CURRENT_DIR.parent
if str(SRC_DIR) not in sys.path:
    sys.path.append(str(SRC_DIR))

from errors import GeometryError, ShapeError

# 2. Constants
MODULE_TAG = "[Skeleton]"
ORTHONORMAL_TOL = 1e-9
AXIS_NAMES = ("x", "y", "z")


class JointId(IntEnum):
    """관절 인덱스 순서는 고정 (모든 파일 포맷/텐서가 이 순서를 사용)"""
    HEAD = 0
    NECK = 1
    L_SHOULDER = 2
    R_SHOULDER = 3
    L_ELBOW = 4
    R_ELBOW = 5
    L_WRIST = 6
    R_WRIST = 7
    L_HIP = 8
    R_HIP = 9
    L_KNEE = 10
    R_KNEE = 11
    L_ANKLE = 12
    R_ANKLE = 13


NUM_JOINTS = len(JointId)
JOINT_NAMES: List[str] = [j.name.lower() for j in JointId]

# Kinematic tree: neck가 root, head/neck 체인 + 팔 2개 + 다리 2개
PARENTS: Dict[JointId, JointId] = {
    JointId.HEAD: JointId.NECK,
    JointId.L_SHOULDER: JointId.NECK,
    JointId.R_SHOULDER: JointId.NECK,
    JointId.L_ELBOW: JointId.L_SHOULDER,
    JointId.R_ELBOW: JointId.R_SHOULDER,
    JointId.L_WRIST: JointId.L_ELBOW,
    JointId.R_WRIST: JointId.R_ELBOW,
    JointId.L_HIP: JointId.NECK,
    JointId.R_HIP: JointId.NECK,
    JointId.L_KNEE: JointId.L_HIP,
    JointId.R_KNEE: JointId.R_HIP,
    JointId.L_ANKLE: JointId.L_KNEE,
    JointId.R_ANKLE: JointId.R_KNEE,
}
ROOT = JointId.NECK

BONES: List[Tuple[int, int]] = [(int(p), int(c)) for c, p in PARENTS.items()]

LIMB_CHAINS: Dict[str, Tuple[JointId, ...]] = {
    "head": (JointId.NECK, JointId.HEAD),
    "left_arm": (JointId.L_SHOULDER, JointId.L_ELBOW, JointId.L_WRIST),
    "right_arm": (JointId.R_SHOULDER, JointId.R_ELBOW, JointId.R_WRIST),
    "left_leg": (JointId.L_HIP, JointId.L_KNEE, JointId.L_ANKLE),
    "right_leg": (JointId.R_HIP, JointId.R_KNEE, JointId.R_ANKLE),
}


# 3. Domain Types
def _as_matrix(values, cols: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.shape != (NUM_JOINTS, cols):
        raise ShapeError(f"{name} must have shape ({NUM_JOINTS}, {cols}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = int(np.argwhere(~np.isfinite(arr))[0][0])
        raise GeometryError(f"{name} has non-finite value at joint {JOINT_NAMES[bad]}")
    arr.setflags(write=False)
    return arr


@dataclasses.dataclass(frozen=True, eq=False)
class Pose3D:
    """J×3 관절 좌표 (mm, lab frame: x 전방, y 좌측, z 상방)"""
    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", _as_matrix(self.coords, 3, "Pose3D"))

    def joint(self, j: JointId) -> np.ndarray:
        return self.coords[int(j)]


@dataclasses.dataclass(frozen=True, eq=False)
class NormalizedPose3D:
    """네트워크 회귀 타깃 (단위 없음). 학습 데이터 범위 밖의 포즈는 out_of_range로 표시"""
    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", _as_matrix(self.coords, 3, "NormalizedPose3D"))

    @property
    def out_of_range(self) -> bool:
        return bool(np.any(self.coords < 0.0) or np.any(self.coords > 1.0))


@dataclasses.dataclass(frozen=True, eq=False)
class NormParams:
    min_xyz: np.ndarray
    max_xyz: np.ndarray

    def __post_init__(self):
        lo = np.array(self.min_xyz, dtype=np.float64).reshape(3)
        hi = np.array(self.max_xyz, dtype=np.float64).reshape(3)
        for k in range(3):
            if not hi[k] > lo[k]:
                raise GeometryError(f"degenerate norm axis {AXIS_NAMES[k]}: max {hi[k]} <= min {lo[k]}")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "min_xyz", lo)
        object.__setattr__(self, "max_xyz", hi)

    @property
    def span(self) -> np.ndarray:
        return self.max_xyz - self.min_xyz

    def to_dict(self) -> Dict[str, List[float]]:
        return {"min_xyz": [float(v) for v in self.min_xyz], "max_xyz": [float(v) for v in self.max_xyz]}

    @classmethod
    def from_dict(cls, data: Dict[str, Sequence[float]]) -> "NormParams":
        return cls(min_xyz=data["min_xyz"], max_xyz=data["max_xyz"])


@dataclasses.dataclass(frozen=True, eq=False)
class Pose2D:
    """크롭 이미지 좌표계의 J×2 픽셀 좌표 + 관절별 visibility (가려진 관절도 좌표는 유지)"""
    coords: np.ndarray
    visible: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", _as_matrix(self.coords, 2, "Pose2D"))
        vis = np.array(self.visible, dtype=bool).reshape(-1)
        if vis.shape != (NUM_JOINTS,):
            raise ShapeError(f"Pose2D.visible must have {NUM_JOINTS} flags, got {vis.shape}")
        vis.setflags(write=False)
        object.__setattr__(self, "visible", vis)

    def with_visibility(self, visible: np.ndarray) -> "Pose2D":
        return Pose2D(coords=self.coords, visible=visible)


@dataclasses.dataclass(frozen=True, eq=False)
class CameraModel:
    """
    핀홀 카메라 (렌즈 왜곡 없음). translation은 월드 좌표계의 카메라 중심이며
    카메라 좌표는 X_c = R·(X − t) (x 우측, y 하방, z 광축 방향).
    """
    focal: float
    principal_point: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray
    image_size: Tuple[int, int]
    name: str = ""

    def __post_init__(self):
        if not self.focal > 0:
            raise GeometryError(f"camera {self.name!r}: focal must be > 0, got {self.focal}")
        rot = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        if np.max(np.abs(rot.T @ rot - np.eye(3))) > ORTHONORMAL_TOL:
            raise GeometryError(f"camera {self.name!r}: rotation is not orthonormal")
        if np.linalg.det(rot) < 0:
            raise GeometryError(f"camera {self.name!r}: rotation determinant must be +1")
        pp = np.array(self.principal_point, dtype=np.float64).reshape(2)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        for arr in (rot, pp, t):
            arr.setflags(write=False)
        object.__setattr__(self, "focal", float(self.focal))
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "principal_point", pp)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "image_size", (int(self.image_size[0]), int(self.image_size[1])))

    @classmethod
    def look_at(cls, position, target, focal: float, image_size: Tuple[int, int], name: str = "") -> "CameraModel":
        """월드 z축이 위쪽일 때 position에서 target을 바라보는 카메라 (principal point = 이미지 중심)"""
        position = np.asarray(position, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - position
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.array([0.0, 0.0, 1.0]))
        if np.linalg.norm(right) < 1e-12:
            raise GeometryError(f"camera {name!r}: look-at direction is vertical")
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        rotation = np.stack([right, down, forward])
        principal = (image_size[0] / 2.0, image_size[1] / 2.0)
        return cls(focal=focal, principal_point=principal, rotation=rotation,
                   translation=position, image_size=image_size, name=name)

    def to_camera_frame(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.translation) @ self.rotation.T

    def to_dict(self) -> Dict:
        return {
            "name": self.name,
            "focal": self.focal,
            "principal_point": [float(v) for v in self.principal_point],
            "rotation": [[float(v) for v in row] for row in self.rotation],
            "translation": [float(v) for v in self.translation],
            "image_size": list(self.image_size),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "CameraModel":
        return cls(focal=data["focal"], principal_point=data["principal_point"], rotation=data["rotation"],
                   translation=data["translation"], image_size=tuple(data["image_size"]), name=data.get("name", ""))


# 4. Main Logic
def fit_norm_params(poses: Sequence[Pose3D]) -> NormParams:
    """
    모든 포즈의 모든 관절에 대해 축별 min/max를 구합니다.

    Raises:
        GeometryError: 입력이 비었거나 어떤 축의 max == min 인 경우 (축 이름 포함)
    """
    if len(poses) == 0:
        raise GeometryError("fit_norm_params needs at least one pose")
    stacked = np.concatenate([p.coords for p in poses], axis=0)
    return NormParams(min_xyz=stacked.min(axis=0), max_xyz=stacked.max(axis=0))


def normalize_pose(p: Pose3D, norm: NormParams) -> NormalizedPose3D:
    """coords[j][k] = (p[j][k] − min_xyz[k]) / (max_xyz[k] − min_xyz[k])"""
    return NormalizedPose3D((p.coords - norm.min_xyz) / norm.span)


def denormalize_pose(q: NormalizedPose3D, norm: NormParams) -> Pose3D:
    """normalize_pose의 정확한 affine 역변환 (MPJPE를 mm로 보고하기 위해 필요)"""
    return Pose3D(q.coords * norm.span + norm.min_xyz)


def project_to_view(p: Pose3D, cam: CameraModel) -> Pose2D:
    """
    표준 핀홀 투영. 이미지 범위 [0, W) × [0, H) 밖으로 나가는 관절은 visible=False.

    Raises:
        GeometryError: 카메라 좌표 depth <= 0 인 관절이 있는 경우 (관절 이름 포함)
    """
    cam_pts = cam.to_camera_frame(p.coords)
    depth = cam_pts[:, 2]
    behind = np.flatnonzero(depth <= 0)
    if behind.size:
        raise GeometryError(
            f"joint {JOINT_NAMES[behind[0]]} is behind camera {cam.name!r} (depth {depth[behind[0]]:.3f} mm)")
    pixels = cam.focal * cam_pts[:, :2] / depth[:, None] + cam.principal_point
    width, height = cam.image_size
    visible = (pixels[:, 0] >= 0) & (pixels[:, 0] < width) & (pixels[:, 1] >= 0) & (pixels[:, 1] < height)
    return Pose2D(coords=pixels, visible=visible)


def bone_lengths(p: Pose3D) -> np.ndarray:
    """BONES 순서의 뼈 길이 (mm)"""
    parents = np.array([b[0] for b in BONES])
    children = np.array([b[1] for b in BONES])
    return np.linalg.norm(p.coords[children] - p.coords[parents], axis=1)
