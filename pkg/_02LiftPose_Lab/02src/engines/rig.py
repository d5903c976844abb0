"""
@Title: Synthetic Lifting Rig
@Description: 실제 lifting 데이터셋을 대체하는 합성 리그.
              피험자 체형 생성, 3×3×2 lifting task grid, keyframe 기반 전신 궤적, 다중 카메라 stick-figure 렌더러, occluder.
@Author: Allen
@Date: 2026-10-18
"""

# 1. Imports
import sys
import dataclasses
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

# 상위 디렉토리 참조 설정
CURRENT_DIR = Path(__file__).resolve().parent
SRC_DIR = CURRENT_DIR.parent
if str(SRC_DIR) not in sys.path:
    sys.path.append(str(SRC_DIR))

from config import RigConfig
from errors import ConfigError, GeometryError
from engines.skeleton import (BONES, NUM_JOINTS, CameraModel, JointId, Pose2D, Pose3D, project_to_view)

# 2. Constants
MODULE_TAG = "[Rig]"

STATURE_RANGE_MM = (1600.0, 1900.0)

# 신장 대비 분절 길이 비율 (좌우 동일)
SEGMENT_FRACTIONS: Dict[str, float] = {
    "shank": 0.246,
    "thigh": 0.245,
    "spine": 0.290,          # pelvis 중심 -> neck
    "head": 0.130,
    "shoulder_half": 0.130,
    "hip_half": 0.090,
    "upper_arm": 0.186,
    "forearm": 0.146,
}
SEGMENT_JITTER = 0.03
ANKLE_HEIGHT_FRAC = 0.04

# task 높이 (신장 대비): floor, knuckle, shoulder
HEIGHT_FRACTIONS = {"floor": 0.05, "knuckle": 0.45, "shoulder": 0.82}

END_ANGLES_DEG = (0, 30, 60)
REPETITIONS = (1, 2)

# posture s ∈ [0, 1]: 0 = 직립, 1 = 최대 굴곡
POSTURE_TOP_FRAC = 0.55
POSTURE_SPAN_FRAC = 0.45
LEG_EXTENSION = (0.94, 0.40)        # (s=0, s=1) 에서 ankle->pelvis 높이 / 다리 길이
PELVIS_SHIFT = 0.15                 # s=1 일 때 다리 길이 대비 pelvis 후방 이동
MAX_LEAN_DEG = 75.0
HEAD_LEAN_RATIO = 0.8
ELBOW_FLEX_DEG = 20.0
ARM_SWING_RANGE_DEG = (0.0, 160.0)

PERTURB_POSTURE = 0.05
PERTURB_ANGLE_DEG = 3.0
PERTURB_HEIGHT_FRAC = 0.02

KEYFRAME_TIMES = np.array([0.0, 0.5, 1.0])

LIMB_COLOURS: Dict[str, Tuple[float, float, float]] = {
    "torso": (0.70, 0.70, 0.70),
    "head": (0.95, 0.80, 0.20),
    "left_arm": (0.20, 0.60, 1.00),
    "right_arm": (1.00, 0.40, 0.20),
    "left_leg": (0.20, 0.90, 0.40),
    "right_leg": (0.90, 0.20, 0.60),
}
JOINT_COLOUR = (1.0, 1.0, 1.0)


# 3. Domain Types
class VerticalRange(str, Enum):
    FK = "FK"   # floor -> knuckle
    KS = "KS"   # knuckle -> shoulder
    FS = "FS"   # floor -> shoulder

    @property
    def heights(self) -> Tuple[str, str]:
        return {"FK": ("floor", "knuckle"), "KS": ("knuckle", "shoulder"), "FS": ("floor", "shoulder")}[self.value]


@dataclasses.dataclass(frozen=True)
class LiftTask:
    vertical_range: VerticalRange
    end_angle: int
    repetition: int
    subject_id: int
    duration_frames: int = 200
    fps: int = 30

    def __post_init__(self):
        object.__setattr__(self, "vertical_range", VerticalRange(self.vertical_range))
        if self.end_angle not in END_ANGLES_DEG:
            raise ConfigError(f"end_angle must be one of {END_ANGLES_DEG}, got {self.end_angle}")
        if self.repetition not in REPETITIONS:
            raise ConfigError(f"repetition must be one of {REPETITIONS}, got {self.repetition}")
        if self.duration_frames < 2:
            raise ConfigError(f"duration_frames must be >= 2, got {self.duration_frames}")

    @property
    def sequence_id(self) -> str:
        return f"S{self.subject_id:03d}_{self.vertical_range.value}_A{self.end_angle:02d}_R{self.repetition}"

    @property
    def split(self) -> str:
        return "train" if self.repetition == 1 else "test"


@dataclasses.dataclass(frozen=True)
class SubjectProfile:
    subject_id: int
    stature_mm: float
    segments: Dict[str, float]

    def __post_init__(self):
        missing = set(SEGMENT_FRACTIONS) - set(self.segments)
        if missing:
            raise ConfigError(f"subject {self.subject_id}: missing segments {sorted(missing)}")
        for name, length in self.segments.items():
            if not length > 0:
                raise GeometryError(f"subject {self.subject_id}: segment {name} must be > 0 mm, got {length}")

    @property
    def scale(self) -> float:
        return self.stature_mm / 1750.0

    @property
    def leg_length(self) -> float:
        return self.segments["shank"] + self.segments["thigh"]

    def height(self, name: str) -> float:
        return HEIGHT_FRACTIONS[name] * self.stature_mm


@dataclasses.dataclass(frozen=True)
class RenderStyle:
    image_size: int = 256
    background: float = 0.15
    limb_width_px: float = 4.0
    joint_radius_px: float = 3.0

    @classmethod
    def from_config(cls, cfg: RigConfig) -> "RenderStyle":
        return cls(image_size=cfg.image_size, background=cfg.background,
                   limb_width_px=cfg.limb_width_px, joint_radius_px=cfg.joint_radius_px)


# 4. Subjects & Tasks
def make_subject(subject_id: int, seed: int = 0) -> SubjectProfile:
    """seed/subject_id로 결정되는 신장(1600~1900 mm)과 분절 길이"""
    rng = np.random.default_rng([int(seed), int(subject_id)])
    stature = float(rng.uniform(*STATURE_RANGE_MM))
    segments = {}
    for name, frac in SEGMENT_FRACTIONS.items():
        segments[name] = stature * frac * float(rng.uniform(1.0 - SEGMENT_JITTER, 1.0 + SEGMENT_JITTER))
    return SubjectProfile(subject_id=int(subject_id), stature_mm=stature, segments=segments)


def task_grid(subject_id: int, duration_frames: int = 200, fps: int = 30) -> List[LiftTask]:
    """3 vertical range × 3 end angle × 2 repetition = 18 lifts"""
    return [LiftTask(vr, angle, rep, subject_id, duration_frames, fps)
            for vr in VerticalRange for angle in END_ANGLES_DEG for rep in REPETITIONS]


def default_cameras(cfg: RigConfig) -> List[CameraModel]:
    """피험자를 둘러싼 azimuth 위치의 카메라들 (principal point = 이미지 중심 -> 피험자 중앙 배치)"""
    size = (cfg.image_size, cfg.image_size)
    cameras = []
    for n, azimuth in enumerate(cfg.camera_azimuths_deg):
        theta = np.deg2rad(azimuth)
        position = (cfg.camera_distance_mm * np.cos(theta), cfg.camera_distance_mm * np.sin(theta), cfg.camera_height_mm)
        cameras.append(CameraModel.look_at(position, (0.0, 0.0, cfg.look_at_height_mm), cfg.focal_px, size,
                                           name=f"cam{n}_{int(round(azimuth))}deg"))
    return cameras


# 5. Kinematics
def _rot_z(angle_rad: float) -> np.ndarray:
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def posture_for_height(subject: SubjectProfile, wrist_height: float) -> float:
    top = POSTURE_TOP_FRAC * subject.stature_mm
    return float(np.clip((top - wrist_height) / (POSTURE_SPAN_FRAC * subject.stature_mm), 0.0, 1.0))


def _arm_vectors(subject: SubjectProfile, phi: float) -> Tuple[np.ndarray, np.ndarray]:
    flex = phi + np.deg2rad(ELBOW_FLEX_DEG)
    upper = subject.segments["upper_arm"] * np.array([np.sin(phi), 0.0, -np.cos(phi)])
    fore = subject.segments["forearm"] * np.array([np.sin(flex), 0.0, -np.cos(flex)])
    return upper, fore


def _solve_arm_swing(subject: SubjectProfile, shoulder_z: float, target_z: float) -> float:
    """wrist 높이가 target_z가 되는 어깨 굴곡각 φ (도달 범위 밖이면 경계값)"""
    def wrist_z(phi: float) -> float:
        upper, fore = _arm_vectors(subject, phi)
        return shoulder_z + upper[2] + fore[2]

    lo, hi = np.deg2rad(ARM_SWING_RANGE_DEG[0]), np.deg2rad(ARM_SWING_RANGE_DEG[1])
    z_lo, z_hi = wrist_z(lo), wrist_z(hi)
    if target_z <= z_lo:
        return lo
    if target_z >= z_hi:
        return hi
    return float(brentq(lambda phi: wrist_z(phi) - target_z, lo, hi, xtol=1e-14, rtol=1e-14))


def _leg_ik(ankle: np.ndarray, hip: np.ndarray, shank: float, thigh: float) -> np.ndarray:
    """ankle 고정 2-bone IK. 무릎은 +x(전방) 쪽으로 굽힘"""
    axis = hip - ankle
    d = float(np.linalg.norm(axis))
    if d >= shank + thigh:
        raise GeometryError(f"hip out of reach of the ankle: {d:.3f} mm >= leg {shank + thigh:.3f} mm")
    u = axis / d
    hint = np.array([1.0, 0.0, 0.0])
    n = hint - np.dot(hint, u) * u
    n /= np.linalg.norm(n)
    a = (shank ** 2 - thigh ** 2 + d ** 2) / (2.0 * d)
    h = np.sqrt(max(shank ** 2 - a ** 2, 0.0))
    return ankle + a * u + h * n


def pose_from_params(subject: SubjectProfile, wrist_height: float, posture: float, lean_offset_deg: float,
                     yaw_deg: float) -> Pose3D:
    """
    궤적 파라미터 한 세트 -> 전신 Pose3D.
    발목은 항상 고정, 몸통(hip/neck/head/shoulder/arm)은 pelvis 중심 수직축으로 yaw 회전합니다.
    """
    seg = subject.segments
    s = float(np.clip(posture, 0.0, 1.0))
    ankle_z = ANKLE_HEIGHT_FRAC * subject.stature_mm
    extension = LEG_EXTENSION[0] + (LEG_EXTENSION[1] - LEG_EXTENSION[0]) * s
    pelvis = np.array([-PELVIS_SHIFT * subject.leg_length * s, 0.0, ankle_z + subject.leg_length * extension])

    lean = np.deg2rad(MAX_LEAN_DEG * s + lean_offset_deg)
    head_lean = HEAD_LEAN_RATIO * lean
    lateral = np.array([0.0, 1.0, 0.0])

    neck = pelvis + seg["spine"] * np.array([np.sin(lean), 0.0, np.cos(lean)])
    head = neck + seg["head"] * np.array([np.sin(head_lean), 0.0, np.cos(head_lean)])
    l_shoulder = neck + seg["shoulder_half"] * lateral
    r_shoulder = neck - seg["shoulder_half"] * lateral
    l_hip = pelvis + seg["hip_half"] * lateral
    r_hip = pelvis - seg["hip_half"] * lateral

    phi = _solve_arm_swing(subject, neck[2], wrist_height)
    upper, fore = _arm_vectors(subject, phi)

    coords = np.zeros((NUM_JOINTS, 3))
    coords[JointId.HEAD] = head
    coords[JointId.NECK] = neck
    coords[JointId.L_SHOULDER] = l_shoulder
    coords[JointId.R_SHOULDER] = r_shoulder
    coords[JointId.L_ELBOW] = l_shoulder + upper
    coords[JointId.R_ELBOW] = r_shoulder + upper
    coords[JointId.L_WRIST] = l_shoulder + upper + fore
    coords[JointId.R_WRIST] = r_shoulder + upper + fore
    coords[JointId.L_HIP] = l_hip
    coords[JointId.R_HIP] = r_hip

    trunk = [JointId.HEAD, JointId.NECK, JointId.L_SHOULDER, JointId.R_SHOULDER, JointId.L_ELBOW,
             JointId.R_ELBOW, JointId.L_WRIST, JointId.R_WRIST, JointId.L_HIP, JointId.R_HIP]
    rot = _rot_z(np.deg2rad(yaw_deg))
    coords[trunk] = (coords[trunk] - pelvis) @ rot.T + pelvis

    l_ankle = np.array([0.0, seg["hip_half"], ankle_z])
    r_ankle = np.array([0.0, -seg["hip_half"], ankle_z])
    coords[JointId.L_ANKLE] = l_ankle
    coords[JointId.R_ANKLE] = r_ankle
    coords[JointId.L_KNEE] = _leg_ik(l_ankle, coords[JointId.L_HIP], seg["shank"], seg["thigh"])
    coords[JointId.R_KNEE] = _leg_ik(r_ankle, coords[JointId.R_HIP], seg["shank"], seg["thigh"])
    return Pose3D(coords)


def pelvis_centre(pose: Pose3D) -> np.ndarray:
    return 0.5 * (pose.joint(JointId.L_HIP) + pose.joint(JointId.R_HIP))


def wrist_azimuth_deg(pose: Pose3D) -> float:
    """pelvis 중심 기준 양 손목 중점의 수평 방위각 (시작 자세의 전방 = 0°)"""
    wrist_mid = 0.5 * (pose.joint(JointId.L_WRIST) + pose.joint(JointId.R_WRIST))
    offset = wrist_mid - pelvis_centre(pose)
    return float(np.rad2deg(np.arctan2(offset[1], offset[0])))


def wrist_height(pose: Pose3D) -> float:
    return float(0.5 * (pose.joint(JointId.L_WRIST)[2] + pose.joint(JointId.R_WRIST)[2]))


# 6. Trajectory
def keyframe_params(task: LiftTask, subject: SubjectProfile, seed: int) -> np.ndarray:
    """
    시작/중간/끝 keyframe 파라미터 (3, 4): [wrist_height, posture, lean_offset_deg, yaw_deg].
    repetition마다 다른 seeded 섭동이 들어가며, 끝 yaw는 섭동하지 않습니다 (end angle 보장).
    """
    if task.subject_id != subject.subject_id:
        raise ConfigError(f"task {task.sequence_id} belongs to subject {task.subject_id}, got {subject.subject_id}")
    rng = np.random.default_rng([int(seed), task.subject_id, list(VerticalRange).index(task.vertical_range),
                                 task.end_angle, task.repetition])
    start_name, end_name = task.vertical_range.heights
    h0, h1 = subject.height(start_name), subject.height(end_name)
    h_mid = 0.5 * (h0 + h1) + rng.uniform(-PERTURB_HEIGHT_FRAC, PERTURB_HEIGHT_FRAC) * subject.stature_mm

    rows = []
    for h, yaw in ((h0, 0.0), (h_mid, 0.5 * task.end_angle + rng.uniform(-PERTURB_ANGLE_DEG, PERTURB_ANGLE_DEG)),
                   (h1, float(task.end_angle))):
        posture = np.clip(posture_for_height(subject, h) + rng.uniform(-PERTURB_POSTURE, PERTURB_POSTURE), 0.0, 1.0)
        lean = rng.uniform(-PERTURB_ANGLE_DEG, PERTURB_ANGLE_DEG)
        rows.append([h, posture, lean, yaw])
    return np.array(rows)


def generate_lift_trajectory(task: LiftTask, subject: SubjectProfile, seed: int) -> List[Pose3D]:
    """
    keyframe 파라미터를 clamped cubic spline(C¹, 양 끝 속도 0)으로 보간한 전신 궤적.
    발목 고정, 손목 높이는 task의 시작/끝 높이 사이를 이동, 마지막 프레임 손목 방위각 = end_angle.
    """
    keys = keyframe_params(task, subject, seed)
    spline = CubicSpline(KEYFRAME_TIMES, keys, axis=0, bc_type="clamped")
    times = np.linspace(0.0, 1.0, task.duration_frames)
    params = spline(times)
    params[0], params[-1] = keys[0], keys[-1]
    return [pose_from_params(subject, *row) for row in params]


# 7. Rendering
def _bone_limb(parent: int, child: int) -> str:
    child = JointId(child)
    if child == JointId.HEAD:
        return "head"
    if child in (JointId.L_ELBOW, JointId.L_WRIST):
        return "left_arm"
    if child in (JointId.R_ELBOW, JointId.R_WRIST):
        return "right_arm"
    if child in (JointId.L_KNEE, JointId.L_ANKLE):
        return "left_leg"
    if child in (JointId.R_KNEE, JointId.R_ANKLE):
        return "right_leg"
    return "torso"


def _segment_distance(xs: np.ndarray, ys: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(np.dot(ab, ab))
    if denom == 0.0:
        return np.hypot(xs - a[0], ys - a[1])
    t = np.clip(((xs - a[0]) * ab[0] + (ys - a[1]) * ab[1]) / denom, 0.0, 1.0)
    return np.hypot(xs - (a[0] + t * ab[0]), ys - (a[1] + t * ab[1]))


def _blend(img: np.ndarray, alpha: np.ndarray, colour: Sequence[float]) -> None:
    mask = alpha > 0
    if not np.any(mask):
        return
    img[mask] = img[mask] * (1.0 - alpha[mask, None]) + np.asarray(colour) * alpha[mask, None]


def render_view(p: Optional[Pose3D], cam: CameraModel, style: RenderStyle = RenderStyle()) -> np.ndarray:
    """
    stick-figure 렌더링 (H, W, 3) float64 [0, 1]. 먼 뼈부터 그리는 painter's order, 거리장 기반 anti-aliasing.
    p가 None이면 배경만 그립니다.

    Raises:
        GeometryError: 카메라 뒤에 있는 관절
    """
    width, height = cam.image_size
    img = np.full((height, width, 3), style.background, dtype=np.float64)
    if p is None:
        return img

    pixels = project_to_view(p, cam).coords
    depth = cam.to_camera_frame(p.coords)[:, 2]
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)

    half_width = style.limb_width_px / 2.0
    order = sorted(BONES, key=lambda bone: -(depth[bone[0]] + depth[bone[1]]))
    for parent, child in order:
        dist = _segment_distance(xs, ys, pixels[parent], pixels[child])
        _blend(img, np.clip(half_width + 0.5 - dist, 0.0, 1.0), LIMB_COLOURS[_bone_limb(parent, child)])

    for j in np.argsort(-depth, kind="stable"):
        dist = np.hypot(xs - pixels[j, 0], ys - pixels[j, 1])
        _blend(img, np.clip(style.joint_radius_px + 0.5 - dist, 0.0, 1.0), JOINT_COLOUR)

    return np.clip(img, 0.0, 1.0)


def apply_occluder(img: np.ndarray, region: Tuple[int, int, int, int], pose2d: Optional[Pose2D] = None,
                   seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """
    region = (x0, y0, x1, y1) 반열린 구간 [x0, x1) × [y0, y1)을 체커 패턴 distractor로 덮습니다.

    Returns:
        (가려진 이미지 사본, 관절별 occluded 플래그 (J,))
    """
    out = np.array(img, dtype=np.float64, copy=True)
    flags = np.zeros(NUM_JOINTS, dtype=bool)
    height, width = out.shape[:2]
    x0, y0 = max(int(region[0]), 0), max(int(region[1]), 0)
    x1, y1 = min(int(region[2]), width), min(int(region[3]), height)
    if x1 <= x0 or y1 <= y0:
        return out, flags

    rng = np.random.default_rng(int(seed))
    colours = rng.uniform(0.0, 1.0, size=(2, 3))
    cell = max((x1 - x0) // 4, 2)
    yy, xx = np.mgrid[y0:y1, x0:x1]
    checker = ((xx - x0) // cell + (yy - y0) // cell) % 2
    out[y0:y1, x0:x1] = colours[checker]

    if pose2d is not None:
        cx, cy = pose2d.coords[:, 0], pose2d.coords[:, 1]
        flags = (cx >= x0) & (cx < x1) & (cy >= y0) & (cy < y1)
    return out, flags


def occluder_region_for(pose2d: Pose2D, joint: int, size_px: int, rng: np.random.Generator) -> Tuple[int, int, int, int]:
    """관절 하나를 덮는 정사각형 영역 (중심은 관절 주변 ±size/4 jitter)"""
    jitter = rng.uniform(-size_px / 4.0, size_px / 4.0, size=2)
    cx, cy = pose2d.coords[joint] + jitter
    x0, y0 = int(np.floor(cx - size_px / 2.0)), int(np.floor(cy - size_px / 2.0))
    return x0, y0, x0 + size_px, y0 + size_px
