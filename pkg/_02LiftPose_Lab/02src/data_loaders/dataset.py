"""
@Title: Synthetic Dataset Writer / Loader
@Description: 합성 리그로 궤적 생성 -> 홀수 프레임 선택 -> 다중 시점 렌더링 -> PNG + index.yaml + records.csv 저장,
              그리고 저장된 데이터셋을 train/test split 단위로 읽어오는 loader
@Author: Allen
@Date: 2026-10-18
"""

# 1. Imports
import sys
import shutil
import logging
import dataclasses
from collections import OrderedDict
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

# 상위 디렉토리 참조 설정
CURRENT_DIR = Path(__file__).resolve().parent
SRC_DIR = CURRENT_DIR.parent
if str(SRC_DIR) not in sys.path:
    sys.path.append(str(SRC_DIR))

import config
from config import RigConfig
from errors import DatasetError, LiftPoseError
from engines.skeleton import (JOINT_NAMES, NUM_JOINTS, CameraModel, NormParams, Pose2D, Pose3D,
                              fit_norm_params, project_to_view)
from engines import rig
from data_loaders import io as local_io

# 2. Constants
MODULE_TAG = "[Dataset]"
SPLITS = ("train", "test")
ALL_SPLIT = "all"
IMAGE_CACHE_LIMIT = 4096         # uint8 PNG 캐시 최대 장수 (256px 기준 약 800MB)
META_COLUMNS = ["seq", "subject", "vertical_range", "end_angle", "repetition", "split", "frame"]
logger = logging.getLogger(__name__)


def image_column(view: int) -> str:
    return f"img_v{view}"


def pose2d_columns(view: int) -> List[str]:
    cols = []
    for name in JOINT_NAMES:
        cols += [f"v{view}_{name}_u", f"v{view}_{name}_v"]
    return cols


def visibility_columns(view: int) -> List[str]:
    return [f"v{view}_{name}_vis" for name in JOINT_NAMES]


def pose3d_columns() -> List[str]:
    cols = []
    for name in JOINT_NAMES:
        cols += [f"p3d_{name}_x", f"p3d_{name}_y", f"p3d_{name}_z"]
    return cols


# 3. Domain Types
@dataclasses.dataclass(frozen=True)
class DatasetRecord:
    """프레임 하나: 시점별 이미지 경로/Pose2D(occlusion 반영 visibility) + Pose3D + task 메타데이터"""
    sequence_id: str
    frame_index: int
    subject_id: int
    vertical_range: str
    end_angle: int
    repetition: int
    split: str
    image_paths: List[Path]
    poses2d: List[Pose2D]
    pose3d: Pose3D


class DatasetSplit:
    """
    index의 한 split (train/test)에서 선택한 시점들만 바라보는 view.
    배열 접근자는 모두 records 순서(seq -> frame)를 따릅니다.
    """

    def __init__(self, index: "DatasetIndex", name: str, frame: pd.DataFrame, views: Sequence[int]):
        self.index = index
        self.name = name
        self.frame = frame.reset_index(drop=True)
        self.views = [int(v) for v in views]

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def norm_params(self) -> NormParams:
        return self.index.norm_params

    @property
    def cameras(self) -> List[CameraModel]:
        return [self.index.cameras[v] for v in self.views]

    @property
    def subjects(self) -> np.ndarray:
        return self.frame["subject"].to_numpy()

    def head(self, n: int) -> "DatasetSplit":
        return DatasetSplit(self.index, self.name, self.frame.iloc[:n], self.views)

    def with_views(self, views: Sequence[int]) -> "DatasetSplit":
        return DatasetSplit(self.index, self.name, self.frame, views)

    def poses3d(self) -> np.ndarray:
        """(F, J, 3) mm"""
        return self.frame[pose3d_columns()].to_numpy(dtype=np.float64).reshape(-1, NUM_JOINTS, 3)

    def normalized3d(self) -> np.ndarray:
        norm = self.index.norm_params
        return (self.poses3d() - norm.min_xyz) / norm.span

    def poses2d(self) -> np.ndarray:
        """(F, V, J, 2) 크롭 이미지 픽셀 좌표"""
        per_view = [self.frame[pose2d_columns(v)].to_numpy(dtype=np.float64).reshape(-1, NUM_JOINTS, 2)
                    for v in self.views]
        return np.stack(per_view, axis=1)

    def visible(self) -> np.ndarray:
        """(F, V, J) bool"""
        return np.stack([self.frame[visibility_columns(v)].to_numpy().astype(bool) for v in self.views], axis=1)

    def load_images(self, rows: Sequence[int]) -> np.ndarray:
        """(B, V, H, W, 3) float64 [0, 1]"""
        batch = []
        for r in rows:
            row = self.frame.iloc[int(r)]
            batch.append(np.stack([self.index.load_image(row[image_column(v)]) for v in self.views]))
        return np.stack(batch)

    def record(self, r: int) -> DatasetRecord:
        row = self.frame.iloc[int(r)]
        poses2d = [Pose2D(row[pose2d_columns(v)].to_numpy(dtype=np.float64).reshape(NUM_JOINTS, 2),
                          row[visibility_columns(v)].to_numpy().astype(bool)) for v in self.views]
        return DatasetRecord(
            sequence_id=row["seq"], frame_index=int(row["frame"]), subject_id=int(row["subject"]),
            vertical_range=row["vertical_range"], end_angle=int(row["end_angle"]),
            repetition=int(row["repetition"]), split=row["split"],
            image_paths=[self.index.root / row[image_column(v)] for v in self.views],
            poses2d=poses2d,
            pose3d=Pose3D(row[pose3d_columns()].to_numpy(dtype=np.float64).reshape(NUM_JOINTS, 3)),
        )


@dataclasses.dataclass
class DatasetIndex:
    root: Path
    cameras: List[CameraModel]
    norm_params: NormParams
    records: pd.DataFrame
    sequences: List[Dict]
    meta: Dict
    cache_images: bool = False
    cache_limit: int = IMAGE_CACHE_LIMIT
    _cache: "OrderedDict[str, np.ndarray]" = dataclasses.field(default_factory=OrderedDict, repr=False)

    @property
    def num_views(self) -> int:
        return len(self.cameras)

    @property
    def image_size(self) -> int:
        return int(self.meta["image_size"])

    def split(self, name: str, views: Optional[Sequence[int]] = None) -> DatasetSplit:
        """
        Args:
            name: 'train' (repetition 1), 'test' (repetition 2), 'all' (pretrain 풀처럼 전체 사용)
            views: 사용할 camera index 목록 (None이면 전체, 오름차순 유지)
        """
        if name not in SPLITS + (ALL_SPLIT,):
            raise DatasetError(f"unknown split {name!r}; expected one of {SPLITS + (ALL_SPLIT,)}")
        views = list(range(self.num_views)) if views is None else sorted(int(v) for v in views)
        for v in views:
            if not 0 <= v < self.num_views:
                raise DatasetError(f"view {v} not in dataset (has {self.num_views} views)")
        frame = self.records if name == ALL_SPLIT else self.records[self.records["split"] == name]
        return DatasetSplit(self, name, frame, views)

    def load_image(self, rel_path: str) -> np.ndarray:
        if self.cache_images and rel_path in self._cache:
            self._cache.move_to_end(rel_path)
            return self._cache[rel_path].astype(np.float64) / 255.0
        img = local_io.load_png(self.root / rel_path)
        if self.cache_images:
            # LRU: cache_limit장을 넘으면 가장 오래 안 쓴 이미지부터 제거
            self._cache[rel_path] = np.rint(img * 255.0).astype(np.uint8)
            while len(self._cache) > self.cache_limit:
                self._cache.popitem(last=False)
        return img


# 4. Writer
def _prepare_out_dir(out_dir: Path, overwrite: bool) -> None:
    if out_dir.exists() and any(out_dir.iterdir()):
        if not overwrite:
            raise DatasetError(f"{out_dir} is not empty; pass overwrite to rebuild")
        for name in (config.DATASET_FILES["index"], config.DATASET_FILES["records"]):
            (out_dir / name).unlink(missing_ok=True)
        shutil.rmtree(out_dir / config.DATASET_FILES["images"], ignore_errors=True)
        logger.warning(f"⚠️ {MODULE_TAG} 기존 데이터셋 덮어쓰기: {out_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)


def _frame_row(task: rig.LiftTask, frame: int, views: List[str], poses2d: List[Pose2D], pose: Pose3D) -> Dict:
    row = {"seq": task.sequence_id, "subject": task.subject_id, "vertical_range": task.vertical_range.value,
           "end_angle": task.end_angle, "repetition": task.repetition, "split": task.split, "frame": frame}
    for n, (path, p2d) in enumerate(zip(views, poses2d)):
        row[image_column(n)] = path
        for j, name in enumerate(JOINT_NAMES):
            row[f"v{n}_{name}_u"] = float(p2d.coords[j, 0])
            row[f"v{n}_{name}_v"] = float(p2d.coords[j, 1])
        for j, name in enumerate(JOINT_NAMES):
            row[f"v{n}_{name}_vis"] = int(p2d.visible[j])
    for j, name in enumerate(JOINT_NAMES):
        row[f"p3d_{name}_x"], row[f"p3d_{name}_y"], row[f"p3d_{name}_z"] = (float(v) for v in pose.coords[j])
    return row


def build_dataset(subjects: Sequence[rig.SubjectProfile], tasks: Sequence[rig.LiftTask],
                  cameras: Sequence[CameraModel], seed: int, out_dir: Path, rig_cfg: RigConfig = RigConfig(),
                  overwrite: bool = False) -> DatasetIndex:
    """
    (subject, task)마다 궤적을 만들고 홀수 프레임만 남겨 모든 시점을 렌더링한 뒤 데이터셋 폴더에 기록합니다.
    repetition 1 -> train, repetition 2 -> test. 같은 seed로 다시 만들면 byte-identical.

    Raises:
        DatasetError: 카메라 없음, 알 수 없는 subject, 비어 있지 않은 out_dir (overwrite 없이)
        DataIOError: 파일 쓰기 실패 (경로 포함)
    """
    if not cameras:
        raise DatasetError("build_dataset needs at least one camera")
    by_id = {s.subject_id: s for s in subjects}
    out_dir = Path(out_dir)
    _prepare_out_dir(out_dir, overwrite)

    style = rig.RenderStyle.from_config(rig_cfg)
    occ = rig_cfg.occlusion
    occluder_px = max(int(round(occ.size_frac * rig_cfg.image_size)), 1)
    images_dir = config.DATASET_FILES["images"]

    rows = []
    poses_by_split: Dict[str, List[Pose3D]] = {name: [] for name in SPLITS}
    sequences = []
    ordered = sorted(tasks, key=lambda t: t.sequence_id)
    logger.info(f"🚀 {MODULE_TAG} 합성 데이터셋 생성 시작: {len(ordered)} sequences × {len(cameras)} views")

    for seq_no, task in enumerate(ordered):
        if task.subject_id not in by_id:
            raise DatasetError(f"task {task.sequence_id} references unknown subject {task.subject_id}")
        subject = by_id[task.subject_id]
        trajectory = rig.generate_lift_trajectory(task, subject, seed)
        kept = list(range(1, len(trajectory), 2))

        for frame in kept:
            pose = trajectory[frame]
            rel_paths, poses2d = [], []
            for n, cam in enumerate(cameras):
                try:
                    p2d = project_to_view(pose, cam)
                    img = rig.render_view(pose, cam, style)
                except LiftPoseError as e:
                    raise DatasetError(f"{task.sequence_id} frame {frame} view {n}: {e}")
                if occ.view == n:
                    occ_rng = np.random.default_rng([int(seed), seq_no, frame])
                    if occ_rng.uniform() < occ.probability:
                        joint = int(occ_rng.integers(NUM_JOINTS))
                        region = rig.occluder_region_for(p2d, joint, occluder_px, occ_rng)
                        img, flags = rig.apply_occluder(img, region, p2d, seed=int(occ_rng.integers(2 ** 31)))
                        p2d = p2d.with_visibility(p2d.visible & ~flags)
                rel = f"{images_dir}/{task.sequence_id}/v{n}/{frame:04d}.png"
                local_io.save_png(img, out_dir / rel)
                rel_paths.append(rel)
                poses2d.append(p2d)
            rows.append(_frame_row(task, frame, rel_paths, poses2d, pose))
            poses_by_split[task.split].append(pose)

        sequences.append({"id": task.sequence_id, "subject": task.subject_id,
                          "stature_mm": round(subject.stature_mm, 6),
                          "vertical_range": task.vertical_range.value, "end_angle": task.end_angle,
                          "repetition": task.repetition, "split": task.split, "num_records": len(kept)})
        logger.info(f"ℹ️ {MODULE_TAG} [{seq_no + 1}/{len(ordered)}] {task.sequence_id}: {len(kept)} frames")

    if rig_cfg.norm_scope == "train":
        fit_pool = poses_by_split["train"]
        if not fit_pool:
            raise DatasetError("norm_scope 'train' needs at least one repetition-1 task")
    else:
        fit_pool = poses_by_split["train"] + poses_by_split["test"]
    norm = fit_norm_params(fit_pool)

    records = pd.DataFrame(rows)
    index_doc = {
        "format_version": config.DATASET_FORMAT_VERSION,
        "image_size": rig_cfg.image_size,
        "seed": int(seed),
        "view_order": list(range(len(cameras))),
        "cameras": [cam.to_dict() for cam in cameras],
        "norm_scope": rig_cfg.norm_scope,
        "occlusion": {"view": occ.view, "probability": occ.probability, "size_frac": occ.size_frac},
        "norm_params": norm.to_dict(),
        "joints": list(JOINT_NAMES),
        "records_file": config.DATASET_FILES["records"],
        "num_records": len(records),
        "splits": {name: [s["id"] for s in sequences if s["split"] == name] for name in SPLITS},
        "sequences": sequences,
    }
    local_io.save_csv(records, out_dir / config.DATASET_FILES["records"])
    local_io.save_yaml(index_doc, out_dir / config.DATASET_FILES["index"])
    logger.info(f"✅ {MODULE_TAG} 데이터셋 저장 완료: {len(records)} records -> {out_dir}")
    return load_dataset(out_dir)


# 5. Loader
def load_dataset(root: Path, verify_images: bool = False, cache_images: bool = False,
                 cache_limit: int = IMAGE_CACHE_LIMIT) -> DatasetIndex:
    """
    index.yaml + records.csv를 읽어 DatasetIndex를 구성합니다.

    Raises:
        DatasetError: 버전 불일치, 필수 항목/컬럼 누락, 참조 이미지 누락(verify_images)
    """
    root = Path(root)
    doc = local_io.load_yaml(root / config.DATASET_FILES["index"])
    if not isinstance(doc, dict):
        raise DatasetError(f"{root}: index document is not a mapping")
    version = doc.get("format_version")
    if version != config.DATASET_FORMAT_VERSION:
        raise DatasetError(f"{root}: dataset format version {version} unsupported "
                           f"(expected {config.DATASET_FORMAT_VERSION})")
    for key in ("cameras", "norm_params", "records_file", "sequences", "image_size"):
        if key not in doc:
            raise DatasetError(f"{root}: index is missing '{key}'")

    cameras = [CameraModel.from_dict(c) for c in doc["cameras"]]
    records = local_io.load_csv(root / doc["records_file"])
    expected = META_COLUMNS + pose3d_columns()
    for n in range(len(cameras)):
        expected += [image_column(n)] + pose2d_columns(n) + visibility_columns(n)
    missing = [c for c in expected if c not in records.columns]
    if missing:
        raise DatasetError(f"{root}: records table missing columns {missing[:5]}")

    if verify_images:
        for n in range(len(cameras)):
            for rel in records[image_column(n)]:
                if not (root / rel).exists():
                    raise DatasetError(f"{root}: referenced image missing: {rel}")

    logger.info(f"📂 {MODULE_TAG} 데이터셋 로드: {len(records)} records, {len(cameras)} views ({root})")
    return DatasetIndex(root=root, cameras=cameras, norm_params=NormParams.from_dict(doc["norm_params"]),
                        records=records, sequences=list(doc["sequences"]), meta=doc, cache_images=cache_images,
                        cache_limit=cache_limit)


def synthesize(rig_cfg: RigConfig, seed: int, out_dir: Path, overwrite: bool = False,
               subject_offset: int = 0) -> DatasetIndex:
    """config의 피험자 수 × 18 task grid로 데이터셋 생성 (pretrain 풀은 subject_offset으로 분리)"""
    subjects = [rig.make_subject(subject_offset + k, seed) for k in range(rig_cfg.num_subjects)]
    tasks = [t for s in subjects for t in rig.task_grid(s.subject_id, rig_cfg.duration_frames, rig_cfg.fps)]
    return build_dataset(subjects, tasks, rig.default_cameras(rig_cfg), seed, out_dir, rig_cfg, overwrite)
