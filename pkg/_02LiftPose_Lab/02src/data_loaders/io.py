"""
@Title: I/O Utilities
@Description: CSV/YAML/PNG/체크포인트 읽기·쓰기 공통 유틸리티 (폴더 자동 생성, 경로가 포함된 에러, 쓰기 재시도)
@Author: Allen
@Date: 2026-10-18
"""

# 1. Imports
import sys
import json
import struct
import logging
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np
import pandas as pd
import torch
import yaml
from PIL import Image
from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_fixed

# 상위(02src) 디렉토리의 config.py를 참조하기 위한 경로 설정
CURRENT_DIR = Path(__file__).resolve().parent
SRC_DIR = CURRENT_DIR.parent
if str(SRC_DIR) not in sys.path:
    sys.path.append(str(SRC_DIR))

import config
from errors import ConfigError, DataIOError

# 2. Constants
MODULE_TAG = "[IO]"
CHECKPOINT_MAGIC = b"LPCK"
logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

_write_retry = retry(
    retry=retry_if_exception_type(OSError),
    stop=stop_after_attempt(3),
    wait=wait_fixed(0.2),
    reraise=True,
)


# 3. Helper Functions
def _ensure_parent(path_obj: Path) -> None:
    if not path_obj.parent.exists():
        path_obj.parent.mkdir(parents=True, exist_ok=True)
        logger.info(f"📂 {MODULE_TAG} 폴더 생성됨: {path_obj.parent}")


def _require(path_obj: Path) -> None:
    if not path_obj.exists():
        raise DataIOError(f"{MODULE_TAG} 파일을 찾을 수 없습니다", str(path_obj))


@_write_retry
def _write_bytes(path_obj: Path, payload: bytes) -> None:
    with open(path_obj, "wb") as f:
        f.write(payload)


# 4. Main Functions
def load_csv(file_path: PathLike, encoding: str = config.ENCODING_STD, **kwargs) -> pd.DataFrame:
    """
    CSV 파일을 로드합니다.

    Raises:
        DataIOError: 파일이 없거나 읽을 수 없는 경우 (경로 포함)
    """
    path_obj = Path(file_path)
    _require(path_obj)
    try:
        return pd.read_csv(path_obj, encoding=encoding, **kwargs)
    except (OSError, UnicodeDecodeError, pd.errors.ParserError) as e:
        raise DataIOError(f"{MODULE_TAG} CSV 로드 실패: {e}", str(path_obj))


def save_csv(df: pd.DataFrame, file_path: PathLike, encoding: str = config.ENCODING_STD, index: bool = False) -> None:
    """
    DataFrame을 CSV로 저장합니다. 부모 디렉토리가 없으면 생성합니다.
    같은 DataFrame은 항상 같은 바이트로 저장됩니다 (float repr, '\\n' 줄바꿈).
    """
    path_obj = Path(file_path)
    _ensure_parent(path_obj)
    try:
        payload = df.to_csv(index=index, lineterminator="\n").encode(encoding)
        _write_bytes(path_obj, payload)
        logger.info(f"💾 {MODULE_TAG} 저장 완료: {path_obj.name}")
    except OSError as e:
        raise DataIOError(f"{MODULE_TAG} 저장 실패: {e}", str(path_obj))


def load_yaml(file_path: PathLike) -> Any:
    path_obj = Path(file_path)
    _require(path_obj)
    try:
        with open(path_obj, "r", encoding="utf-8") as f:
            return yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as e:
        raise DataIOError(f"{MODULE_TAG} YAML 로드 실패: {e}", str(path_obj))


def save_yaml(data: Any, file_path: PathLike) -> None:
    path_obj = Path(file_path)
    _ensure_parent(path_obj)
    try:
        text = yaml.safe_dump(data, sort_keys=False, allow_unicode=True, default_flow_style=None, width=120)
        _write_bytes(path_obj, text.encode("utf-8"))
        logger.info(f"💾 {MODULE_TAG} 저장 완료: {path_obj.name}")
    except OSError as e:
        raise DataIOError(f"{MODULE_TAG} 저장 실패: {e}", str(path_obj))


def save_png(image: np.ndarray, file_path: PathLike) -> None:
    """[0, 1] float (H, W, 3) 이미지를 8-bit PNG로 저장"""
    path_obj = Path(file_path)
    _ensure_parent(path_obj)
    pixels = np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    try:
        _save_image(Image.fromarray(pixels), path_obj)
    except OSError as e:
        raise DataIOError(f"{MODULE_TAG} PNG 저장 실패: {e}", str(path_obj))


@_write_retry
def _save_image(img: Image.Image, path_obj: Path) -> None:
    img.save(path_obj, format="PNG")


def load_png(file_path: PathLike) -> np.ndarray:
    """8-bit PNG -> [0, 1] float64 (H, W, 3)"""
    path_obj = Path(file_path)
    _require(path_obj)
    try:
        with Image.open(path_obj) as img:
            return np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    except OSError as e:
        raise DataIOError(f"{MODULE_TAG} PNG 로드 실패: {e}", str(path_obj))


def save_checkpoint(file_path: PathLike, header: Dict[str, Any], state: Dict[str, torch.Tensor]) -> None:
    """
    자기 기술형(self-describing) 체크포인트 컨테이너를 저장합니다.

    Layout:
        b"LPCK" | uint32 version | uint64 header_len | header JSON (utf-8) | little-endian array bytes
        header["arrays"] = [{name, dtype, shape, offset, nbytes}, ...] (offset은 payload 시작 기준)
    """
    path_obj = Path(file_path)
    _ensure_parent(path_obj)

    arrays = []
    chunks = []
    offset = 0
    for name, tensor in state.items():
        arr = tensor.detach().cpu().numpy()
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = np.ascontiguousarray(le).tobytes()
        arrays.append({"name": name, "dtype": le.dtype.str, "shape": list(arr.shape), "offset": offset,
                       "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)

    full_header = dict(header, format="liftpose-checkpoint", version=config.CHECKPOINT_FORMAT_VERSION,
                       arrays=arrays)
    header_bytes = json.dumps(full_header, sort_keys=True, default=_json_default).encode("utf-8")
    payload = b"".join([CHECKPOINT_MAGIC, struct.pack("<IQ", config.CHECKPOINT_FORMAT_VERSION, len(header_bytes)),
                        header_bytes] + chunks)
    try:
        _write_bytes(path_obj, payload)
        logger.info(f"💾 {MODULE_TAG} 체크포인트 저장: {path_obj.name} ({len(arrays)} arrays)")
    except OSError as e:
        raise DataIOError(f"{MODULE_TAG} 체크포인트 저장 실패: {e}", str(path_obj))


def load_checkpoint(file_path: PathLike) -> Tuple[Dict[str, Any], Dict[str, torch.Tensor]]:
    """
    Returns:
        (header, state_dict)

    Raises:
        ConfigError: magic/버전이 맞지 않는 경우
    """
    path_obj = Path(file_path)
    _require(path_obj)
    try:
        blob = path_obj.read_bytes()
    except OSError as e:
        raise DataIOError(f"{MODULE_TAG} 체크포인트 로드 실패: {e}", str(path_obj))

    if blob[:4] != CHECKPOINT_MAGIC:
        raise ConfigError(f"{path_obj} is not a liftpose checkpoint")
    version, header_len = struct.unpack("<IQ", blob[4:16])
    if version != config.CHECKPOINT_FORMAT_VERSION:
        raise ConfigError(f"{path_obj}: checkpoint version {version} unsupported "
                          f"(expected {config.CHECKPOINT_FORMAT_VERSION})")
    header = json.loads(blob[16:16 + header_len].decode("utf-8"))
    base = 16 + header_len

    state = {}
    for spec in header["arrays"]:
        start = base + spec["offset"]
        arr = np.frombuffer(blob[start:start + spec["nbytes"]], dtype=np.dtype(spec["dtype"]))
        arr = arr.reshape(spec["shape"]).astype(np.dtype(spec["dtype"]).newbyteorder("="))
        state[spec["name"]] = torch.from_numpy(arr.copy())
    logger.info(f"📂 {MODULE_TAG} 체크포인트 로드: {path_obj.name}")
    return header, state


def _json_default(value: Any) -> Any:
    if hasattr(value, "value"):
        return value.value
    if isinstance(value, tuple):
        return list(value)
    raise TypeError(f"not JSON serialisable: {type(value).__name__}")
