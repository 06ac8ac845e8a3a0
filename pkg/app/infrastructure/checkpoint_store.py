"""
Flat binary codec for named float64 arrays.
이름 붙은 float64 배열 묶음을 단일 바이너리 파일로 저장/복원합니다.

파일 구조 (little-endian):
    magic(8B) | version(u32) | count(u32)
    count x [ name_len(u16) | name(utf-8) | ndim(u8) | dims(u64 x ndim) ]
    payload: 각 배열의 float64 row-major 데이터를 테이블 순서대로 이어붙임
"""
import os
import struct
from pathlib import Path
from typing import Dict, Union

import numpy as np

from app.core.exceptions import GracError
from app.core.logging import get_logger

logger = get_logger(__name__)

MAGIC = b"GRACCKPT"
VERSION = 1


class CheckpointFormatError(GracError):
    """체크포인트 파일이 손상되었거나 형식이 다를 때."""


def encode(arrays: Dict[str, np.ndarray]) -> bytes:
    header = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    payload = []
    for name, value in arrays.items():
        data = np.asarray(value, dtype="<f8")
        raw_name = name.encode("utf-8")
        header.append(struct.pack("<H", len(raw_name)))
        header.append(raw_name)
        header.append(struct.pack("<B", data.ndim))
        header.append(struct.pack(f"<{data.ndim}Q", *data.shape))
        payload.append(data.tobytes(order="C"))
    return b"".join(header + payload)


def decode(blob: bytes) -> Dict[str, np.ndarray]:
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointFormatError("Not a checkpoint file (bad magic)")
    offset = len(MAGIC)
    try:
        version, count = struct.unpack_from("<II", blob, offset)
        if version != VERSION:
            raise CheckpointFormatError(f"Unsupported checkpoint version {version}")
        offset += 8

        table = []
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset: offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            shape = struct.unpack_from(f"<{ndim}Q", blob, offset)
            offset += 8 * ndim
            table.append((name, tuple(int(d) for d in shape)))

        arrays: Dict[str, np.ndarray] = {}
        for name, shape in table:
            n = int(np.prod(shape)) if shape else 1
            chunk = blob[offset: offset + 8 * n]
            if len(chunk) != 8 * n:
                raise CheckpointFormatError(f"Truncated payload for '{name}'")
            arrays[name] = np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(shape)
            offset += 8 * n
    except struct.error as e:
        raise CheckpointFormatError(f"Truncated checkpoint header: {e}")

    if offset != len(blob):
        raise CheckpointFormatError("Trailing bytes after checkpoint payload")
    return arrays


def save_checkpoint(path: Union[str, Path], arrays: Dict[str, np.ndarray]) -> Path:
    """
    임시 파일에 쓴 뒤 교체하므로 중간에 죽어도 이전 체크포인트는 온전합니다.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = path.with_suffix(path.suffix + ".tmp")
    with open(tmp_path, "wb") as f:
        f.write(encode(arrays))
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp_path, path)
    logger.debug(f"Checkpoint written: {path} ({len(arrays)} arrays)")
    return path


def load_checkpoint(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    path = Path(path)
    with open(path, "rb") as f:
        arrays = decode(f.read())
    logger.debug(f"Checkpoint loaded: {path} ({len(arrays)} arrays)")
    return arrays
