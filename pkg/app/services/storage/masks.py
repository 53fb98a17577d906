"""SMSK saliency-mask files.

Header: b"SMSK", u32 count, u16 height, u16 width (little-endian), then `count`
bitmaps, row-major, 1 bit per pixel, MSB first, each row padded to a byte.
"""

import struct
from pathlib import Path

import numpy as np

from app.core.exceptions import ContractError, FormatError
from .base import BaseStorageService, PathLike

MAGIC = b"SMSK"
_HEADER = struct.Struct("<4sIHH")


class MaskStore(BaseStorageService):
    """Reads and writes per-dataset saliency mask files."""

    def __init__(self):
        super().__init__()

    def write(self, path: PathLike, masks: np.ndarray) -> Path:
        masks = np.asarray(masks)
        if masks.ndim != 3:
            raise ContractError(f"masks must be (N, H, W), got {masks.shape}", error_code="mask_shape")
        count, height, width = masks.shape
        bits = np.packbits(masks.astype(bool), axis=2)
        path = self._write_atomic(path, _HEADER.pack(MAGIC, count, height, width) + bits.tobytes())
        self.logger.info("Mask file written", path=str(path), count=count)
        return path

    def read(self, path: PathLike, expected_count: int = None) -> np.ndarray:
        raw = self._read_bytes(path)
        if len(raw) < _HEADER.size:
            raise FormatError(f"{path}: truncated mask header", error_code="truncated")
        magic, count, height, width = _HEADER.unpack_from(raw, 0)
        if magic != MAGIC:
            raise FormatError(f"{path}: not a mask file (magic {magic!r})", error_code="magic")
        row_bytes = (width + 7) // 8
        expected = _HEADER.size + count * height * row_bytes
        if len(raw) != expected:
            raise FormatError(f"{path}: holds {len(raw)} bytes, expected {expected}", error_code="truncated")
        if expected_count is not None and count != expected_count:
            raise FormatError(
                f"{path}: {count} masks for a dataset of {expected_count} images", error_code="mask_count"
            )
        bits = np.frombuffer(raw, dtype=np.uint8, offset=_HEADER.size).reshape(count, height, row_bytes)
        return np.unpackbits(bits, axis=2, count=width).astype(np.uint8)
