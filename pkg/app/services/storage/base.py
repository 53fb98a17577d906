"""Base storage service for common file handling."""

import os
import tempfile
from pathlib import Path
from typing import Union

import structlog

from app.core.exceptions import FormatError

logger = structlog.get_logger()

PathLike = Union[str, Path]


class BaseStorageService:
    """Base storage service with common functionality."""

    def __init__(self):
        self.logger = logger.bind(service=self.__class__.__name__)

    def _read_bytes(self, path: PathLike) -> bytes:
        """Read a whole file, surfacing I/O failures with the path."""
        try:
            return Path(path).read_bytes()
        except OSError as e:
            self.logger.error("Failed to read file", path=str(path), error=str(e))
            raise FormatError(f"{path}: cannot read ({e})", error_code="io")

    def _write_atomic(self, path: PathLike, payload: bytes) -> Path:
        """Write via a temporary sibling and rename, so readers never see a partial file."""
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
            with os.fdopen(fd, "wb") as handle:
                handle.write(payload)
            os.replace(tmp, path)
        except OSError as e:
            self.logger.error("Failed to write file", path=str(path), error=str(e))
            raise FormatError(f"{path}: cannot write ({e})", error_code="io")
        return path
