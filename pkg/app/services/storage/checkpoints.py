"""Versioned binary checkpoints.

Layout (little-endian):

    b"RLV2" | u32 version | u32 header length | header JSON (utf-8)
    | online + target parameters, declaration order, f64
    | momentum buffers of the online parameters, f64
    | RNG state: i64 root seed, i64 step

The header carries the run config, the step and each tensor's name and shape,
so a file is fully validated before any state is built from it.
"""

import json
import struct
from dataclasses import dataclass
from typing import List

import numpy as np

from app.core.exceptions import ConfigurationError, FormatError
from app.models.config import RunConfig
from app.business.networks import NetworkPair, init_network_pair
from .base import BaseStorageService, PathLike

MAGIC = b"RLV2"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<4sII")
_RNG = struct.Struct("<qq")


@dataclass
class RunState:
    """Everything needed to continue a run."""

    config: RunConfig
    step: int
    seed: int
    net: NetworkPair
    buffers: List[np.ndarray]


class CheckpointStore(BaseStorageService):
    """Reads and writes run checkpoints."""

    def __init__(self):
        super().__init__()

    def encode(self, state: RunState) -> bytes:
        params = state.net.all_parameters()
        header = {
            "config": state.config.model_dump(mode="json"),
            "step": state.step,
            "seed": state.seed,
            "params": [[p.name, list(p.shape)] for p in params],
            "buffers": [list(b.shape) for b in state.buffers],
        }
        header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        parts = [_PREFIX.pack(MAGIC, FORMAT_VERSION, len(header_bytes)), header_bytes]
        parts += [np.ascontiguousarray(p.data, dtype="<f8").tobytes() for p in params]
        parts += [np.ascontiguousarray(b, dtype="<f8").tobytes() for b in state.buffers]
        parts.append(_RNG.pack(state.seed, state.step))
        return b"".join(parts)

    def save(self, path: PathLike, state: RunState) -> None:
        self._write_atomic(path, self.encode(state))
        self.logger.info("Checkpoint saved", path=str(path), step=state.step)

    def decode(self, payload: bytes, source: str = "<bytes>") -> RunState:
        if len(payload) < _PREFIX.size:
            raise FormatError(f"{source}: truncated checkpoint header", error_code="truncated")
        magic, version, header_len = _PREFIX.unpack_from(payload, 0)
        if magic != MAGIC:
            raise FormatError(f"{source}: not a checkpoint (magic {magic!r})", error_code="magic")
        if version != FORMAT_VERSION:
            raise FormatError(
                f"{source}: checkpoint format version {version}, expected {FORMAT_VERSION}",
                error_code="version",
            )
        offset = _PREFIX.size
        if len(payload) < offset + header_len:
            raise FormatError(f"{source}: truncated checkpoint header", error_code="truncated")
        try:
            header = json.loads(payload[offset : offset + header_len].decode("utf-8"))
            config = RunConfig.model_validate(header["config"])
            shapes = [tuple(shape) for _, shape in header["params"]] + [
                tuple(shape) for shape in header["buffers"]
            ]
            step, seed = int(header["step"]), int(header["seed"])
        except (ValueError, KeyError, TypeError, ConfigurationError) as e:
            raise FormatError(f"{source}: unreadable checkpoint header ({e})", error_code="header")
        offset += header_len

        sizes = [int(np.prod(shape)) * 8 for shape in shapes]
        expected = offset + sum(sizes) + _RNG.size
        if len(payload) != expected:
            raise FormatError(
                f"{source}: checkpoint holds {len(payload)} bytes, expected {expected}",
                error_code="truncated",
            )
        arrays = []
        for shape, size in zip(shapes, sizes):
            flat = np.frombuffer(payload, dtype="<f8", count=size // 8, offset=offset)
            arrays.append(flat.reshape(shape).astype(np.float64))
            offset += size
        rng_seed, rng_step = _RNG.unpack_from(payload, offset)
        if (rng_seed, rng_step) != (seed, step):
            raise FormatError(f"{source}: RNG state disagrees with header", error_code="rng_state")

        # Build only after the whole file has been validated
        net = init_network_pair(config.network, seed)
        params = net.all_parameters()
        names = [name for name, _ in header["params"]]
        if [p.name for p in params] != names or [p.shape for p in params] != shapes[: len(params)]:
            raise FormatError(f"{source}: parameters do not match the network spec", error_code="params")
        for p, data in zip(params, arrays):
            p.data = data
        return RunState(config=config, step=step, seed=seed, net=net, buffers=arrays[len(params) :])

    def load(self, path: PathLike) -> RunState:
        state = self.decode(self._read_bytes(path), source=str(path))
        self.logger.info("Checkpoint loaded", path=str(path), step=state.step)
        return state
