"""Versioned binary container for model parameters, optimizer state, and stats.

Layout (all integers little-endian):

  magic "AFCK" | u32 version=1 | u32 config_len | config JSON (UTF-8)
  u32 tensor_count
  per tensor: u16 name_len | name | u8 rank | u32 dims[rank]
              | f32 payload (row-major) | u32 crc32(payload)
  u32 crc32(everything before this field)

Tensors are written in sorted-name order, so identical contents produce
identical bytes. Values are stored as float32; loading widens to float64, and
a load/save round trip is byte-exact.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ChecksumError,
    ConfigError,
    FileFormatError,
    TruncatedFileError,
    VersionMismatchError,
)
from .model import ModelConfig

CHECKPOINT_MAGIC = b"AFCK"
CHECKPOINT_VERSION = 1

PARAM_PREFIX = "param/"
OPTIM_PREFIX = "optim/"
STATE_PREFIX = "state/"
NORM_PREFIX = "norm/"


@dataclass
class Checkpoint:
    """Config echo plus named tensors (parameters, optimizer caches, norm stats)."""

    config: dict
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def model_config(self) -> ModelConfig:
        return ModelConfig.from_dict(self.config["model"])

    @property
    def epoch(self) -> int:
        return self.config.get("epoch", 0)

    @property
    def best_val_score(self):
        return self.config.get("best_val_score")

    def group(self, prefix: str) -> dict[str, np.ndarray]:
        """Tensors under a namespace, with the prefix stripped."""
        return {
            name[len(prefix) :]: value
            for name, value in self.tensors.items()
            if name.startswith(prefix)
        }


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION)]
    blob = json.dumps(ckpt.config, sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<I", len(blob)))
    parts.append(blob)
    parts.append(struct.pack("<I", len(ckpt.tensors)))
    for name in sorted(ckpt.tensors):
        encoded = name.encode("utf-8")
        # asarray, not ascontiguousarray: the latter promotes rank-0 to rank-1
        tensor = np.asarray(ckpt.tensors[name], dtype="<f4")
        if len(encoded) > 0xFFFF:
            raise FileFormatError(f"tensor name too long: {name!r}")
        if tensor.ndim > 0xFF:
            raise FileFormatError(f"tensor rank {tensor.ndim} exceeds format limit")
        payload = tensor.tobytes()
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", tensor.ndim))
        parts.append(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        parts.append(payload)
        parts.append(struct.pack("<I", zlib.crc32(payload)))
    body = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(struct.pack("<I", zlib.crc32(body)))


def load_checkpoint(path, expect_variant: str | None = None) -> Checkpoint:
    """Read and verify an AFCK file.

    ``expect_variant`` optionally asserts the stored model variant, raising a
    ConfigError naming both variants on mismatch.
    """
    with open(path, "rb") as fh:
        blob = fh.read()

    def need(offset: int, count: int, what: str) -> int:
        if offset + count > len(blob) - 4:  # final 4 bytes are the file CRC
            raise TruncatedFileError(
                f"{path}: {what} needs {count} bytes at offset {offset}, file too short"
            )
        return offset + count

    if len(blob) < 16:
        raise TruncatedFileError(f"{path}: too short for a checkpoint header ({len(blob)} bytes)")
    if blob[:4] != CHECKPOINT_MAGIC:
        raise FileFormatError(f"{path}: bad magic {blob[:4]!r}, expected {CHECKPOINT_MAGIC!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise VersionMismatchError(f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")

    (stored_crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(blob[:-4]) != stored_crc:
        raise ChecksumError(f"{path}: whole-file CRC mismatch")

    offset = 8
    (config_len,) = struct.unpack_from("<I", blob, offset)
    offset = need(offset + 4, config_len, "config blob")
    try:
        config = json.loads(blob[offset - config_len : offset].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FileFormatError(f"{path}: config blob is not valid JSON ({exc})") from None

    offset = need(offset, 4, "tensor count")
    (tensor_count,) = struct.unpack_from("<I", blob, offset - 4)
    tensors: dict[str, np.ndarray] = {}
    for _ in range(tensor_count):
        offset = need(offset, 2, "tensor name length")
        (name_len,) = struct.unpack_from("<H", blob, offset - 2)
        offset = need(offset, name_len, "tensor name")
        name = blob[offset - name_len : offset].decode("utf-8")
        offset = need(offset, 1, "tensor rank")
        rank = blob[offset - 1]
        offset = need(offset, 4 * rank, "tensor dims")
        dims = struct.unpack_from(f"<{rank}I", blob, offset - 4 * rank)
        count = int(np.prod(dims)) if rank else 1
        offset = need(offset, 4 * count, f"tensor {name!r} payload")
        payload = blob[offset - 4 * count : offset]
        offset = need(offset, 4, "tensor checksum")
        (crc,) = struct.unpack_from("<I", blob, offset - 4)
        if zlib.crc32(payload) != crc:
            raise ChecksumError(f"{path}: payload CRC mismatch for tensor {name!r}")
        tensors[name] = (
            np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float64)
        )

    if offset != len(blob) - 4:
        raise FileFormatError(f"{path}: {len(blob) - 4 - offset} unexpected bytes after tensors")

    ckpt = Checkpoint(config=config, tensors=tensors)
    if expect_variant is not None:
        stored = ckpt.config.get("model", {}).get("variant")
        if stored != expect_variant:
            raise ConfigError(
                f"checkpoint holds model variant {stored!r} but {expect_variant!r} was requested"
            )
    return ckpt
