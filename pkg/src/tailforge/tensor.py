"""Dense numeric helpers shared across the toolkit, plus the LTT1 tensor file format.

All arithmetic is float64. LTT1 payloads are float32 on disk::

    b"LTT1" | uint8 rank | rank x uint32 LE dims | float32 LE payload (row-major)
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DegenerateInput, InvalidArgument, ShapeMismatch

MAGIC = b"LTT1"


def _as_vector(x, name="input") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidArgument(f"{name} must be a nonempty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument(f"{name} has non-finite entries")
    return arr


def tempered_softmax(logits, T: float = 1.0) -> np.ndarray:
    """Softmax of ``logits / T`` along the last axis, with max-subtraction.

    Accepts a single vector or a 2-D batch (one row per sample).
    """
    if not T > 0:
        raise InvalidArgument(f"temperature must be positive, got {T}")
    z = np.asarray(logits, dtype=np.float64)
    if z.size == 0 or z.ndim == 0 or z.shape[-1] == 0:
        raise InvalidArgument("logits must be nonempty")
    z = z / T
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_tempered_softmax(logits, T: float = 1.0) -> np.ndarray:
    if not T > 0:
        raise InvalidArgument(f"temperature must be positive, got {T}")
    z = np.asarray(logits, dtype=np.float64) / T
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cosine_similarity(a, b) -> float:
    a = _as_vector(a, "a")
    b = _as_vector(b, "b")
    if a.shape != b.shape:
        raise ShapeMismatch(f"dimension mismatch: {a.size} vs {b.size}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateInput("cosine similarity is undefined for a zero-norm vector")
    return float(np.dot(a, b) / (na * nb))


def class_mean(features) -> np.ndarray:
    arr = np.asarray(features, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise InvalidArgument("class_mean needs a nonempty list of equal-length vectors")
    return arr.mean(axis=0)


def argmax_lowest(x) -> int:
    """Argmax with ties resolved to the lowest index (numpy already guarantees this)."""
    return int(np.argmax(np.asarray(x)))


# -- LTT1 ---------------------------------------------------------------------

def encode_ltt1(array) -> bytes:
    arr = np.asarray(array)
    if arr.ndim > 255:
        raise InvalidArgument("rank must fit in one byte")
    header = MAGIC + struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def decode_ltt1(buf: bytes, expected_rank: int | None = None, source="<bytes>") -> np.ndarray:
    if len(buf) < 5 or buf[:4] != MAGIC:
        raise InvalidArgument(f"{source}: not an LTT1 file (bad magic)")
    rank = buf[4]
    if expected_rank is not None and rank != expected_rank:
        raise ShapeMismatch(f"{source}: header rank {rank}, expected rank {expected_rank}")
    end = 5 + 4 * rank
    if len(buf) < end:
        raise InvalidArgument(f"{source}: truncated LTT1 header")
    shape = struct.unpack(f"<{rank}I", buf[5:end])
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    if len(buf) - end != 4 * count:
        raise ShapeMismatch(
            f"{source}: payload holds {(len(buf) - end) // 4} values, header declares {count}"
        )
    return np.frombuffer(buf, dtype="<f4", offset=end, count=count).reshape(shape).astype(np.float32)


def write_ltt1(path, array) -> None:
    Path(path).write_bytes(encode_ltt1(array))


def read_ltt1(path, expected_rank: int | None = None) -> np.ndarray:
    return decode_ltt1(Path(path).read_bytes(), expected_rank, source=str(path))
