"""Little-endian binary tensor format.

Layout: magic ``VSSLT``, u32 version (1), u32 rank, u64 extents[rank],
then float64 elements in row-major order.
"""

import io
import struct

import numpy as np

from ..errors import BadMagicError, TruncatedFileError, VersionMismatchError
from .tensor import Tensor

TENSOR_MAGIC = b"VSSLT"
TENSOR_VERSION = 1


def read_exact(f, n: int, what: str = "data") -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise TruncatedFileError(f"truncated: expected {n} bytes of {what}, got {len(buf)}")
    return buf


def check_magic(f, magic: bytes) -> None:
    got = f.read(len(magic))
    if len(got) < len(magic) and magic.startswith(got):
        raise TruncatedFileError(f"truncated: file ends inside the {magic!r} magic")
    if got != magic:
        raise BadMagicError(f"bad magic: expected {magic!r}, found {got!r}")


def write_tensor(f, t) -> None:
    arr = t.data if isinstance(t, Tensor) else np.asarray(t, dtype=np.float64)
    f.write(TENSOR_MAGIC)
    f.write(struct.pack("<II", TENSOR_VERSION, arr.ndim))
    f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_array(f) -> np.ndarray:
    check_magic(f, TENSOR_MAGIC)
    version, rank = struct.unpack("<II", read_exact(f, 8, "tensor header"))
    if version != TENSOR_VERSION:
        raise VersionMismatchError(f"tensor version {version}, expected {TENSOR_VERSION}")
    shape = struct.unpack(f"<{rank}Q", read_exact(f, 8 * rank, "tensor extents"))
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    raw = read_exact(f, 8 * count, "tensor elements")
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)


def read_tensor(f) -> Tensor:
    return Tensor(read_array(f))


def tensor_to_bytes(t) -> bytes:
    buf = io.BytesIO()
    write_tensor(buf, t)
    return buf.getvalue()


def tensor_from_bytes(data: bytes) -> Tensor:
    return read_tensor(io.BytesIO(data))
