"""Reader and writer for the IDX format used by the MNIST distribution."""
import gzip
import struct
from pathlib import Path

import numpy as np

from .errors import RuleheadError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class IdxFormatError(RuleheadError):
    pass


def _open(path):
    path = Path(path)
    with open(path, "rb") as fh:
        gz = fh.read(2) == b"\x1f\x8b"
    return gzip.open(path, "rb") if gz else open(path, "rb")


def read_idx(path, expect_magic=None) -> np.ndarray:
    """Read an unsigned-byte IDX array, optionally gzip-compressed."""
    with _open(path) as fh:
        header = fh.read(4)
        if len(header) < 4:
            raise IdxFormatError(f"{path}: truncated header")
        (magic,) = struct.unpack(">I", header)
        if expect_magic is not None and magic != expect_magic:
            raise IdxFormatError(f"{path}: magic {magic:#010x}, expected {expect_magic:#010x}")
        if magic >> 8 != 0x08:
            raise IdxFormatError(f"{path}: only unsigned-byte IDX data is supported")
        ndim = magic & 0xFF
        dims = struct.unpack(f">{ndim}I", fh.read(4 * ndim))
        data = np.frombuffer(fh.read(), dtype=np.uint8)
    if data.size != int(np.prod(dims)):
        raise IdxFormatError(f"{path}: expected {int(np.prod(dims))} bytes, found {data.size}")
    return data.reshape(dims)


def read_images(path) -> np.ndarray:
    arr = read_idx(path, IMAGES_MAGIC)
    return arr


def read_labels(path) -> np.ndarray:
    return read_idx(path, LABELS_MAGIC)


def write_idx(path, array):
    array = np.ascontiguousarray(array, dtype=np.uint8)
    header = struct.pack(">I", 0x0800 | array.ndim) + struct.pack(f">{array.ndim}I", *array.shape)
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as fh:
        fh.write(header + array.tobytes())
