"""Versioned binary containers for checkpoints and mask dumps.

Checkpoint files hold named tensors with per-tensor payload checksums plus
an embedded JSON config blob; mask dumps are a single anonymous float32
tensor.  All integers are little-endian.
"""

import json
import struct
import zlib

import numpy as np

CHECKPOINT_MAGIC = b"WSEDCKPT"
TENSOR_MAGIC = b"WSEDTNSR"
FORMAT_VERSION = 1
CONFIG_KEY = "__config__"

_DTYPE_FLOAT32 = 0
_DTYPE_UINT8 = 1


class FormatError(ValueError):
    """Raised for bad magic, version, truncation or checksum mismatch."""


def _read_exact(fh, count: int, what: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise FormatError(f"truncated file while reading {what}")
    return data


def _write_tensor(fh, name: str, array: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<H", len(encoded)))
    fh.write(encoded)
    if array.dtype == np.uint8:
        code = _DTYPE_UINT8
        payload = array.tobytes()
    else:
        code = _DTYPE_FLOAT32
        payload = np.ascontiguousarray(array, dtype="<f4").tobytes()
    fh.write(struct.pack("<BB", code, array.ndim))
    for dim in array.shape:
        fh.write(struct.pack("<Q", dim))
    fh.write(payload)
    fh.write(struct.pack("<I", zlib.crc32(payload)))


def _read_tensor(fh):
    (name_len,) = struct.unpack("<H", _read_exact(fh, 2, "tensor name length"))
    name = _read_exact(fh, name_len, "tensor name").decode("utf-8")
    code, rank = struct.unpack("<BB", _read_exact(fh, 2, "tensor header"))
    dims = [
        struct.unpack("<Q", _read_exact(fh, 8, "tensor dims"))[0]
        for _ in range(rank)
    ]
    count = int(np.prod(dims, dtype=np.int64)) if dims else 1
    if code == _DTYPE_FLOAT32:
        payload = _read_exact(fh, 4 * count, f"payload of {name}")
        array = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    elif code == _DTYPE_UINT8:
        payload = _read_exact(fh, count, f"payload of {name}")
        array = np.frombuffer(payload, dtype=np.uint8).reshape(dims).copy()
    else:
        raise FormatError(f"unknown dtype code {code} for tensor {name!r}")
    (crc,) = struct.unpack("<I", _read_exact(fh, 4, f"checksum of {name}"))
    if crc != zlib.crc32(payload):
        raise FormatError(f"checksum failure for tensor {name!r}")
    return name, array


def write_checkpoint_file(path, tensors: dict, config: dict) -> None:
    """Named float32 tensors plus a JSON config blob, checksummed."""
    blob = np.frombuffer(
        json.dumps(config, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(tensors) + 1))
        _write_tensor(fh, CONFIG_KEY, blob)
        for name in sorted(tensors):
            _write_tensor(fh, name, tensors[name])


def read_checkpoint_file(path):
    """Returns (tensors dict, config dict)."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 8, "magic")
        if magic != CHECKPOINT_MAGIC:
            raise FormatError(
                f"bad magic {magic!r}; not a checkpoint file"
            )
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
        tensors = {}
        for _ in range(count):
            name, array = _read_tensor(fh)
            tensors[name] = array
    blob = tensors.pop(CONFIG_KEY, None)
    if blob is None:
        raise FormatError("checkpoint is missing its embedded config")
    config = json.loads(blob.tobytes().decode("utf-8"))
    return tensors, config


def write_tensor_file(path, array: np.ndarray) -> None:
    """Single anonymous float32 tensor (mask dump container)."""
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<BB", _DTYPE_FLOAT32, array.ndim))
        for dim in array.shape:
            fh.write(struct.pack("<Q", dim))
        fh.write(np.ascontiguousarray(array, dtype="<f4").tobytes())


def read_tensor_file(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 8, "magic")
        if magic != TENSOR_MAGIC:
            raise FormatError(f"bad magic {magic!r}; not a tensor file")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported tensor file version {version}")
        code, rank = struct.unpack("<BB", _read_exact(fh, 2, "header"))
        if code != _DTYPE_FLOAT32:
            raise FormatError(f"unknown dtype code {code}")
        dims = [
            struct.unpack("<Q", _read_exact(fh, 8, "dims"))[0]
            for _ in range(rank)
        ]
        count = int(np.prod(dims, dtype=np.int64)) if dims else 1
        payload = _read_exact(fh, 4 * count, "payload")
    return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
