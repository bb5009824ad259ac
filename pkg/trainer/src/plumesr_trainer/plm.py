"""Reader/writer for the PLM1 array container.

This is the trainer's interop layer with the simulation pipeline: the format
is magic "PLM1" | u32 LE version=1 | u64 LE json length | UTF-8 JSON |
array payloads back to back (float32 LE row-major, masks uint8), with the
JSON carrying an ordered "arrays" descriptor list of {name, dtype, shape}.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"PLM1"
VERSION = 1

_DTYPES = {"f4": np.dtype("<f4"), "u1": np.dtype("u1")}


def read_plm(path):
    """Return (metadata dict, {name: array}) from a PLM1 file."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic {raw[:4]!r}")
    version = struct.unpack("<I", raw[4:8])[0]
    if version != VERSION:
        raise ValueError(f"{path}: unsupported container version {version}")
    json_len = struct.unpack("<Q", raw[8:16])[0]
    meta = json.loads(raw[16:16 + json_len].decode("utf-8"))
    arrays = {}
    offset = 16 + json_len
    for desc in meta["arrays"]:
        dtype = _DTYPES[desc["dtype"]]
        shape = tuple(desc["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        arrays[desc["name"]] = np.frombuffer(
            raw[offset:offset + nbytes], dtype=dtype).reshape(shape).copy()
        offset += nbytes
    return meta, arrays


def write_plm(path, metadata: dict, arrays) -> None:
    """Write named arrays with metadata; floats stored as f4, masks as u1."""
    if isinstance(arrays, dict):
        arrays = list(arrays.items())
    descriptors = []
    payload = []
    for name, arr in arrays:
        arr = np.ascontiguousarray(arr)
        code = "u1" if arr.dtype in (np.uint8, np.bool_) else "f4"
        descriptors.append({"name": name, "dtype": code, "shape": list(arr.shape)})
        payload.append(arr.astype(_DTYPES[code], copy=False))
    meta = dict(metadata)
    meta["arrays"] = descriptors
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for arr in payload:
            fh.write(arr.tobytes())
