"""Grid/field value types, deterministic RNG, and the PLM1 array container.

Everything downstream (solver, scene composer, dataset builder) shares these
primitives. All types are plain value data: construct, validate, never mutate.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

MAGIC = b"PLM1"
CONTAINER_VERSION = 1

# Dropped pixels are stored as this value; the mask is what records presence.
DROP_SENTINEL = 0.0


# ---------------------------------------------------------------------------
# Field / stack / mask value types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Field:
    """A 2D scalar concentration raster with its grid spacing.

    values has shape (height, width), row-major, float64. dx is the grid
    spacing (same in both axes). Minimum 4 cells per axis so the widest
    stencil in the package always fits.
    """

    values: np.ndarray
    dx: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"field values must be 2D, got shape {v.shape}")
        if v.shape[0] < 4 or v.shape[1] < 4:
            raise ValueError(f"field must be at least 4x4 cells, got {v.shape}")
        if not self.dx > 0:
            raise ValueError(f"dx must be positive, got {self.dx}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class SnapshotStack:
    """Three consecutive concentration snapshots, ordered (t-1, t, t+1).

    The triple is the unit the network and all losses operate on: it is the
    smallest stack supporting one centered time derivative. dt_snap is the
    time spacing between consecutive channels.
    """

    channels: tuple
    dt_snap: float

    def __post_init__(self):
        if len(self.channels) != 3:
            raise ValueError(f"stack needs exactly 3 channels, got {len(self.channels)}")
        f0 = self.channels[0]
        for f in self.channels[1:]:
            if (f.width, f.height) != (f0.width, f0.height) or f.dx != f0.dx:
                raise ValueError("stack channels must share dims and dx")
        if not self.dt_snap > 0:
            raise ValueError(f"dt_snap must be positive, got {self.dt_snap}")
        object.__setattr__(self, "channels", tuple(self.channels))

    @property
    def width(self) -> int:
        return self.channels[0].width

    @property
    def height(self) -> int:
        return self.channels[0].height

    @property
    def dx(self) -> float:
        return self.channels[0].dx

    def as_array(self) -> np.ndarray:
        """Stack the channels into a (3, height, width) float64 array."""
        return np.stack([f.values for f in self.channels])

    @classmethod
    def from_array(cls, arr, dx: float, dt_snap: float) -> "SnapshotStack":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] != 3:
            raise ValueError(f"expected (3, h, w) array, got shape {arr.shape}")
        return cls(tuple(Field(arr[i], dx) for i in range(3)), dt_snap)


@dataclass(frozen=True)
class Mask:
    """Pixel-presence raster: True = present, False = dropped."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.dtype != np.bool_:
            b = b.astype(bool)
        if b.ndim != 2:
            raise ValueError(f"mask must be 2D, got shape {b.shape}")
        object.__setattr__(self, "bits", b)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def present_count(self) -> int:
        return int(np.count_nonzero(self.bits))

    @property
    def dropped_count(self) -> int:
        return self.bits.size - self.present_count


# ---------------------------------------------------------------------------
# Deterministic RNG (splitmix64)
# ---------------------------------------------------------------------------

def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


class Rng64:
    """splitmix64 generator: tiny, bit-exact, identical on every platform.

    The whole pipeline draws randomness from this one recurrence so that
    LR/HR pair generation reproduces exactly across machines. Instances are
    single-owner; fork substreams with derive_seed instead of sharing.
    """

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK64
        return _mix64(self.state)

    def next_f64(self) -> float:
        """Uniform draw in [0, 1): top 53 bits of the next word / 2^53."""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def next_below(self, n: int) -> int:
        """Uniform integer in [0, n). Uses the f64 draw so the mapping is
        the same everywhere the scaling rule is."""
        return int(self.next_f64() * n)


def derive_seed(master: int, index: int) -> int:
    """Derive the index-th substream seed from a master seed.

    splitmix64-finalized mix of master XOR (index * golden ratio constant);
    the finalizer is a bijection and index*odd is injective mod 2^64, so
    distinct indices never collide for a fixed master.
    """
    if index < 0:
        raise ValueError("index must be non-negative")
    return _mix64((master ^ ((index * _GOLDEN) & _MASK64)) & _MASK64)


# ---------------------------------------------------------------------------
# PLM1 container
# ---------------------------------------------------------------------------

class ContainerError(Exception):
    """Base class for PLM1 read/write failures."""


class BadMagicError(ContainerError):
    pass


class VersionMismatchError(ContainerError):
    pass


class TruncatedPayloadError(ContainerError):
    pass


class DescriptorMismatchError(ContainerError):
    pass


_DTYPES = {
    "f4": np.dtype("<f4"),
    "u1": np.dtype("u1"),
}


def _descriptor_for(name: str, arr: np.ndarray) -> dict:
    if arr.dtype == np.bool_ or arr.dtype == np.uint8:
        code = "u1"
    elif arr.dtype.kind == "f":
        code = "f4"
    else:
        raise ContainerError(f"unsupported array dtype {arr.dtype} for '{name}'")
    return {"name": name, "dtype": code, "shape": list(arr.shape)}


def canonical_json(obj) -> str:
    """Serialize metadata deterministically (sorted keys, no whitespace)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def write_container(path, metadata: dict, arrays) -> None:
    """Write named arrays plus JSON metadata to a PLM1 file.

    Layout: magic "PLM1" | u32 LE version | u64 LE json length | UTF-8 JSON |
    array payloads back to back. Float arrays are stored as little-endian
    float32 row-major; masks as uint8 0/1. The metadata's "arrays" key is the
    ordered descriptor list; it is filled in from the payload, and if the
    caller supplied one it must agree.

    arrays: sequence of (name, ndarray) pairs (order is preserved) or a dict.
    """
    if isinstance(arrays, dict):
        arrays = list(arrays.items())
    payload = []
    descriptors = []
    for name, arr in arrays:
        arr = np.ascontiguousarray(arr)
        desc = _descriptor_for(name, arr)
        descriptors.append(desc)
        payload.append(arr.astype(_DTYPES[desc["dtype"]], copy=False))
    meta = dict(metadata)
    if "arrays" in meta and meta["arrays"] != descriptors:
        raise DescriptorMismatchError("metadata array descriptors do not match payload")
    meta["arrays"] = descriptors

    blob = canonical_json(meta).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", CONTAINER_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for arr in payload:
            fh.write(arr.tobytes())


def read_container(path):
    """Read a PLM1 file back into (metadata, {name: array}).

    Arrays come back with their stored dtypes (float32 / uint8), so a write
    of float32 data round-trips bit-exactly.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16:
        raise TruncatedPayloadError(f"{path}: file shorter than header")
    if raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {raw[:4]!r}")
    version = struct.unpack("<I", raw[4:8])[0]
    if version != CONTAINER_VERSION:
        raise VersionMismatchError(f"{path}: version {version}, expected {CONTAINER_VERSION}")
    json_len = struct.unpack("<Q", raw[8:16])[0]
    if len(raw) < 16 + json_len:
        raise TruncatedPayloadError(f"{path}: truncated metadata block")
    try:
        meta = json.loads(raw[16:16 + json_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DescriptorMismatchError(f"{path}: unreadable metadata ({exc})") from exc
    descriptors = meta.get("arrays")
    if not isinstance(descriptors, list):
        raise DescriptorMismatchError(f"{path}: metadata missing array descriptors")

    arrays = {}
    offset = 16 + json_len
    for desc in descriptors:
        try:
            name, code, shape = desc["name"], desc["dtype"], tuple(desc["shape"])
        except (KeyError, TypeError) as exc:
            raise DescriptorMismatchError(f"{path}: malformed descriptor {desc!r}") from exc
        if code not in _DTYPES:
            raise DescriptorMismatchError(f"{path}: unknown dtype code {code!r}")
        dtype = _DTYPES[code]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if offset + nbytes > len(raw):
            raise TruncatedPayloadError(f"{path}: array '{name}' truncated")
        arrays[name] = np.frombuffer(raw[offset:offset + nbytes], dtype=dtype).reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise DescriptorMismatchError(
            f"{path}: {len(raw) - offset} trailing bytes beyond declared arrays")
    return meta, arrays
