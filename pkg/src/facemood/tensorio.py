"""Dense float32 tensors and the NTC1 binary container for network parameters.

File layout (all integers little-endian):

    magic "NTC1" | u32 version=1 | u32 tensor_count | tensor records

    record: u16 name_len | name UTF-8 | u8 dtype (0 = f32) | u8 ndim
            | ndim x u32 extents | raw row-major f32 payload

Tensors and bundles are immutable after load; concurrent reads are safe.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import CorruptDataError, FormatError, IoError, ShapeError, TopologyError

MAGIC = b"NTC1"
VERSION = 1
DTYPE_F32 = 0

# name -> dims required of a weight bundle; mean equals the network input shape.
BUNDLE_TOPOLOGY: dict[str, tuple[int, ...]] = {
    "conv1.weight": (96, 3, 11, 11),
    "conv1.bias": (96,),
    "conv2.weight": (256, 48, 5, 5),
    "conv2.bias": (256,),
    "conv3.weight": (384, 256, 3, 3),
    "conv3.bias": (384,),
    "conv4.weight": (384, 192, 3, 3),
    "conv4.bias": (384,),
    "conv5.weight": (256, 192, 3, 3),
    "conv5.bias": (256,),
    "fc6.weight": (4096, 9216),
    "fc6.bias": (4096,),
    "mean": (3, 227, 227),
}


@dataclass(frozen=True)
class Tensor:
    """Named, shaped, row-major float32 array."""

    name: str
    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim == 0 or any(d < 1 for d in arr.shape):
            raise ShapeError(f"tensor {self.name!r}: dims must be non-empty, all >= 1")
        object.__setattr__(self, "data", arr)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.data.shape

    def __eq__(self, other) -> bool:
        if not isinstance(other, Tensor):
            return NotImplemented
        return (
            self.name == other.name
            and self.dims == other.dims
            and self.data.tobytes() == other.data.tobytes()
        )


def tensor_slice_channel_group(t: Tensor, group_index: int, group_count: int) -> Tensor:
    """Contiguous channel block of `t` (axis 0) for one convolution group."""
    channels = t.dims[0]
    if channels % group_count != 0:
        raise ShapeError(
            f"tensor {t.name!r}: channel extent {channels} not divisible by {group_count} groups"
        )
    if not 0 <= group_index < group_count:
        raise ShapeError(f"group index {group_index} out of range for {group_count} groups")
    block = channels // group_count
    return Tensor(t.name, t.data[group_index * block : (group_index + 1) * block])


@dataclass(frozen=True)
class WeightBundle:
    """Validated set of pretrained network parameters."""

    tensors: Mapping[str, Tensor] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def validate_topology(self) -> None:
        missing = sorted(set(BUNDLE_TOPOLOGY) - set(self.tensors))
        if missing:
            raise TopologyError(f"bundle is missing tensors: {', '.join(missing)}")
        extra = sorted(set(self.tensors) - set(BUNDLE_TOPOLOGY))
        if extra:
            raise TopologyError(f"bundle has unexpected tensors: {', '.join(extra)}")
        for name, dims in BUNDLE_TOPOLOGY.items():
            got = self.tensors[name].dims
            if got != dims:
                raise TopologyError(f"tensor {name!r}: dims {list(got)} != expected {list(dims)}")


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file while reading {what}")
    return buf


def read_tensors(path) -> dict[str, Tensor]:
    """Read an NTC1 container without topology validation."""
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise IoError(f"cannot open {path}: {exc}") from exc
    with fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != VERSION:
            raise FormatError(f"unsupported version {version}")
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
        tensors: dict[str, Tensor] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, "name length"))
            name = _read_exact(fh, name_len, "name").decode("utf-8")
            dtype, ndim = struct.unpack("<BB", _read_exact(fh, 2, "dtype/ndim"))
            if dtype != DTYPE_F32:
                raise FormatError(f"tensor {name!r}: unsupported dtype {dtype}")
            if ndim == 0:
                raise FormatError(f"tensor {name!r}: zero-dimensional")
            dims = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim, "extents"))
            if any(d < 1 for d in dims):
                raise FormatError(f"tensor {name!r}: extent < 1")
            n = int(np.prod(dims))
            payload = _read_exact(fh, 4 * n, f"payload of {name!r}")
            data = np.frombuffer(payload, dtype="<f4").reshape(dims)
            if not np.isfinite(data).all():
                raise CorruptDataError(f"tensor {name!r} contains non-finite values")
            tensors[name] = Tensor(name, data)
    return tensors


def write_tensors(tensors: Mapping[str, Tensor] | Iterable[Tensor], path) -> None:
    """Write tensors to an NTC1 container, sorted by name for canonical bytes."""
    if isinstance(tensors, Mapping):
        items = [tensors[k] for k in sorted(tensors)]
    else:
        items = sorted(tensors, key=lambda t: t.name)
    try:
        fh = open(path, "wb")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    with fh:
        try:
            fh.write(MAGIC)
            fh.write(struct.pack("<II", VERSION, len(items)))
            for t in items:
                encoded = t.name.encode("utf-8")
                if len(encoded) > 0xFFFF:
                    raise IoError(f"tensor name too long: {t.name[:40]!r}...")
                fh.write(struct.pack("<H", len(encoded)))
                fh.write(encoded)
                fh.write(struct.pack("<BB", DTYPE_F32, len(t.dims)))
                fh.write(struct.pack(f"<{len(t.dims)}I", *t.dims))
                fh.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
        except OSError as exc:
            raise IoError(f"write failed for {path}: {exc}") from exc


def load_bundle(path, raw: bool = False) -> WeightBundle:
    """Load a weight bundle; validates shapes against the network topology.

    `raw=True` skips the topology check, for containers holding arbitrary
    tensors (feature caches, SVM models, test fixtures).
    """
    bundle = WeightBundle(read_tensors(path))
    if not raw:
        bundle.validate_topology()
    return bundle


def save_bundle(bundle: WeightBundle, path) -> None:
    write_tensors(bundle.tensors, path)
