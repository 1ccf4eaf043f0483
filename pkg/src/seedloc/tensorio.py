"""Bit-exact I/O for patch-feature tensors, attention maps, crop descriptors and manifests.

Wire formats (all integers little-endian uint32, all payloads little-endian
IEEE-754 float32 unless stated otherwise):

    feature file    "LFEA" | version=1 | grid_h | grid_w | dim | kind u8 | 3 pad bytes
                    | f32[grid_h * grid_w * dim]            (kind: 0=key 1=query 2=value)
    attention file  "LATT" | version=1 | heads | grid_h | grid_w
                    | f32[heads * grid_h * grid_w]
    crop file       "LCLS" | version=1 | count | dim
                    | count records of: id_len u32, id bytes (utf-8), f32[dim]

Patch linearization is row-major (p = row * grid_w + col) everywhere in the
toolkit; payload row p holds the feature vector of patch p. Manifests are JSON
documents carrying the image/padding geometry; see ImageManifest.

Loaders reject bad magic, unknown versions, any disagreement between declared
dimensions and payload length, and non-finite values (downstream sign tests are
undefined on NaN). Writers are byte-stable: identical inputs produce identical
files.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FEATURE_MAGIC = b"LFEA"
ATTENTION_MAGIC = b"LATT"
CROPS_MAGIC = b"LCLS"
FORMAT_VERSION = 1

KIND_CODES = {"key": 0, "query": 1, "value": 2}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}

_FEATURE_HEADER = struct.Struct("<4sIIIIB3x")
_ATTENTION_HEADER = struct.Struct("<4sIIII")
_CROPS_HEADER = struct.Struct("<4sIII")
_U32 = struct.Struct("<I")


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Per-image grid of d-dimensional patch features.

    data has shape (grid_h * grid_w, dim), float32, row p = patch p.
    """

    grid_h: int
    grid_w: int
    dim: int
    kind: str
    data: np.ndarray

    def __post_init__(self):
        if self.grid_h < 1 or self.grid_w < 1 or self.dim < 1:
            raise ValueError(
                f"grid {self.grid_h}x{self.grid_w} dim {self.dim}: all must be >= 1"
            )
        if self.kind not in KIND_CODES:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.shape != (self.grid_h * self.grid_w, self.dim):
            raise ValueError(
                f"data shape {arr.shape} does not match grid "
                f"{self.grid_h}x{self.grid_w} with dim {self.dim}"
            )
        if not np.isfinite(arr).all():
            raise ValueError("non-finite value in feature data")
        object.__setattr__(self, "data", arr)

    @property
    def num_patches(self) -> int:
        return self.grid_h * self.grid_w


@dataclass(frozen=True, eq=False)
class AttentionStack:
    """Per-head attention value for every patch; data shape (heads, grid_h * grid_w)."""

    heads: int
    grid_h: int
    grid_w: int
    data: np.ndarray

    def __post_init__(self):
        if self.heads < 1 or self.grid_h < 1 or self.grid_w < 1:
            raise ValueError(
                f"heads {self.heads}, grid {self.grid_h}x{self.grid_w}: all must be >= 1"
            )
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.shape != (self.heads, self.grid_h * self.grid_w):
            raise ValueError(
                f"data shape {arr.shape} does not match {self.heads} heads over "
                f"grid {self.grid_h}x{self.grid_w}"
            )
        if not np.isfinite(arr).all():
            raise ValueError("non-finite value in attention data")
        object.__setattr__(self, "data", arr)

    @property
    def num_patches(self) -> int:
        return self.grid_h * self.grid_w


@dataclass(frozen=True, eq=False)
class CropDescriptor:
    """Global descriptor of one image's box crop.

    Held as float64 in memory (clustering math runs in doubles); the file
    format stores float32, and values read back from disk are exact.
    """

    image_id: str
    vector: np.ndarray

    def __post_init__(self):
        vec = np.ascontiguousarray(self.vector, dtype=np.float64)
        if vec.ndim != 1 or vec.size < 1:
            raise ValueError(f"descriptor vector must be 1-D non-empty, got shape {vec.shape}")
        if not np.isfinite(vec).all():
            raise ValueError(f"non-finite value in descriptor for {self.image_id!r}")
        object.__setattr__(self, "vector", vec)


@dataclass(frozen=True)
class ImageManifest:
    """Geometry and file layout for one extracted image.

    pad_w/pad_h are the padded pixel sizes actually fed to the backbone; both
    are multiples of patch_size and at least the original image size. The patch
    grid is pad / patch_size. feature_files maps a role (key/query/value/
    attention) to a path, normally relative to the manifest's directory.
    """

    image_id: str
    image_w: int
    image_h: int
    pad_w: int
    pad_h: int
    patch_size: int
    feature_files: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.patch_size < 1:
            raise ValueError(f"patch_size {self.patch_size} must be >= 1")
        if self.image_w < 1 or self.image_h < 1:
            raise ValueError(f"image size {self.image_w}x{self.image_h} must be >= 1")
        if self.pad_w < self.image_w or self.pad_h < self.image_h:
            raise ValueError(
                f"padded size {self.pad_w}x{self.pad_h} smaller than image "
                f"{self.image_w}x{self.image_h}"
            )
        if self.pad_w % self.patch_size or self.pad_h % self.patch_size:
            raise ValueError(
                f"padded size {self.pad_w}x{self.pad_h} not a multiple of "
                f"patch_size {self.patch_size}"
            )

    @property
    def grid_w(self) -> int:
        return self.pad_w // self.patch_size

    @property
    def grid_h(self) -> int:
        return self.pad_h // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid_w * self.grid_h


def _read_bytes(path) -> bytes:
    return Path(path).read_bytes()


def _check_header(blob: bytes, magic: bytes, header: struct.Struct, path) -> tuple:
    if len(blob) < 4 or blob[:4] != magic:
        raise ValueError(f"{path}: bad magic, expected {magic!r}")
    if len(blob) < header.size:
        raise ValueError(f"{path}: truncated header ({len(blob)} bytes)")
    fields = header.unpack_from(blob)
    version = fields[1]
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    return fields


def _decode_payload(blob: bytes, offset: int, count: int, path) -> np.ndarray:
    expected = count * 4
    actual = len(blob) - offset
    if actual != expected:
        raise ValueError(
            f"{path}: size mismatch, header declares {expected} payload bytes "
            f"but file carries {actual}"
        )
    arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
    return arr.astype(np.float32, copy=True)


def read_feature_map(path) -> FeatureMap:
    blob = _read_bytes(path)
    _, _, grid_h, grid_w, dim, kind_code = _check_header(
        blob, FEATURE_MAGIC, _FEATURE_HEADER, path
    )
    if kind_code not in KIND_NAMES:
        raise ValueError(f"{path}: unknown feature kind code {kind_code}")
    if grid_h < 1 or grid_w < 1 or dim < 1:
        raise ValueError(f"{path}: invalid dimensions {grid_h}x{grid_w}x{dim}")
    flat = _decode_payload(blob, _FEATURE_HEADER.size, grid_h * grid_w * dim, path)
    if not np.isfinite(flat).all():
        raise ValueError(f"{path}: non-finite value in payload")
    return FeatureMap(grid_h, grid_w, dim, KIND_NAMES[kind_code], flat.reshape(grid_h * grid_w, dim))


def write_feature_map(fm: FeatureMap, path) -> None:
    if not np.isfinite(fm.data).all():
        raise ValueError("non-finite value in feature data")
    header = _FEATURE_HEADER.pack(
        FEATURE_MAGIC, FORMAT_VERSION, fm.grid_h, fm.grid_w, fm.dim, KIND_CODES[fm.kind]
    )
    payload = np.ascontiguousarray(fm.data, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_attention_stack(path) -> AttentionStack:
    blob = _read_bytes(path)
    _, _, heads, grid_h, grid_w = _check_header(blob, ATTENTION_MAGIC, _ATTENTION_HEADER, path)
    if heads < 1 or grid_h < 1 or grid_w < 1:
        raise ValueError(f"{path}: invalid dimensions heads={heads} grid {grid_h}x{grid_w}")
    flat = _decode_payload(blob, _ATTENTION_HEADER.size, heads * grid_h * grid_w, path)
    if not np.isfinite(flat).all():
        raise ValueError(f"{path}: non-finite value in payload")
    return AttentionStack(heads, grid_h, grid_w, flat.reshape(heads, grid_h * grid_w))


def write_attention_stack(stack: AttentionStack, path) -> None:
    if not np.isfinite(stack.data).all():
        raise ValueError("non-finite value in attention data")
    header = _ATTENTION_HEADER.pack(
        ATTENTION_MAGIC, FORMAT_VERSION, stack.heads, stack.grid_h, stack.grid_w
    )
    payload = np.ascontiguousarray(stack.data, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_crop_descriptors(path) -> list[CropDescriptor]:
    blob = _read_bytes(path)
    _, _, count, dim = _check_header(blob, CROPS_MAGIC, _CROPS_HEADER, path)
    if dim < 1:
        raise ValueError(f"{path}: invalid descriptor dim {dim}")
    offset = _CROPS_HEADER.size
    records = []
    for i in range(count):
        if len(blob) - offset < _U32.size:
            raise ValueError(f"{path}: size mismatch, truncated at record {i}")
        (id_len,) = _U32.unpack_from(blob, offset)
        offset += _U32.size
        if len(blob) - offset < id_len + dim * 4:
            raise ValueError(f"{path}: size mismatch, truncated at record {i}")
        image_id = blob[offset : offset + id_len].decode("utf-8")
        offset += id_len
        vec = np.frombuffer(blob, dtype="<f4", count=dim, offset=offset).astype(
            np.float32, copy=True
        )
        offset += dim * 4
        if not np.isfinite(vec).all():
            raise ValueError(f"{path}: non-finite value in record {i} ({image_id!r})")
        records.append(CropDescriptor(image_id, vec))
    if offset != len(blob):
        raise ValueError(f"{path}: size mismatch, {len(blob) - offset} trailing bytes")
    return records


def write_crop_descriptors(descriptors: list[CropDescriptor], path) -> None:
    if not descriptors:
        raise ValueError("cannot write an empty descriptor file (dim would be undefined)")
    dim = descriptors[0].vector.size
    for d in descriptors:
        if d.vector.size != dim:
            raise ValueError(
                f"descriptor dim mismatch: {d.image_id!r} has {d.vector.size}, expected {dim}"
            )
    parts = [_CROPS_HEADER.pack(CROPS_MAGIC, FORMAT_VERSION, len(descriptors), dim)]
    for d in descriptors:
        raw_id = d.image_id.encode("utf-8")
        parts.append(_U32.pack(len(raw_id)))
        parts.append(raw_id)
        parts.append(np.ascontiguousarray(d.vector, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


_MANIFEST_INT_FIELDS = ("image_w", "image_h", "pad_w", "pad_h", "patch_size")


def read_manifest(path) -> ImageManifest:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: malformed manifest: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: manifest must be a JSON object")
    missing = [k for k in ("image_id", *_MANIFEST_INT_FIELDS) if k not in doc]
    if missing:
        raise ValueError(f"{path}: manifest missing fields {missing}")
    for k in _MANIFEST_INT_FIELDS:
        if not isinstance(doc[k], int):
            raise ValueError(f"{path}: manifest field {k} must be an integer")
    feature_files = doc.get("feature_files", {})
    if not isinstance(feature_files, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in feature_files.items()
    ):
        raise ValueError(f"{path}: feature_files must map role names to paths")
    try:
        return ImageManifest(
            image_id=str(doc["image_id"]),
            image_w=doc["image_w"],
            image_h=doc["image_h"],
            pad_w=doc["pad_w"],
            pad_h=doc["pad_h"],
            patch_size=doc["patch_size"],
            feature_files=dict(feature_files),
        )
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc


def write_manifest(manifest: ImageManifest, path) -> None:
    doc = {
        "image_id": manifest.image_id,
        "image_w": manifest.image_w,
        "image_h": manifest.image_h,
        "pad_w": manifest.pad_w,
        "pad_h": manifest.pad_h,
        "patch_size": manifest.patch_size,
        "feature_files": dict(sorted(manifest.feature_files.items())),
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
