"""Image preprocessing, backbone forwarding, and wire-format writers.

Images are padded with zero pixels (bottom/right) to multiples of the patch
size before normalization, so the patch grid maps back to original pixels
exactly. Writers implement the exchange formats directly (little-endian
headers, float32 payloads); the localization toolkit's loaders are the
consumers.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .model import VisionTransformer, build_model

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

FEATURE_HEADER = struct.Struct("<4sIIIIB3x")
ATTENTION_HEADER = struct.Struct("<4sIIII")
CROPS_HEADER = struct.Struct("<4sIII")
U32 = struct.Struct("<I")

KIND_CODES = {"key": 0, "query": 1, "value": 2}
FEATURE_ROLES = {"keys": "key", "queries": "query", "values": "value"}
ALL_ROLES = (*FEATURE_ROLES, "attention", "crops")

IMAGE_EXTENSIONS = (".jpg", ".jpeg", ".png", ".bmp", ".JPEG", ".JPG", ".PNG")


@dataclass(frozen=True)
class ExtractionJob:
    images: tuple[Path, ...]
    model_name: str
    roles: tuple[str, ...]
    out_root: Path
    weights: str | None = None
    seed: int = 0
    boxes: Path | None = None  # predictions JSONL, required for the crops role

    def __post_init__(self):
        bad = [r for r in self.roles if r not in ALL_ROLES]
        if bad:
            raise ValueError(f"unknown roles {bad}, expected a subset of {ALL_ROLES}")
        if "crops" in self.roles and self.boxes is None:
            raise ValueError("the crops role needs --boxes (a predictions JSONL file)")


def list_images(images_dir) -> tuple[Path, ...]:
    root = Path(images_dir)
    found = sorted(p for p in root.iterdir() if p.suffix in IMAGE_EXTENSIONS)
    if not found:
        raise FileNotFoundError(f"no images under {root}")
    return tuple(found)


def load_image(path) -> Image.Image:
    try:
        image = Image.open(path)
        image.load()
    except (OSError, SyntaxError) as exc:
        raise ValueError(f"cannot decode image {path}: {exc}") from exc
    return image.convert("RGB")


def preprocess(image: Image.Image, patch_size: int) -> tuple[torch.Tensor, int, int]:
    """Zero-pad to multiples of patch_size (bottom/right), then normalize.

    Returns the (1, 3, pad_h, pad_w) tensor and the padded sizes.
    """
    w, h = image.size
    pad_w = ((w + patch_size - 1) // patch_size) * patch_size
    pad_h = ((h + patch_size - 1) // patch_size) * patch_size
    raw = np.asarray(image, dtype=np.float32) / 255.0
    padded = np.zeros((pad_h, pad_w, 3), dtype=np.float32)
    padded[:h, :w] = raw
    mean = np.asarray(IMAGENET_MEAN, dtype=np.float32)
    std = np.asarray(IMAGENET_STD, dtype=np.float32)
    padded = (padded - mean) / std
    tensor = torch.from_numpy(padded.transpose(2, 0, 1))[None]
    return tensor, pad_w, pad_h


def write_feature_file(path, grid_h: int, grid_w: int, kind: str, data: np.ndarray) -> None:
    arr = np.ascontiguousarray(data, dtype="<f4")
    assert arr.shape[0] == grid_h * grid_w
    header = FEATURE_HEADER.pack(b"LFEA", 1, grid_h, grid_w, arr.shape[1], KIND_CODES[kind])
    Path(path).write_bytes(header + arr.tobytes())


def write_attention_file(path, grid_h: int, grid_w: int, data: np.ndarray) -> None:
    arr = np.ascontiguousarray(data, dtype="<f4")
    assert arr.shape[1] == grid_h * grid_w
    header = ATTENTION_HEADER.pack(b"LATT", 1, arr.shape[0], grid_h, grid_w)
    Path(path).write_bytes(header + arr.tobytes())


def write_crops_file(path, records: list[tuple[str, np.ndarray]]) -> None:
    if not records:
        raise ValueError("no crop descriptors to write")
    dim = records[0][1].shape[0]
    parts = [CROPS_HEADER.pack(b"LCLS", 1, len(records), dim)]
    for image_id, vector in records:
        raw = image_id.encode("utf-8")
        parts.append(U32.pack(len(raw)))
        parts.append(raw)
        parts.append(np.ascontiguousarray(vector, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def _captured_features(captured: dict, role: str) -> np.ndarray:
    """Per-head-concatenated last-layer vectors, CLS row dropped: (N, dim)."""
    tensor = captured[role]  # (1, heads, N+1, head_dim)
    tensor = tensor[0].permute(1, 0, 2).reshape(tensor.shape[2], -1)
    return tensor[1:].numpy().astype(np.float32)


def _cls_attention(captured: dict) -> np.ndarray:
    """CLS-query attention onto the patches, per head: (heads, N)."""
    attn = captured["attn"]  # (1, heads, N+1, N+1)
    return attn[0, :, 0, 1:].numpy().astype(np.float32)


def _read_boxes(path) -> dict[str, tuple[float, float, float, float]]:
    boxes = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            boxes[str(row["image_id"])] = (
                float(row["x_min"]), float(row["y_min"]),
                float(row["x_max"]), float(row["y_max"]),
            )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise ValueError(f"{path}:{lineno}: bad prediction line: {exc}") from exc
    return boxes


def _crop_descriptor(model: VisionTransformer, image: Image.Image, box) -> np.ndarray:
    x_min, y_min, x_max, y_max = box
    crop = image.crop((int(x_min), int(y_min), int(x_max), int(y_max)))
    crop = crop.resize((224, 224), Image.BICUBIC)
    tensor, _, _ = preprocess(crop, model.config.patch_size)
    with torch.no_grad():
        cls, _ = model.forward_features(tensor)
    return cls[0].numpy().astype(np.float32)


def extract(job: ExtractionJob) -> Path:
    """Run the backbone over every image and write the requested exports.

    Returns the dataset manifest path. Layout under out_root:
    <image_id>/{manifest.json, key.lfea, query.lfea, value.lfea, attention.latt},
    crops.lcls and dataset.json at the root.
    """
    model = build_model(job.model_name, weights=job.weights, seed=job.seed)
    patch = model.config.patch_size
    out_root = Path(job.out_root)
    out_root.mkdir(parents=True, exist_ok=True)

    boxes = _read_boxes(job.boxes) if "crops" in job.roles else {}
    crop_records: list[tuple[str, np.ndarray]] = []
    dataset_entries = []
    wants_forward = [r for r in job.roles if r != "crops"]

    for path in job.images:
        image_id = path.stem
        image = load_image(path)
        w, h = image.size

        if wants_forward:
            tensor, pad_w, pad_h = preprocess(image, patch)
            grid_h, grid_w = pad_h // patch, pad_w // patch
            with torch.no_grad():
                _, captured = model.forward_features(tensor)

            image_dir = out_root / image_id
            image_dir.mkdir(exist_ok=True)
            feature_files = {}
            for role in job.roles:
                if role in FEATURE_ROLES:
                    kind = FEATURE_ROLES[role]
                    name = f"{kind}.lfea"
                    write_feature_file(
                        image_dir / name, grid_h, grid_w, kind, _captured_features(captured, kind)
                    )
                    feature_files[kind] = name
                elif role == "attention":
                    write_attention_file(image_dir / "attention.latt", grid_h, grid_w,
                                         _cls_attention(captured))
                    feature_files["attention"] = "attention.latt"
            manifest = {
                "image_id": image_id,
                "image_w": w,
                "image_h": h,
                "pad_w": pad_w,
                "pad_h": pad_h,
                "patch_size": patch,
                "feature_files": dict(sorted(feature_files.items())),
            }
            (image_dir / "manifest.json").write_text(
                json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
            dataset_entries.append(
                {"image_id": image_id, "manifest": f"{image_id}/manifest.json",
                 "image_w": w, "image_h": h}
            )

        if "crops" in job.roles:
            if image_id not in boxes:
                raise ValueError(f"no box for image {image_id!r} in {job.boxes}")
            crop_records.append((image_id, _crop_descriptor(model, image, boxes[image_id])))

    if crop_records:
        write_crops_file(out_root / "crops.lcls", crop_records)

    manifest_path = out_root / "dataset.json"
    if wants_forward:
        doc = {"images": sorted(dataset_entries, key=lambda e: e["image_id"])}
        manifest_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                                 encoding="utf-8")
    return manifest_path
