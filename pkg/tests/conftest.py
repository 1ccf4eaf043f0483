import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from seedloc import (
    FeatureMap,
    ImageManifest,
    datasets,
    tensorio,
)

from oracles import planted_features

PATCH = 16

# planted-object feature pair: inside-vs-inside positive, inside-vs-outside negative,
# all values dyadic so float arithmetic is exact in any summation order.
OBJECT_VEC = (1.0, 0.5)
BACKGROUND_VEC = (-1.0, 0.25)


def make_manifest(image_id: str, grid_h: int, grid_w: int, patch: int = PATCH,
                  image_w: int | None = None, image_h: int | None = None,
                  feature_files: dict | None = None) -> ImageManifest:
    pad_w, pad_h = grid_w * patch, grid_h * patch
    return ImageManifest(
        image_id=image_id,
        image_w=image_w if image_w is not None else pad_w,
        image_h=image_h if image_h is not None else pad_h,
        pad_w=pad_w,
        pad_h=pad_h,
        patch_size=patch,
        feature_files=feature_files or {},
    )


def planted_case(grid_h=14, grid_w=14, rect=(3, 4, 3, 4)):
    """Feature map + manifest with a planted rectangle; returns expected pixel box too."""
    feats = planted_features(grid_h, grid_w, rect, OBJECT_VEC, BACKGROUND_VEC)
    fm = FeatureMap(grid_h, grid_w, 2, "key", feats)
    manifest = make_manifest("planted", grid_h, grid_w)
    r0, c0, h, w = rect
    expected = (c0 * PATCH, r0 * PATCH, (c0 + w) * PATCH, (r0 + h) * PATCH)
    return fm, manifest, expected


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def fixture_dataset(tmp_path):
    """On-disk dataset of 3 planted images: per-image manifests, feature files,
    attention files, a dataset manifest, and the expected boxes."""
    rects = {
        "img_a": (2, 3, 4, 5),
        "img_b": (0, 0, 3, 3),
        "img_c": (7, 6, 5, 4),
    }
    root = tmp_path / "dataset"
    root.mkdir()
    entries = []
    expected = {}
    for image_id, rect in sorted(rects.items()):
        grid_h = grid_w = 14
        feats = planted_features(grid_h, grid_w, rect, OBJECT_VEC, BACKGROUND_VEC)
        fm = FeatureMap(grid_h, grid_w, 2, "key", feats)
        img_dir = root / image_id
        img_dir.mkdir()
        tensorio.write_feature_map(fm, img_dir / "key.lfea")
        att = np.zeros((2, grid_h * grid_w), dtype=np.float32)
        r0, c0, h, w = rect
        for r in range(r0, r0 + h):
            for c in range(c0, c0 + w):
                att[:, r * grid_w + c] = 1.0
        tensorio.write_attention_stack(
            tensorio.AttentionStack(2, grid_h, grid_w, att), img_dir / "att.latt"
        )
        manifest = make_manifest(
            image_id, grid_h, grid_w,
            feature_files={"key": "key.lfea", "attention": "att.latt"},
        )
        tensorio.write_manifest(manifest, img_dir / "manifest.json")
        entries.append(
            datasets.DatasetEntry(
                image_id, f"{image_id}/manifest.json",
                manifest.image_w, manifest.image_h, split="trainval",
            )
        )
        expected[image_id] = (c0 * PATCH, r0 * PATCH, (c0 + w) * PATCH, (r0 + h) * PATCH)
    manifest_path = root / "dataset.json"
    datasets.write_dataset_manifest(entries, manifest_path)
    return {"root": root, "manifest": manifest_path, "expected": expected}
