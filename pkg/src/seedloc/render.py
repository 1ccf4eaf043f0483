"""Overlay and degree-heatmap rendering (PIL only, deterministic bytes).

Per image the render command writes two PNGs: an overlay with the seed patch
(red), the seed-only box (yellow) and the final box (purple), and a heatmap of
the inverse patch degrees (dark = many similar patches, bright = few).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .localize import LocalizeResult
from .patchgraph import inverse_degree_field
from .tensorio import ImageManifest

SEED_COLOR = (220, 20, 20)
SEED_BOX_COLOR = (240, 210, 30)
FINAL_BOX_COLOR = (160, 32, 220)

# compact perceptual gradient (dark violet -> teal -> yellow), value in [0, 1]
_GRADIENT = np.array(
    [(68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37)],
    dtype=np.float64,
)


def _colorize(values: np.ndarray) -> np.ndarray:
    """Map values in [0, 1] to uint8 RGB via the gradient."""
    pos = np.clip(values, 0.0, 1.0) * (len(_GRADIENT) - 1)
    low = np.floor(pos).astype(int)
    high = np.minimum(low + 1, len(_GRADIENT) - 1)
    frac = (pos - low)[..., None]
    rgb = _GRADIENT[low] * (1.0 - frac) + _GRADIENT[high] * frac
    return rgb.round().astype(np.uint8)


def degree_heatmap(result: LocalizeResult, manifest: ImageManifest) -> Image.Image:
    """Inverse-degree field, min-max normalized, upscaled to pixel resolution."""
    field = inverse_degree_field(result.degrees).reshape(manifest.grid_h, manifest.grid_w)
    lo, hi = field.min(), field.max()
    normed = (field - lo) / (hi - lo) if hi > lo else np.ones_like(field)
    rgb = _colorize(normed)
    image = Image.fromarray(rgb, "RGB")
    image = image.resize(
        (manifest.grid_w * manifest.patch_size, manifest.grid_h * manifest.patch_size),
        Image.NEAREST,
    )
    return image.crop((0, 0, manifest.image_w, manifest.image_h))


def overlay(image: Image.Image, result: LocalizeResult, manifest: ImageManifest) -> Image.Image:
    out = image.convert("RGB").copy()
    draw = ImageDraw.Draw(out)

    def rect(box, color, width):
        draw.rectangle(
            [box.x_min, box.y_min, box.x_max - 1, box.y_max - 1], outline=color, width=width
        )

    rect(result.box, FINAL_BOX_COLOR, 3)
    if result.seed_only_box is not None:
        rect(result.seed_only_box, SEED_BOX_COLOR, 2)
    p = result.seed
    row, col = divmod(p, manifest.grid_w)
    size = manifest.patch_size
    draw.rectangle(
        [col * size, row * size, (col + 1) * size - 1, (row + 1) * size - 1],
        outline=SEED_COLOR,
        width=2,
    )
    return out


def find_image_file(images_root, image_id: str) -> Path:
    root = Path(images_root)
    for ext in (".jpg", ".jpeg", ".png", ".JPEG", ".JPG", ".PNG"):
        candidate = root / f"{image_id}{ext}"
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"no image file for {image_id!r} under {root}")


def render_image(
    image_path, result: LocalizeResult, manifest: ImageManifest, out_dir
) -> tuple[Path, Path]:
    """Write <id>_overlay.png and <id>_degrees.png; returns both paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with Image.open(image_path) as src:
        overlay_img = overlay(src, result, manifest)
    heat = degree_heatmap(result, manifest)
    overlay_path = out_dir / f"{manifest.image_id}_overlay.png"
    heat_path = out_dir / f"{manifest.image_id}_degrees.png"
    overlay_img.save(overlay_path, format="PNG")
    heat.save(heat_path, format="PNG")
    return overlay_path, heat_path
