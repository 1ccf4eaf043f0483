"""Attention-map baseline: one box per image from per-head CLS attention.

Binarize a head's attention by keeping the floor(0.6 * N) largest entries,
take the largest 4-connected component, and box it with the same patch-to-pixel
mapping as the main pipeline. Head choice is either fixed, by biggest connected
component (bcc), or by highest average IoU against the other heads' boxes
(haiou).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boxes import PixelBox, patch_rect_to_pixels
from .evalmetrics import iou
from .localize import PatchMask, connected_components
from .tensorio import AttentionStack, ImageManifest

DEFAULT_FIXED_HEAD = 4

STRATEGIES = ("fixed", "bcc", "haiou")


class EmptyMaskError(ValueError):
    """floor(0.6 * N) is zero, so binarization selects nothing (N == 1)."""


@dataclass(frozen=True)
class HeadSelection:
    strategy: str
    head: int | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown head selection {self.strategy!r}")
        if self.strategy == "fixed":
            if self.head is None or self.head < 0:
                raise ValueError("fixed head selection needs a head index >= 0")
        elif self.head is not None:
            raise ValueError(f"{self.strategy} selection takes no head index")

    @classmethod
    def parse(cls, text: str) -> "HeadSelection":
        """Parse a CLI token: a head index, "bcc", or "haiou"."""
        if text in ("bcc", "haiou"):
            return cls(text)
        try:
            return cls("fixed", int(text))
        except ValueError:
            raise ValueError(
                f"head selection must be an integer, 'bcc' or 'haiou', got {text!r}"
            ) from None


def binarize_head(att: AttentionStack, head: int) -> PatchMask:
    """Exactly floor(0.6 * N) true bits: largest values first, ties by ascending index."""
    if not 0 <= head < att.heads:
        raise IndexError(f"head {head} out of range [0, {att.heads})")
    n = att.num_patches
    threshold_count = (3 * n) // 5  # floor(0.6 * N), exact in integer arithmetic
    if threshold_count == 0:
        raise EmptyMaskError(f"floor(0.6 * N) = 0 for N = {n}; nothing to binarize")
    values = att.data[head]
    order = np.argsort(-values, kind="stable")  # stable keeps ascending index on ties
    bits = np.zeros(n, dtype=bool)
    bits[order[:threshold_count]] = True
    return PatchMask(att.grid_h, att.grid_w, bits)


def _largest_component(mask: PatchMask) -> np.ndarray:
    comps = connected_components(mask)
    best = comps[0]
    for comp in comps[1:]:
        if len(comp) > len(best):  # ties keep the earlier (smaller min index) component
            best = comp
    return best


def head_box(att: AttentionStack, head: int, manifest: ImageManifest) -> PixelBox:
    """Box of the largest connected component of one head's binarized attention."""
    if (att.grid_h, att.grid_w) != (manifest.grid_h, manifest.grid_w):
        raise ValueError(
            f"attention grid {att.grid_h}x{att.grid_w} does not match manifest grid "
            f"{manifest.grid_h}x{manifest.grid_w}"
        )
    component = _largest_component(binarize_head(att, head))
    rows = component // att.grid_w
    cols = component % att.grid_w
    return patch_rect_to_pixels(
        int(rows.min()), int(rows.max()), int(cols.min()), int(cols.max()),
        manifest.patch_size, manifest.image_w, manifest.image_h,
    )


def select_head_box(att: AttentionStack, manifest: ImageManifest, sel: HeadSelection) -> PixelBox:
    if sel.strategy == "fixed":
        return head_box(att, sel.head, manifest)

    if sel.strategy == "bcc":
        sizes = [len(_largest_component(binarize_head(att, h))) for h in range(att.heads)]
        chosen = int(np.argmax(sizes))  # argmax keeps the lowest head index on ties
        return head_box(att, chosen, manifest)

    boxes = [head_box(att, h, manifest) for h in range(att.heads)]
    if len(boxes) == 1:
        return boxes[0]
    mean_ious = [
        float(np.mean([iou(boxes[h], boxes[o]) for o in range(att.heads) if o != h]))
        for h in range(att.heads)
    ]
    return boxes[int(np.argmax(mean_ious))]
