"""Pixel-space boxes and the patch-grid to pixel mapping shared by all box producers."""

from __future__ import annotations

from dataclasses import dataclass


class DegenerateBoxError(ValueError):
    """Clipping to the unpadded image left an empty box (component wholly in padding)."""


@dataclass(frozen=True)
class PixelBox:
    """Half-open pixel rectangle [x_min, x_max) x [y_min, y_max)."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float
    score: float = 1.0
    label: int | None = None

    def __post_init__(self):
        if not (0 <= self.x_min < self.x_max and 0 <= self.y_min < self.y_max):
            raise ValueError(
                f"invalid box ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def corners(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def with_label(self, label: int) -> "PixelBox":
        return PixelBox(self.x_min, self.y_min, self.x_max, self.y_max, self.score, label)


def patch_rect_to_pixels(
    r0: int,
    r1: int,
    c0: int,
    c1: int,
    patch_size: int,
    image_w: int,
    image_h: int,
    score: float = 1.0,
) -> PixelBox:
    """Map an inclusive patch-grid extent [r0,r1]x[c0,c1] to a clipped pixel box.

    The pre-clip box is (c0*P, r0*P, (c1+1)*P, (r1+1)*P); the max edges are then
    clipped to the original (unpadded) image size. Raises DegenerateBoxError when
    clipping empties the box, which can only happen for an extent lying wholly in
    the padded margin.
    """
    x_min = c0 * patch_size
    y_min = r0 * patch_size
    x_max = min((c1 + 1) * patch_size, image_w)
    y_max = min((r1 + 1) * patch_size, image_h)
    if x_min >= x_max or y_min >= y_max:
        raise DegenerateBoxError(
            f"patch extent rows {r0}..{r1} cols {c0}..{c1} lies outside the "
            f"{image_w}x{image_h} image after clipping"
        )
    return PixelBox(x_min, y_min, x_max, y_max, score)
