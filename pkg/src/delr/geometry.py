"""Box geometry: overlap, horizontal flips, and search-region enlargement."""

from __future__ import annotations

from .model import BoundingBox, ValidationError


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0 when the union is empty."""
    ix = max(a.x, b.x)
    iy = max(a.y, b.y)
    ix2 = min(a.x + a.w, b.x + b.w)
    iy2 = min(a.y + a.h, b.y + b.h)
    iw = max(0.0, ix2 - ix)
    ih = max(0.0, iy2 - iy)
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


def hflip_box(box: BoundingBox, image_width: float) -> BoundingBox:
    """Mirror a box across the image's vertical midline (x' = W - x - w)."""
    x = image_width - box.x - box.w
    if -1e-9 < x < 0.0:
        # Rounding during the subtraction must not turn an in-bounds box invalid.
        x = 0.0
    return BoundingBox(x, box.y, box.w, box.h)


def enlarge_region(box: BoundingBox, factor: float, image) -> BoundingBox:
    """Grow a box about its center by `factor` per side, clipped to the image.

    `image` is anything with width/height attributes. factor == 1 returns the
    box unchanged (no clipping applied), so enlargement at 1 is exactly the
    identity.
    """
    if factor < 1.0:
        raise ValidationError(f"enlarge factor must be >= 1, got {factor}")
    if factor == 1.0:
        return box
    cx = box.x + box.w / 2.0
    cy = box.y + box.h / 2.0
    w = box.w * factor
    h = box.h * factor
    x1 = max(0.0, cx - w / 2.0)
    y1 = max(0.0, cy - h / 2.0)
    x2 = min(float(image.width), cx + w / 2.0)
    y2 = min(float(image.height), cy + h / 2.0)
    return BoundingBox(x1, y1, max(0.0, x2 - x1), max(0.0, y2 - y1))
