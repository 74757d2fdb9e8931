"""Dual-view disagreement scoring.

A second detector branch sees each image horizontally flipped; its boxes are
mapped back into the primary frame at ingestion. Here the two branches are
paired per image and every primary detection is scored on two axes:

  u_loc  mean absolute difference of the four box coordinates, in pixels
  u_cls  KL divergence from the primary to the secondary class distribution

Unpaired detections get pessimistic sentinel scores so they sort ahead of any
genuinely measured disagreement: the branches could not even agree the object
exists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import iou
from .model import (
    BoundingBox,
    ClassDistribution,
    Dataset,
    Detection,
    PseudoAnnotation,
    ValidationError,
)

PAIR_IOU_MIN = 0.5
KL_EPS = 1e-8


@dataclass(frozen=True)
class PredictionPair:
    """A primary detection and its counterpart from the flipped branch.

    The secondary's box is already in the primary frame. Both optional fields
    are None when no counterpart overlapped enough.
    """

    primary: Detection
    secondary: Detection | None
    match_iou: float | None

    @property
    def matched(self) -> bool:
        return self.secondary is not None


def pair_predictions(
    preds_primary: list[Detection], preds_secondary_unflipped: list[Detection]
) -> list[PredictionPair]:
    """Greedily match the branches of one image by descending overlap.

    Each secondary detection is consumed at most once, matches need IoU of at
    least PAIR_IOU_MIN, and the result keeps primary order.
    """
    candidates = []
    for i, det in enumerate(preds_primary):
        for j, sec in enumerate(preds_secondary_unflipped):
            ov = iou(det.box, sec.box)
            if ov >= PAIR_IOU_MIN:
                candidates.append((ov, i, j))
    # Stable tie order: higher IoU first, then earliest primary, then earliest
    # secondary, so matching never depends on input shuffles.
    candidates.sort(key=lambda t: (-t[0], t[1], t[2]))

    chosen: dict[int, tuple[int, float]] = {}
    used_secondary: set[int] = set()
    for ov, i, j in candidates:
        if i in chosen or j in used_secondary:
            continue
        chosen[i] = (j, ov)
        used_secondary.add(j)

    pairs = []
    for i, det in enumerate(preds_primary):
        if i in chosen:
            j, ov = chosen[i]
            pairs.append(PredictionPair(det, preds_secondary_unflipped[j], ov))
        else:
            pairs.append(PredictionPair(det, None, None))
    return pairs


def mean_l1(a: BoundingBox, b: BoundingBox) -> float:
    """Mean L1 distance over (x, y, w, h), in pixels."""
    return (abs(a.x - b.x) + abs(a.y - b.y) + abs(a.w - b.w) + abs(a.h - b.h)) / 4.0


def kl_divergence(c: ClassDistribution, c_hat: ClassDistribution) -> float:
    """KL(c || c_hat) in nats, epsilon-smoothed inside the ratio.

    Zero components never produce infinities, and float round-off never
    produces a negative result (clamped at 0).
    """
    if len(c) != len(c_hat):
        raise ValidationError(f"distribution sizes differ: {len(c)} vs {len(c_hat)}")
    div = 0.0
    for p, q in zip(c.probs, c_hat.probs):
        div += p * math.log((p + KL_EPS) / (q + KL_EPS))
    return max(0.0, div)


def u_loc(pair: PredictionPair) -> float:
    """Box disagreement of a matched pair."""
    if pair.secondary is None:
        raise ValidationError(f"u_loc undefined for unmatched prediction {pair.primary.id!r}")
    return mean_l1(pair.primary.box, pair.secondary.box)


def u_cls(pair: PredictionPair) -> float:
    """Class disagreement of a matched pair, primary relative to secondary."""
    if pair.secondary is None:
        raise ValidationError(f"u_cls undefined for unmatched prediction {pair.primary.id!r}")
    return kl_divergence(pair.primary.class_dist, pair.secondary.class_dist)


def sentinel_u_loc(image_width: float, image_height: float) -> float:
    return math.hypot(image_width, image_height)


def sentinel_u_cls(num_classes: int) -> float:
    return math.log(num_classes) if num_classes > 1 else 0.0


def score_annotations(
    dataset: Dataset,
    preds_primary: list[Detection],
    preds_secondary_unflipped: list[Detection],
    u_max_loc: float | None = None,
    u_max_cls: float | None = None,
) -> list[PseudoAnnotation]:
    """Pair both branches per image and score every primary detection.

    Output order follows the primary list. Unmatched primaries get sentinel
    uncertainties: u_max_loc (default: the image diagonal) and u_max_cls
    (default: ln of the class count). Detections referencing unknown images
    fail validation rather than being silently dropped.
    """
    by_image_primary: dict[str, list[Detection]] = {}
    by_image_secondary: dict[str, list[Detection]] = {}
    seen_ids: set[str] = set()
    for det in preds_primary:
        dataset.image(det.image_id)
        if det.id in seen_ids:
            raise ValidationError(f"duplicate primary detection id {det.id!r}")
        seen_ids.add(det.id)
        by_image_primary.setdefault(det.image_id, []).append(det)
    for det in preds_secondary_unflipped:
        dataset.image(det.image_id)
        by_image_secondary.setdefault(det.image_id, []).append(det)

    scored: dict[str, PseudoAnnotation] = {}
    for image_id, dets in by_image_primary.items():
        img = dataset.image(image_id)
        pairs = pair_predictions(dets, by_image_secondary.get(image_id, []))
        for pair in pairs:
            det = pair.primary
            if pair.matched:
                loc = u_loc(pair)
                cls = u_cls(pair)
            else:
                loc = u_max_loc if u_max_loc is not None else sentinel_u_loc(img.width, img.height)
                cls = u_max_cls if u_max_cls is not None else sentinel_u_cls(dataset.num_classes)
            scored[det.id] = PseudoAnnotation(
                id=det.id,
                image_id=det.image_id,
                box=det.box,
                class_dist=det.class_dist,
                confidence=det.class_dist.confidence,
                u_loc=loc,
                u_cls=cls,
                paired=pair.matched,
            )
    return [scored[det.id] for det in preds_primary]
