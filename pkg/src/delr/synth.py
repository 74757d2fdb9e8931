"""Synthetic scenes and a noisy two-branch mock detector.

Scenes are box-level only (no pixels). The mock detector stands in for a
trained model: it re-emits ground truth with bounded uniform jitter, random
class confusion, misses, and spurious extra boxes, with confidence correlated
to how badly a prediction was perturbed. Branch 1 predicts on the original
frame; branch 2 predicts on the horizontally flipped frame and reports its
boxes in that flipped frame.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .geometry import hflip_box, iou
from .model import (
    BoundingBox,
    Category,
    ClassDistribution,
    Dataset,
    Detection,
    GroundTruthObject,
    ImageRecord,
    InfeasibleError,
    ValidationError,
)
from .rng import substream

# Pairwise GT overlap cap; keeps best-IoU matching unambiguous in tests.
GT_IOU_CAP = 0.5
_PLACEMENT_RETRIES = 200
_SPURIOUS_RETRIES = 50
# Spurious boxes must stay clearly below the background threshold.
SPURIOUS_IOU_CAP = 0.3
_CONFUSION_PENALTY = 0.15


@dataclass(frozen=True)
class NoiseParams:
    """Knobs of the mock detector.

    jitter_frac scales uniform per-coordinate box noise by the box's own size;
    class_confusion flips the argmax to a random wrong class; miss_rate deletes
    predictions; spurious_rate is the Poisson mean of extra background boxes
    per image.

    The defaults are calibrated by sweep so that a confidence-filtered initial
    pool shows roughly a fifth incorrect, a quarter loose, and half correct
    localization, the quality mix this pipeline is designed to clean up.
    """

    jitter_frac: float = 0.155
    class_confusion: float = 0.05
    miss_rate: float = 0.05
    spurious_rate: float = 1.1

    def __post_init__(self):
        for name in ("jitter_frac", "spurious_rate"):
            v = getattr(self, name)
            if v < 0:
                raise ValidationError(f"{name} must be >= 0, got {v}")
        for name in ("class_confusion", "miss_rate"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValidationError(f"{name} must be in [0,1], got {v}")

    def with_jitter_scale(self, scale: float) -> "NoiseParams":
        return replace(self, jitter_frac=self.jitter_frac * scale)


def generate_scenario(
    num_images: int,
    num_classes: int,
    objects_per_image_range: tuple[int, int],
    box_size_range: tuple[float, float],
    image_size: tuple[float, float],
    seed: int,
) -> Dataset:
    """Deterministic random dataset with unambiguous ground truth.

    Objects are placed uniformly, rejecting placements that overlap an
    existing object at IoU >= 0.5. Packing that cannot satisfy that after
    bounded retries is reported as infeasible rather than silently relaxed.
    """
    lo, hi = int(objects_per_image_range[0]), int(objects_per_image_range[1])
    smin, smax = float(box_size_range[0]), float(box_size_range[1])
    width, height = float(image_size[0]), float(image_size[1])
    if num_images <= 0 or num_classes <= 0:
        raise ValidationError("need at least one image and one class")
    if lo < 0 or hi < lo:
        raise ValidationError(f"bad objects_per_image_range ({lo}, {hi})")
    if smin <= 0 or smax < smin:
        raise ValidationError(f"bad box_size_range ({smin}, {smax})")
    if smax > width or smax > height:
        raise ValidationError("boxes must fit inside the image")

    rng = substream(seed, "scenario")
    images = []
    for i in range(num_images):
        n = int(rng.integers(lo, hi + 1))
        placed: list[GroundTruthObject] = []
        for j in range(n):
            box = None
            for _ in range(_PLACEMENT_RETRIES):
                w = float(rng.uniform(smin, smax))
                h = float(rng.uniform(smin, smax))
                x = float(rng.uniform(0.0, width - w))
                y = float(rng.uniform(0.0, height - h))
                cand = BoundingBox(x, y, w, h)
                if all(iou(cand, g.box) < GT_IOU_CAP for g in placed):
                    box = cand
                    break
            if box is None:
                raise InfeasibleError(
                    f"image {i}: could not place object {j} of {n} after "
                    f"{_PLACEMENT_RETRIES} retries; lower the object count or box size"
                )
            placed.append(
                GroundTruthObject(
                    id=f"g{j}", box=box, class_id=int(rng.integers(0, num_classes))
                )
            )
        images.append(ImageRecord(id=f"img{i:04d}", width=width, height=height, gt_objects=placed))

    categories = [Category(id=k, name=f"class_{k:02d}") for k in range(num_classes)]
    dataset = Dataset(images=images, categories=categories)
    dataset.validate()
    return dataset


def _confidence(mag_norm: float, confused: bool, num_classes: int) -> float:
    conf = 0.5 + 0.5 * (1.0 - mag_norm)
    if confused:
        conf -= _CONFUSION_PENALTY
    # The argmax must stay on the predicted class, so the distribution floor
    # is just above the uniform share.
    floor = min(1.0, 1.0 / num_classes + 0.05) if num_classes > 1 else 1.0
    return min(1.0, max(floor, conf))


def _distribution(class_id: int, confidence: float, num_classes: int) -> ClassDistribution:
    if num_classes == 1:
        return ClassDistribution((1.0,))
    rest = (1.0 - confidence) / (num_classes - 1)
    return ClassDistribution(
        tuple(confidence if k == class_id else rest for k in range(num_classes))
    )


def _jittered_box(box: BoundingBox, jitter_frac: float, image: ImageRecord, rng):
    """Perturb a box within the image; returns (box, mean normalized magnitude)."""
    if jitter_frac <= 0:
        return box, 0.0
    draws = rng.uniform(-1.0, 1.0, size=4)
    dx, dw = draws[0] * jitter_frac * box.w, draws[2] * jitter_frac * box.w
    dy, dh = draws[1] * jitter_frac * box.h, draws[3] * jitter_frac * box.h
    w = min(max(box.w + dw, 1.0), image.width)
    h = min(max(box.h + dh, 1.0), image.height)
    x = min(max(box.x + dx, 0.0), image.width - w)
    y = min(max(box.y + dy, 0.0), image.height - h)
    mag = float(sum(abs(d) for d in draws)) / 4.0
    return BoundingBox(x, y, w, h), mag


def _spurious_box(image: ImageRecord, rng) -> BoundingBox | None:
    side_cap = 0.3 * min(image.width, image.height)
    for _ in range(_SPURIOUS_RETRIES):
        w = float(rng.uniform(8.0, max(9.0, side_cap)))
        h = float(rng.uniform(8.0, max(9.0, side_cap)))
        x = float(rng.uniform(0.0, image.width - w))
        y = float(rng.uniform(0.0, image.height - h))
        cand = BoundingBox(x, y, w, h)
        if all(iou(cand, g.box) < SPURIOUS_IOU_CAP for g in image.gt_objects):
            return cand
    return None


def mock_detect(
    dataset: Dataset, noise: NoiseParams, seed: int, tag: str = ""
) -> tuple[list[Detection], list[Detection]]:
    """Emit both branches' predictions for every image.

    Branch 2's boxes are in the flipped frame, as a flipped-view head would
    produce them; ingestion maps them back. `tag` prefixes detection ids so
    batches from different cycles never collide.
    """
    rng = substream(seed, "mock_detect")
    num_classes = dataset.num_classes
    branches: tuple[list[Detection], list[Detection]] = ([], [])
    for image in dataset.images:
        for branch_index, out in enumerate(branches):
            branch_no = branch_index + 1
            flipped = branch_no == 2
            for k, obj in enumerate(image.gt_objects):
                if float(rng.random()) < noise.miss_rate:
                    continue
                box, mag = _jittered_box(obj.box, noise.jitter_frac, image, rng)
                confused = num_classes > 1 and float(rng.random()) < noise.class_confusion
                if confused:
                    wrong = int(rng.integers(0, num_classes - 1))
                    class_id = wrong if wrong < obj.class_id else wrong + 1
                else:
                    class_id = obj.class_id
                conf = _confidence(mag, confused, num_classes)
                if flipped:
                    box = hflip_box(box, image.width)
                out.append(
                    Detection(
                        id=f"{tag}b{branch_no}:{image.id}:{k}",
                        image_id=image.id,
                        box=box,
                        class_dist=_distribution(class_id, conf, num_classes),
                    )
                )
            n_spurious = int(rng.poisson(noise.spurious_rate))
            for s in range(n_spurious):
                box = _spurious_box(image, rng)
                if box is None:
                    continue
                class_id = int(rng.integers(0, num_classes))
                conf = float(rng.uniform(0.5, 0.9))
                floor = min(1.0, 1.0 / num_classes + 0.05) if num_classes > 1 else 1.0
                conf = max(floor, conf)
                if flipped:
                    box = hflip_box(box, image.width)
                out.append(
                    Detection(
                        id=f"{tag}b{branch_no}:{image.id}:sp{s}",
                        image_id=image.id,
                        box=box,
                        class_dist=_distribution(class_id, conf, num_classes),
                    )
                )
    return branches
