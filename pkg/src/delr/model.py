"""Shared domain types: boxes, datasets, annotations, the pool, and budgets.

All monetary-style accounting (annotation time) is integer milliseconds so
budget invariants hold exactly over thousands of ledger entries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum


class ValidationError(ValueError):
    """Raised when a domain invariant is violated by input data."""


class BudgetError(RuntimeError):
    """Raised when a charge would overdraw a budget (engine bug or misuse)."""


class InfeasibleError(RuntimeError):
    """Raised when a requested configuration cannot be satisfied at all."""


# --------------------------------------------------------------------------
# Geometry atom


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box (x, y, w, h) in pixels, top-left origin."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.x < 0 or self.y < 0 or self.w < 0 or self.h < 0:
            raise ValidationError(f"box fields must be non-negative: {self.as_tuple()}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)

    @property
    def area(self) -> float:
        return self.w * self.h

    def contains(self, other: "BoundingBox", eps: float = 1e-9) -> bool:
        return (
            self.x <= other.x + eps
            and self.y <= other.y + eps
            and other.x + other.w <= self.x + self.w + eps
            and other.y + other.h <= self.y + self.h + eps
        )

    def fits_in(self, width: float, height: float, eps: float = 1e-9) -> bool:
        return self.x + self.w <= width + eps and self.y + self.h <= height + eps

    def to_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]

    @classmethod
    def from_list(cls, values) -> "BoundingBox":
        if len(values) != 4:
            raise ValidationError(f"bbox needs exactly 4 values, got {len(values)}")
        return cls(float(values[0]), float(values[1]), float(values[2]), float(values[3]))


# --------------------------------------------------------------------------
# Dataset


@dataclass(frozen=True)
class GroundTruthObject:
    id: str
    box: BoundingBox
    class_id: int

    def __post_init__(self):
        if self.box.w <= 0 or self.box.h <= 0:
            raise ValidationError(f"ground-truth object {self.id}: box must have positive area")
        if self.class_id < 0:
            raise ValidationError(f"ground-truth object {self.id}: negative class_id")


@dataclass
class ImageRecord:
    id: str
    width: float
    height: float
    gt_objects: list[GroundTruthObject] = field(default_factory=list)
    raster_path: str | None = None

    def validate(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(f"image {self.id}: non-positive dimensions")
        seen: set[str] = set()
        for obj in self.gt_objects:
            if obj.id in seen:
                raise ValidationError(f"image {self.id}: duplicate gt object id {obj.id!r}")
            seen.add(obj.id)
            if not obj.box.fits_in(self.width, self.height):
                raise ValidationError(
                    f"image {self.id}: gt object {obj.id} box {obj.box.as_tuple()} "
                    f"exceeds image bounds {self.width}x{self.height}"
                )

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)


@dataclass(frozen=True)
class Category:
    id: int
    name: str


@dataclass
class Dataset:
    """A collection of images with ground truth and a fixed category list.

    class_id everywhere is an index into `categories` (0-based), independent
    of the categories' own external ids.
    """

    images: list[ImageRecord]
    categories: list[Category]

    def __post_init__(self):
        self._by_id = {}
        for img in self.images:
            if img.id in self._by_id:
                raise ValidationError(f"duplicate image id {img.id!r}")
            self._by_id[img.id] = img

    def validate(self) -> None:
        for img in self.images:
            img.validate()
            for obj in img.gt_objects:
                if obj.class_id >= self.num_classes:
                    raise ValidationError(
                        f"image {img.id}: gt object {obj.id} class_id {obj.class_id} "
                        f">= num_classes {self.num_classes}"
                    )

    @property
    def num_classes(self) -> int:
        return len(self.categories)

    def image(self, image_id: str) -> ImageRecord:
        try:
            return self._by_id[image_id]
        except KeyError:
            raise ValidationError(f"unknown image {image_id!r}") from None

    def has_image(self, image_id: str) -> bool:
        return image_id in self._by_id

    def total_gt_objects(self) -> int:
        return sum(len(img.gt_objects) for img in self.images)


# --------------------------------------------------------------------------
# Predictions and annotations


@dataclass(frozen=True)
class ClassDistribution:
    """Probability vector over the dataset's classes."""

    probs: tuple[float, ...]

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "probs", probs)
        if not probs:
            raise ValidationError("class distribution must not be empty")
        for p in probs:
            if p < -1e-9 or p > 1 + 1e-9:
                raise ValidationError(f"probability {p} outside [0,1]")
        total = sum(probs)
        if abs(total - 1.0) > 1e-6:
            raise ValidationError(f"probabilities sum to {total}, expected 1")

    @property
    def argmax(self) -> int:
        # Ties break toward the lowest class index, so replay is deterministic.
        best = 0
        for i, p in enumerate(self.probs):
            if p > self.probs[best]:
                best = i
        return best

    @property
    def confidence(self) -> float:
        return max(self.probs)

    def __len__(self) -> int:
        return len(self.probs)

    @classmethod
    def one_hot(cls, class_id: int, num_classes: int) -> "ClassDistribution":
        if not 0 <= class_id < num_classes:
            raise ValidationError(f"class_id {class_id} outside [0, {num_classes})")
        return cls(tuple(1.0 if i == class_id else 0.0 for i in range(num_classes)))


@dataclass(frozen=True)
class Detection:
    """One raw prediction from a single detector branch."""

    id: str
    image_id: str
    box: BoundingBox
    class_dist: ClassDistribution

    def __post_init__(self):
        if self.box.w <= 0 or self.box.h <= 0:
            raise ValidationError(f"detection {self.id}: box must have positive area")


@dataclass
class PseudoAnnotation:
    """A scored detected instance: the unit of verification queries."""

    id: str
    image_id: str
    box: BoundingBox
    class_dist: ClassDistribution
    confidence: float
    u_loc: float
    u_cls: float
    paired: bool

    def __post_init__(self):
        if self.box.w <= 0 or self.box.h <= 0:
            raise ValidationError(f"annotation {self.id}: box must have positive area")
        if abs(self.confidence - self.class_dist.confidence) > 1e-9:
            raise ValidationError(
                f"annotation {self.id}: confidence {self.confidence} != "
                f"max(probs) {self.class_dist.confidence}"
            )
        if self.u_loc < 0 or self.u_cls < 0:
            raise ValidationError(f"annotation {self.id}: uncertainties must be non-negative")

    @property
    def class_id(self) -> int:
        return self.class_dist.argmax

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "image_id": self.image_id,
            "bbox": self.box.to_list(),
            "probs": list(self.class_dist.probs),
            "confidence": self.confidence,
            "u_loc": self.u_loc,
            "u_cls": self.u_cls,
            "paired": self.paired,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PseudoAnnotation":
        return cls(
            id=str(d["id"]),
            image_id=str(d["image_id"]),
            box=BoundingBox.from_list(d["bbox"]),
            class_dist=ClassDistribution(tuple(d["probs"])),
            confidence=float(d["confidence"]),
            u_loc=float(d["u_loc"]),
            u_cls=float(d["u_cls"]),
            paired=bool(d["paired"]),
        )


# --------------------------------------------------------------------------
# Pool


class BoxState(str, Enum):
    PSEUDO = "Pseudo"
    VERIFIED_KEPT = "VerifiedKept"
    CORRECTED = "Corrected"
    DROPPED = "Dropped"


class ClassState(str, Enum):
    PSEUDO = "Pseudo"
    TRUSTED = "Trusted"
    VERIFIED_KEPT = "VerifiedKept"
    CORRECTED = "Corrected"


# Legal forward transitions; anything else is an engine bug.
_CLASS_ADVANCES = {
    ClassState.PSEUDO: {ClassState.TRUSTED, ClassState.VERIFIED_KEPT, ClassState.CORRECTED},
}


@dataclass
class PoolEntry:
    """A pseudo annotation with its verification provenance."""

    annotation: PseudoAnnotation
    box_state: BoxState = BoxState.PSEUDO
    class_state: ClassState = ClassState.PSEUDO
    matched_gt_id: str | None = None
    history: list[tuple[int, str, int]] = field(default_factory=list)

    def record(self, cycle_index: int, action: str, cost_ms: int) -> None:
        self.history.append((cycle_index, action, cost_ms))

    def advance_class(self, new_state: ClassState) -> None:
        allowed = _CLASS_ADVANCES.get(self.class_state, set())
        if new_state not in allowed:
            raise ValidationError(
                f"illegal class transition {self.class_state.value} -> {new_state.value} "
                f"for annotation {self.annotation.id}"
            )
        self.class_state = new_state

    def to_dict(self) -> dict:
        return {
            "annotation": self.annotation.to_dict(),
            "box_state": self.box_state.value,
            "class_state": self.class_state.value,
            "matched_gt_id": self.matched_gt_id,
            "history": [[c, a, ms] for c, a, ms in self.history],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PoolEntry":
        return cls(
            annotation=PseudoAnnotation.from_dict(d["annotation"]),
            box_state=BoxState(d["box_state"]),
            class_state=ClassState(d["class_state"]),
            matched_gt_id=d.get("matched_gt_id"),
            history=[(int(c), str(a), int(ms)) for c, a, ms in d.get("history", [])],
        )


@dataclass
class PoolState:
    """The evolving labeled pool; insertion order of entries is preserved."""

    entries: dict[str, PoolEntry] = field(default_factory=dict)

    def __iter__(self):
        return iter(self.entries.values())

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, annotation_id: str) -> PoolEntry:
        try:
            return self.entries[annotation_id]
        except KeyError:
            raise ValidationError(f"unknown annotation {annotation_id!r}") from None

    def non_dropped(self) -> list[PoolEntry]:
        return [e for e in self if e.box_state != BoxState.DROPPED]

    def class_eligible(self) -> list[PoolEntry]:
        """Entries whose class can still be queried this cycle.

        A class question is only answerable against the ground truth matched
        at box time, so entries without a recorded match are never queued.
        """
        return [
            e
            for e in self
            if e.box_state in (BoxState.VERIFIED_KEPT, BoxState.CORRECTED)
            and e.class_state == ClassState.PSEUDO
            and e.matched_gt_id is not None
        ]

    def state_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for e in self:
            counts[f"box_{e.box_state.value}"] = counts.get(f"box_{e.box_state.value}", 0) + 1
            counts[f"class_{e.class_state.value}"] = (
                counts.get(f"class_{e.class_state.value}", 0) + 1
            )
        return counts

    def covered_gt(self) -> set[tuple[str, str]]:
        """(image_id, gt_id) pairs already pinned down by a verified box."""
        return {
            (e.annotation.image_id, e.matched_gt_id)
            for e in self
            if e.matched_gt_id is not None
            and e.box_state in (BoxState.VERIFIED_KEPT, BoxState.CORRECTED)
        }

    def refresh_pseudo(self, dataset: Dataset, annotations: list[PseudoAnnotation]) -> None:
        """Replace still-unverified entries with a fresh prediction batch.

        Verified, corrected, and dropped entries are frozen and survive; only
        box_state == Pseudo entries are discarded and re-seeded.
        """
        for ann in annotations:
            if not dataset.has_image(ann.image_id):
                raise ValidationError(
                    f"annotation {ann.id!r} references unknown image {ann.image_id!r}"
                )
        frozen = {k: e for k, e in self.entries.items() if e.box_state != BoxState.PSEUDO}
        self.entries = frozen
        for ann in annotations:
            if ann.id in self.entries:
                raise ValidationError(f"duplicate annotation id {ann.id!r}")
            self.entries[ann.id] = PoolEntry(annotation=ann)

    def to_dict(self) -> dict:
        return {"entries": [e.to_dict() for e in self]}

    @classmethod
    def from_dict(cls, d: dict) -> "PoolState":
        pool = cls()
        for ed in d.get("entries", []):
            entry = PoolEntry.from_dict(ed)
            if entry.annotation.id in pool.entries:
                raise ValidationError(f"duplicate annotation id {entry.annotation.id!r}")
            pool.entries[entry.annotation.id] = entry
        return pool


def new_pool(dataset: Dataset, predictions: list[PseudoAnnotation]) -> PoolState:
    """Build a fresh pool; every entry starts fully pseudo with empty history."""
    pool = PoolState()
    for ann in predictions:
        if not dataset.has_image(ann.image_id):
            raise ValidationError(
                f"annotation {ann.id!r} references unknown image {ann.image_id!r}"
            )
        if ann.id in pool.entries:
            raise ValidationError(f"duplicate annotation id {ann.id!r}")
        pool.entries[ann.id] = PoolEntry(annotation=ann)
    return pool


# --------------------------------------------------------------------------
# Budget accounting


@dataclass
class CostLedger:
    """Integer-millisecond spend tracking against decoupled budgets.

    Invariants enforced on every charge: spent never exceeds the matching
    budget, and the entry list sums exactly to spent_loc + spent_cls.
    """

    budget_total_ms: int
    budget_loc_ms: int
    budget_cls_ms: int
    spent_loc_ms: int = 0
    spent_cls_ms: int = 0
    entries: list[tuple[str, str, int]] = field(default_factory=list)

    def __post_init__(self):
        for name in ("budget_total_ms", "budget_loc_ms", "budget_cls_ms"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 0:
                raise ValidationError(f"{name} must be a non-negative integer, got {v!r}")
        if self.budget_loc_ms + self.budget_cls_ms != self.budget_total_ms:
            raise ValidationError("budget_loc_ms + budget_cls_ms must equal budget_total_ms")

    @property
    def remaining_loc_ms(self) -> int:
        return self.budget_loc_ms - self.spent_loc_ms

    @property
    def remaining_cls_ms(self) -> int:
        return self.budget_cls_ms - self.spent_cls_ms

    @property
    def spent_total_ms(self) -> int:
        return self.spent_loc_ms + self.spent_cls_ms

    @property
    def remaining_ms(self) -> int:
        return self.budget_total_ms - self.spent_total_ms

    def charge_loc(self, task_id: str, action: str, cost_ms: int) -> None:
        self._charge("loc", task_id, action, cost_ms)

    def charge_cls(self, task_id: str, action: str, cost_ms: int) -> None:
        self._charge("cls", task_id, action, cost_ms)

    def _charge(self, channel: str, task_id: str, action: str, cost_ms: int) -> None:
        if not isinstance(cost_ms, int) or cost_ms < 0:
            raise ValidationError(f"cost must be a non-negative integer, got {cost_ms!r}")
        if channel == "loc":
            if self.spent_loc_ms + cost_ms > self.budget_loc_ms:
                raise BudgetError(
                    f"charge of {cost_ms} ms would overdraw box budget "
                    f"({self.spent_loc_ms}/{self.budget_loc_ms} ms spent)"
                )
            self.spent_loc_ms += cost_ms
        else:
            if self.spent_cls_ms + cost_ms > self.budget_cls_ms:
                raise BudgetError(
                    f"charge of {cost_ms} ms would overdraw class budget "
                    f"({self.spent_cls_ms}/{self.budget_cls_ms} ms spent)"
                )
            self.spent_cls_ms += cost_ms
        self.entries.append((task_id, action, cost_ms))

    def note(self, task_id: str, action: str) -> None:
        """Append a zero-cost bookkeeping entry (e.g. duplicate merges)."""
        self.entries.append((task_id, action, 0))

    def transfer_loc_leftover(self) -> int:
        """Close the box channel and let its leftover flow to the class pass."""
        leftover = self.remaining_loc_ms
        self.budget_loc_ms = self.spent_loc_ms
        self.budget_cls_ms += leftover
        return leftover

    def to_dict(self) -> dict:
        return {
            "budget_total_ms": self.budget_total_ms,
            "budget_loc_ms": self.budget_loc_ms,
            "budget_cls_ms": self.budget_cls_ms,
            "spent_loc_ms": self.spent_loc_ms,
            "spent_cls_ms": self.spent_cls_ms,
            "entries": [[t, a, c] for t, a, c in self.entries],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CostLedger":
        ledger = cls(
            budget_total_ms=int(d["budget_total_ms"]),
            budget_loc_ms=int(d["budget_loc_ms"]),
            budget_cls_ms=int(d["budget_cls_ms"]),
        )
        ledger.spent_loc_ms = int(d["spent_loc_ms"])
        ledger.spent_cls_ms = int(d["spent_cls_ms"])
        ledger.entries = [(str(t), str(a), int(c)) for t, a, c in d.get("entries", [])]
        return ledger


# --------------------------------------------------------------------------
# Configuration


VOC_LIKE = "VOC-like"
COCO_LIKE = "COCO-like"
CUSTOM = "Custom"


@dataclass
class ExperimentConfig:
    tau_conf: float = 0.7
    iou_pos: float = 0.7
    iou_bg: float = 0.3
    delta_pos: float = 0.0
    delta_bg: float = 0.0
    enlarge_factor: float = 2.0
    conf_trust: float = 0.9
    loc_budget_fraction: float = 0.5
    cycle_budgets_ms: list[int] = field(default_factory=list)
    dataset_profile: str = VOC_LIKE
    custom_costs: dict[str, int] | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.iou_bg < self.iou_pos <= 1:
            raise ValidationError(
                f"need 0 <= iou_bg < iou_pos <= 1, got bg={self.iou_bg} pos={self.iou_pos}"
            )
        if not 0 <= self.tau_conf <= 1:
            raise ValidationError(f"tau_conf must be in [0,1], got {self.tau_conf}")
        if not 0 <= self.loc_budget_fraction <= 1:
            raise ValidationError(
                f"loc_budget_fraction must be in [0,1], got {self.loc_budget_fraction}"
            )
        if self.enlarge_factor < 1:
            raise ValidationError(f"enlarge_factor must be >= 1, got {self.enlarge_factor}")
        # Disturbance widths are clamped, not rejected.
        self.delta_pos = min(max(self.delta_pos, 0.0), 1.0 - self.iou_pos)
        self.delta_bg = min(max(self.delta_bg, 0.0), 1.0)
        if self.dataset_profile not in (VOC_LIKE, COCO_LIKE, CUSTOM):
            raise ValidationError(f"unknown dataset_profile {self.dataset_profile!r}")
        if self.dataset_profile == CUSTOM and not self.custom_costs:
            raise ValidationError("Custom profile requires custom_costs")
        for b in self.cycle_budgets_ms:
            if not isinstance(b, int) or b < 0:
                raise ValidationError(f"cycle budgets must be non-negative integers, got {b!r}")

    def to_dict(self) -> dict:
        d = {
            "tau_conf": self.tau_conf,
            "iou_pos": self.iou_pos,
            "iou_bg": self.iou_bg,
            "delta_pos": self.delta_pos,
            "delta_bg": self.delta_bg,
            "enlarge_factor": self.enlarge_factor,
            "conf_trust": self.conf_trust,
            "loc_budget_fraction": self.loc_budget_fraction,
            "cycle_budgets_ms": list(self.cycle_budgets_ms),
            "dataset_profile": self.dataset_profile,
            "seed": self.seed,
        }
        if self.custom_costs is not None:
            d["custom_costs"] = dict(self.custom_costs)
        return d
