"""Pool-quality diagnostics: IoU buckets, conditional class accuracy,
confusion counts, and budget utilization.

Matching here is purely geometric (argmax-IoU ground truth per entry) so the
same numbers come out of an ingested pool with no verification history.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import BoxState, CostLedger, Dataset, PoolState, ValidationError
from .oracle import best_gt_match

BUCKET_BG = 0.3
BUCKET_POS = 0.7


@dataclass(frozen=True)
class MetricsBundle:
    """One cycle's diagnostics; optional fields are None when undefined
    (empty pool, empty qualifying bucket) rather than raising mid-report."""

    iou_buckets: tuple[float, float, float] | None
    cls_acc_given_correct_loc: float | None
    confusion: list[list[int]]
    unmatched: int
    budget: tuple[int, int, int]
    state_counts: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "iou_buckets": list(self.iou_buckets) if self.iou_buckets else None,
            "cls_acc_given_correct_loc": self.cls_acc_given_correct_loc,
            "confusion": [list(row) for row in self.confusion],
            "unmatched": self.unmatched,
            "budget": {
                "spent_loc_ms": self.budget[0],
                "spent_cls_ms": self.budget[1],
                "remaining_ms": self.budget[2],
            },
            "state_counts": dict(sorted(self.state_counts.items())),
        }


def _surviving(pool: PoolState):
    return [e for e in pool if e.box_state != BoxState.DROPPED]


def _max_iou(entry, dataset: Dataset) -> float:
    image = dataset.image(entry.annotation.image_id)
    _, best = best_gt_match(entry.annotation.box, image.gt_objects)
    return best


def iou_buckets(pool: PoolState, dataset: Dataset) -> tuple[float, float, float]:
    """Fractions of surviving entries at max-IoU <0.3, 0.3-0.7, and >=0.7.

    The 0.7 boundary counts as correct, mirroring the keep rule.
    """
    entries = _surviving(pool)
    if not entries:
        raise ValidationError("iou_buckets undefined: no non-dropped entries")
    low = mid = high = 0
    for entry in entries:
        ov = _max_iou(entry, dataset)
        if ov >= BUCKET_POS:
            high += 1
        elif ov >= BUCKET_BG:
            mid += 1
        else:
            low += 1
    n = len(entries)
    return (low / n, mid / n, high / n)


def cls_acc_given_correct_loc(pool: PoolState, dataset: Dataset) -> float:
    """Among well-localized entries, the fraction with the right class."""
    qualifying = 0
    correct = 0
    for entry in _surviving(pool):
        image = dataset.image(entry.annotation.image_id)
        match, ov = best_gt_match(entry.annotation.box, image.gt_objects)
        if match is None or ov < BUCKET_POS:
            continue
        qualifying += 1
        if entry.annotation.class_id == match.class_id:
            correct += 1
    if qualifying == 0:
        raise ValidationError("cls_acc_given_correct_loc undefined: empty qualifying bucket")
    return correct / qualifying


def confusion_matrix(pool: PoolState, dataset: Dataset) -> tuple[list[list[int]], int]:
    """Counts indexed [gt class of the argmax-IoU match][pool class].

    Entries overlapping no ground truth at all cannot be attributed to a row;
    they are excluded and returned as the second value.
    """
    k = dataset.num_classes
    matrix = [[0] * k for _ in range(k)]
    unmatched = 0
    for entry in _surviving(pool):
        image = dataset.image(entry.annotation.image_id)
        match, ov = best_gt_match(entry.annotation.box, image.gt_objects)
        if match is None or ov <= 0.0:
            unmatched += 1
            continue
        matrix[match.class_id][entry.annotation.class_id] += 1
    return matrix, unmatched


def compute_bundle(pool: PoolState, dataset: Dataset, ledger: CostLedger) -> MetricsBundle:
    """All diagnostics for one snapshot; tolerant of empty pools."""
    entries = _surviving(pool)
    buckets = iou_buckets(pool, dataset) if entries else None
    try:
        acc = cls_acc_given_correct_loc(pool, dataset) if entries else None
    except ValidationError:
        acc = None
    confusion, unmatched = confusion_matrix(pool, dataset)
    return MetricsBundle(
        iou_buckets=buckets,
        cls_acc_given_correct_loc=acc,
        confusion=confusion,
        unmatched=unmatched,
        budget=(ledger.spent_loc_ms, ledger.spent_cls_ms, ledger.remaining_ms),
        state_counts=pool.state_counts(),
    )
