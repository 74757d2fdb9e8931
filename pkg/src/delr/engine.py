"""Budgeted verification passes: the heart of the decoupled query protocol.

Boxes and classes are verified in separate passes with separate prices. A
task is only issued when its worst-case cost (verification plus a possible
correction) still fits the remaining channel budget, so the spent-within-
budget invariant holds without ever rolling a charge back.
"""

from __future__ import annotations

from dataclasses import dataclass

from .geometry import enlarge_region
from .model import (
    COCO_LIKE,
    CUSTOM,
    VOC_LIKE,
    BoxState,
    ClassDistribution,
    ClassState,
    CostLedger,
    Dataset,
    ExperimentConfig,
    ImageRecord,
    PoolEntry,
    PoolState,
    ValidationError,
)
from .oracle import Answer, TaskKind, VerificationTask, Verdict, best_gt_match
from .selection import median_u_cls

VERIFY_BOX = "VerifyBox"
DRAW_BOX = "DrawBox"
VERIFY_CLASS = "VerifyClass"
ASSIGN_CLASS = "AssignClass"
FULL_IMAGE = "FullImage"

ACTIONS = (VERIFY_BOX, DRAW_BOX, VERIFY_CLASS, ASSIGN_CLASS, FULL_IMAGE)

BUDGET_EXHAUSTED = "BudgetExhausted"
QUEUE_EXHAUSTED = "QueueExhausted"


@dataclass(frozen=True)
class CostTable:
    """Per-action annotator time in integer milliseconds."""

    verify_box_ms: int = 1600
    verify_class_ms: int = 2700
    draw_box_ms: int = 35000
    assign_class_ms: int = 26000
    full_image_ms: int = 102600

    def __post_init__(self):
        for name in (
            "verify_box_ms",
            "verify_class_ms",
            "draw_box_ms",
            "assign_class_ms",
            "full_image_ms",
        ):
            v = getattr(self, name)
            if not isinstance(v, int) or v <= 0:
                raise ValidationError(f"cost {name} must be a positive integer, got {v!r}")

    @classmethod
    def for_profile(cls, profile: str, custom: dict | None = None) -> "CostTable":
        if profile == VOC_LIKE:
            return cls()
        if profile == COCO_LIKE:
            return cls(assign_class_ms=38000, full_image_ms=346000)
        if profile == CUSTOM:
            if not custom:
                raise ValidationError("Custom profile requires a cost table")
            known = {
                "verify_box_ms",
                "verify_class_ms",
                "draw_box_ms",
                "assign_class_ms",
                "full_image_ms",
            }
            unknown = set(custom) - known
            if unknown:
                raise ValidationError(f"unknown custom cost keys: {sorted(unknown)}")
            return cls(**{k: int(v) for k, v in custom.items()})
        raise ValidationError(f"unknown dataset_profile {profile!r}")

    def of(self, action: str) -> int:
        mapping = {
            VERIFY_BOX: self.verify_box_ms,
            DRAW_BOX: self.draw_box_ms,
            VERIFY_CLASS: self.verify_class_ms,
            ASSIGN_CLASS: self.assign_class_ms,
            FULL_IMAGE: self.full_image_ms,
        }
        try:
            return mapping[action]
        except KeyError:
            raise ValidationError(f"unknown action {action!r}") from None


def cost_of(action: str, profile: str, custom: dict | None = None) -> int:
    """Price of one annotator action under a dataset profile, in ms."""
    return CostTable.for_profile(profile, custom).of(action)


def costs_for(cfg: ExperimentConfig) -> CostTable:
    return CostTable.for_profile(cfg.dataset_profile, cfg.custom_costs)


@dataclass
class PassReport:
    """Outcome counts and spend for one verification pass."""

    pass_kind: str
    tasks_issued: int = 0
    keeps: int = 0
    drops: int = 0
    corrections: int = 0
    trusted: int = 0
    merges: int = 0
    spent_ms: int = 0
    stopped_reason: str = QUEUE_EXHAUSTED

    def to_dict(self) -> dict:
        return {
            "pass_kind": self.pass_kind,
            "tasks_issued": self.tasks_issued,
            "keeps": self.keeps,
            "drops": self.drops,
            "corrections": self.corrections,
            "trusted": self.trusted,
            "merges": self.merges,
            "spent_ms": self.spent_ms,
            "stopped_reason": self.stopped_reason,
        }


def build_box_task(
    entry: PoolEntry, image: ImageRecord, cfg: ExperimentConfig, task_id: str, cycle_index: int
) -> VerificationTask:
    ann = entry.annotation
    return VerificationTask(
        task_id=task_id,
        kind=TaskKind.BOX,
        image_id=ann.image_id,
        annotation_id=ann.id,
        region=enlarge_region(ann.box, cfg.enlarge_factor, image),
        pseudo_box=ann.box,
        pseudo_class=ann.class_id,
        issued_cycle=cycle_index,
    )


def build_class_task(
    entry: PoolEntry, image: ImageRecord, cfg: ExperimentConfig, task_id: str, cycle_index: int
) -> VerificationTask:
    ann = entry.annotation
    return VerificationTask(
        task_id=task_id,
        kind=TaskKind.CLASS,
        image_id=ann.image_id,
        annotation_id=ann.id,
        region=enlarge_region(ann.box, cfg.enlarge_factor, image),
        pseudo_box=ann.box,
        pseudo_class=ann.class_id,
        issued_cycle=cycle_index,
    )


def merge_duplicates(pool: PoolState, entry: PoolEntry, ledger: CostLedger, cycle: int) -> int:
    """Collapse entries that now pin down the same (image, box, class).

    The earliest entry in pool order survives; later twins are dropped with a
    zero-cost ledger note so the merge is visible in the accounting trail.
    """
    key = (
        entry.annotation.image_id,
        entry.annotation.box.as_tuple(),
        entry.annotation.class_id,
    )
    twins = [
        e
        for e in pool
        if e.box_state != BoxState.DROPPED
        and (e.annotation.image_id, e.annotation.box.as_tuple(), e.annotation.class_id) == key
    ]
    merged = 0
    for later in twins[1:]:
        later.box_state = BoxState.DROPPED
        later.record(cycle, "MergeDuplicate", 0)
        ledger.note(f"merge:{later.annotation.id}", "MergeDuplicate")
        merged += 1
    return merged


def apply_box_verdict(
    pool: PoolState,
    entry: PoolEntry,
    verdict: Verdict,
    image: ImageRecord,
    ledger: CostLedger,
    costs: CostTable,
    cycle: int,
    report: PassReport,
) -> None:
    """Charge and commit one box verdict. The verify fee is always due.

    A malformed correction is rejected before anything is charged, so a
    failing verdict leaves the ledger exactly as it was.
    """
    if verdict.answer == Answer.BOX_CORRECT:
        new_box = verdict.new_box
        if new_box.w <= 0 or new_box.h <= 0:
            raise ValidationError(f"verdict {verdict.task_id}: corrected box needs positive area")
        if not new_box.fits_in(image.width, image.height):
            raise ValidationError(
                f"verdict {verdict.task_id}: corrected box {new_box.as_tuple()} "
                f"exceeds image bounds {image.width}x{image.height}"
            )
    ledger.charge_loc(verdict.task_id, VERIFY_BOX, costs.verify_box_ms)
    report.tasks_issued += 1
    if verdict.answer == Answer.BOX_KEEP:
        entry.box_state = BoxState.VERIFIED_KEPT
        match, _ = best_gt_match(entry.annotation.box, image.gt_objects)
        entry.matched_gt_id = match.id if match is not None else None
        entry.record(cycle, Answer.BOX_KEEP.value, costs.verify_box_ms)
        report.keeps += 1
    elif verdict.answer == Answer.BOX_DROP:
        entry.box_state = BoxState.DROPPED
        entry.record(cycle, Answer.BOX_DROP.value, costs.verify_box_ms)
        report.drops += 1
    else:
        new_box = verdict.new_box
        ledger.charge_loc(verdict.task_id, DRAW_BOX, costs.draw_box_ms)
        entry.annotation.box = new_box
        entry.box_state = BoxState.CORRECTED
        match, _ = best_gt_match(new_box, image.gt_objects)
        entry.matched_gt_id = match.id if match is not None else None
        entry.record(cycle, Answer.BOX_CORRECT.value, costs.verify_box_ms + costs.draw_box_ms)
        report.corrections += 1
        report.merges += merge_duplicates(pool, entry, ledger, cycle)


def apply_class_verdict(
    pool: PoolState,
    entry: PoolEntry,
    verdict: Verdict,
    num_classes: int,
    ledger: CostLedger,
    costs: CostTable,
    cycle: int,
    report: PassReport,
) -> None:
    """Charge and commit one class verdict; rejection precedes any charge."""
    if verdict.answer == Answer.CLASS_CORRECT and not 0 <= verdict.new_class < num_classes:
        raise ValidationError(
            f"verdict {verdict.task_id}: class {verdict.new_class} outside [0, {num_classes})"
        )
    ledger.charge_cls(verdict.task_id, VERIFY_CLASS, costs.verify_class_ms)
    report.tasks_issued += 1
    if verdict.answer == Answer.CLASS_KEEP:
        entry.advance_class(ClassState.VERIFIED_KEPT)
        entry.record(cycle, Answer.CLASS_KEEP.value, costs.verify_class_ms)
        report.keeps += 1
    else:
        new_class = verdict.new_class
        ledger.charge_cls(verdict.task_id, ASSIGN_CLASS, costs.assign_class_ms)
        entry.annotation.class_dist = ClassDistribution.one_hot(new_class, num_classes)
        entry.annotation.confidence = 1.0
        entry.advance_class(ClassState.CORRECTED)
        entry.record(
            cycle, Answer.CLASS_CORRECT.value, costs.verify_class_ms + costs.assign_class_ms
        )
        report.corrections += 1
        report.merges += merge_duplicates(pool, entry, ledger, cycle)


def run_box_pass(
    pool: PoolState,
    ranked_ids: list[str],
    oracle,
    ledger: CostLedger,
    cfg: ExperimentConfig,
    dataset: Dataset,
    cycle_index: int = 0,
) -> PassReport:
    """Walk the ranked queue, verifying boxes until budget or queue runs out.

    Worst-case admission: a task is issued only if verify + draw still fits,
    so a correction can never overdraw. An oracle failure propagates with the
    ledger intact through the last committed task.
    """
    costs = costs_for(cfg)
    worst_case = costs.verify_box_ms + costs.draw_box_ms
    report = PassReport(pass_kind=TaskKind.BOX.value)
    spent_before = ledger.spent_loc_ms
    for seq, ann_id in enumerate(ranked_ids):
        entry = pool.get(ann_id)
        if entry.box_state != BoxState.PSEUDO:
            raise ValidationError(
                f"annotation {ann_id} is {entry.box_state.value}, not queueable for box tasks"
            )
        if ledger.remaining_loc_ms < worst_case:
            break
        image = dataset.image(entry.annotation.image_id)
        task = build_box_task(entry, image, cfg, f"box-c{cycle_index}-{seq:06d}", cycle_index)
        verdict = oracle.verify_box(task)
        verdict.matches(task)
        apply_box_verdict(pool, entry, verdict, image, ledger, costs, cycle_index, report)
    report.stopped_reason = (
        BUDGET_EXHAUSTED if ledger.remaining_loc_ms < worst_case else QUEUE_EXHAUSTED
    )
    report.spent_ms = ledger.spent_loc_ms - spent_before
    return report


def run_class_pass(
    pool: PoolState,
    ranked_ids: list[str],
    oracle,
    ledger: CostLedger,
    cfg: ExperimentConfig,
    dataset: Dataset,
    cycle_index: int = 0,
) -> PassReport:
    """Walk the ranked queue of box-settled entries, verifying classes.

    The trust threshold is the median class disagreement over the eligible
    entries, frozen once at pass start. Confident entries under it are marked
    Trusted for free; everything else pays the verify fee (plus reassignment
    on a correction) under the same worst-case admission rule as boxes.
    """
    costs = costs_for(cfg)
    worst_case = costs.verify_class_ms + costs.assign_class_ms
    report = PassReport(pass_kind=TaskKind.CLASS.value)
    spent_before = ledger.spent_cls_ms

    entries = []
    for ann_id in ranked_ids:
        entry = pool.get(ann_id)
        if entry.box_state not in (BoxState.VERIFIED_KEPT, BoxState.CORRECTED):
            raise ValidationError(
                f"annotation {ann_id} has box_state {entry.box_state.value}; "
                "class tasks need a settled box"
            )
        if entry.class_state != ClassState.PSEUDO:
            raise ValidationError(f"annotation {ann_id} class already {entry.class_state.value}")
        entries.append(entry)

    if entries:
        tau_cls = median_u_cls(entries)
        for seq, entry in enumerate(entries):
            ann = entry.annotation
            if ann.confidence > cfg.conf_trust and ann.u_cls < tau_cls:
                entry.advance_class(ClassState.TRUSTED)
                entry.record(cycle_index, "Trusted", 0)
                report.trusted += 1
                continue
            if ledger.remaining_cls_ms < worst_case:
                break
            image = dataset.image(ann.image_id)
            task = build_class_task(
                entry, image, cfg, f"cls-c{cycle_index}-{seq:06d}", cycle_index
            )
            verdict = oracle.verify_class(task, matched_class_of(entry, dataset))
            verdict.matches(task)
            apply_class_verdict(
                pool, entry, verdict, dataset.num_classes, ledger, costs, cycle_index, report
            )
    report.stopped_reason = (
        BUDGET_EXHAUSTED if ledger.remaining_cls_ms < worst_case else QUEUE_EXHAUSTED
    )
    report.spent_ms = ledger.spent_cls_ms - spent_before
    return report


def matched_class_of(entry: PoolEntry, dataset: Dataset) -> int | None:
    """Class of the GT object recorded for this entry at box-verification time."""
    if entry.matched_gt_id is None:
        return None
    image = dataset.image(entry.annotation.image_id)
    for obj in image.gt_objects:
        if obj.id == entry.matched_gt_id:
            return obj.class_id
    raise ValidationError(
        f"annotation {entry.annotation.id}: matched gt {entry.matched_gt_id!r} "
        f"not found in image {entry.annotation.image_id}"
    )


def full_annotation_baseline(
    images: list[ImageRecord],
    ledger: CostLedger,
    profile: str,
    custom: dict | None = None,
) -> PassReport:
    """Exhaustive per-image annotation: the conventional comparator.

    Charges the full-image price per image, in order, until the budget can no
    longer afford the next one. The first `tasks_issued` images of the input
    are the ones acquired.
    """
    costs = CostTable.for_profile(profile, custom)
    report = PassReport(pass_kind=FULL_IMAGE)
    spent_before = ledger.spent_loc_ms
    for image in images:
        if ledger.remaining_loc_ms < costs.full_image_ms:
            break
        ledger.charge_loc(f"img-{image.id}", FULL_IMAGE, costs.full_image_ms)
        report.tasks_issued += 1
        report.keeps += 1
    report.stopped_reason = (
        BUDGET_EXHAUSTED if ledger.remaining_loc_ms < costs.full_image_ms else QUEUE_EXHAUSTED
    )
    report.spent_ms = ledger.spent_loc_ms - spent_before
    return report


def split_budget(cycle_budget_ms: int, loc_fraction: float) -> CostLedger:
    """Decouple one cycle's budget into box and class channels."""
    if cycle_budget_ms < 0:
        raise ValidationError(f"cycle budget must be non-negative, got {cycle_budget_ms}")
    loc = int(cycle_budget_ms * loc_fraction)
    return CostLedger(
        budget_total_ms=cycle_budget_ms,
        budget_loc_ms=loc,
        budget_cls_ms=cycle_budget_ms - loc,
    )
