"""Verification tasks, verdicts, and the simulated annotator.

The simulated oracle answers tasks by consulting ground truth, optionally
with a uniform disturbance added to the decision thresholds to model an
imprecise human judge. A replay oracle re-answers tasks from a recorded
verdict log; both are drop-in answer sources for the engine.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .geometry import iou
from .model import (
    BoundingBox,
    ExperimentConfig,
    GroundTruthObject,
    ImageRecord,
    ValidationError,
)


class TaskKind(str, Enum):
    BOX = "Box"
    CLASS = "Class"


class Answer(str, Enum):
    BOX_KEEP = "BoxKeep"
    BOX_DROP = "BoxDrop"
    BOX_CORRECT = "BoxCorrect"
    CLASS_KEEP = "ClassKeep"
    CLASS_CORRECT = "ClassCorrect"


_BOX_ANSWERS = {Answer.BOX_KEEP, Answer.BOX_DROP, Answer.BOX_CORRECT}
_CLASS_ANSWERS = {Answer.CLASS_KEEP, Answer.CLASS_CORRECT}


@dataclass(frozen=True)
class VerificationTask:
    """One question for the oracle about one pseudo annotation."""

    task_id: str
    kind: TaskKind
    image_id: str
    annotation_id: str
    region: BoundingBox
    pseudo_box: BoundingBox
    pseudo_class: int
    issued_cycle: int

    def __post_init__(self):
        if not self.region.contains(self.pseudo_box):
            raise ValidationError(
                f"task {self.task_id}: region {self.region.as_tuple()} does not "
                f"contain pseudo box {self.pseudo_box.as_tuple()}"
            )

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "kind": self.kind.value,
            "image_id": self.image_id,
            "annotation_id": self.annotation_id,
            "region": self.region.to_list(),
            "pseudo_box": self.pseudo_box.to_list(),
            "pseudo_class": self.pseudo_class,
            "issued_cycle": self.issued_cycle,
        }


@dataclass(frozen=True)
class Verdict:
    """The oracle's answer; payload presence is tied to the answer kind."""

    task_id: str
    answer: Answer
    new_box: BoundingBox | None = None
    new_class: int | None = None

    def __post_init__(self):
        if self.answer == Answer.BOX_CORRECT:
            if self.new_box is None:
                raise ValidationError(f"verdict {self.task_id}: BoxCorrect needs new_box")
        elif self.new_box is not None:
            raise ValidationError(f"verdict {self.task_id}: new_box only valid for BoxCorrect")
        if self.answer == Answer.CLASS_CORRECT:
            if self.new_class is None:
                raise ValidationError(f"verdict {self.task_id}: ClassCorrect needs new_class")
        elif self.new_class is not None:
            raise ValidationError(
                f"verdict {self.task_id}: new_class only valid for ClassCorrect"
            )

    def matches(self, task: VerificationTask) -> None:
        if self.task_id != task.task_id:
            raise ValidationError(
                f"verdict for task {self.task_id!r} applied to task {task.task_id!r}"
            )
        expected = _BOX_ANSWERS if task.kind == TaskKind.BOX else _CLASS_ANSWERS
        if self.answer not in expected:
            raise ValidationError(
                f"task {task.task_id}: answer {self.answer.value} does not fit "
                f"a {task.kind.value} task"
            )


def best_gt_match(
    box: BoundingBox, gt_objects: list[GroundTruthObject]
) -> tuple[GroundTruthObject | None, float]:
    """Ground-truth object with the highest IoU against `box`.

    Ties break toward the lowest object id; (None, 0.0) when nothing overlaps.
    """
    best: GroundTruthObject | None = None
    best_iou = 0.0
    for obj in sorted(gt_objects, key=lambda g: g.id):
        ov = iou(box, obj.box)
        if ov > best_iou:
            best, best_iou = obj, ov
    return best, best_iou


def simulated_verify_box(
    task: VerificationTask,
    gt: ImageRecord,
    cfg: ExperimentConfig,
    rng: np.random.Generator,
) -> Verdict:
    """Judge a pseudo box against ground truth.

    Candidates are the GT objects overlapping the task's search region. The
    best candidate's IoU with the pseudo box is compared against disturbed
    thresholds: keep at or above the positive bar, drop below the background
    bar (or with no candidate at all), correct to the best box in between.

    Both disturbances are drawn on every call, so the stream stays aligned
    across tasks regardless of which case fires.
    """
    if task.kind != TaskKind.BOX:
        raise ValidationError(f"task {task.task_id} is not a box task")
    # Both draws happen on every call, keeping the stream aligned across
    # tasks regardless of which case fires or whether a width is zero.
    delta_p = float(rng.uniform(0.0, cfg.delta_pos))
    delta_b = float(rng.uniform(0.0, cfg.delta_bg))
    pos_bar = min(cfg.iou_pos + delta_p, 1.0)
    bg_bar = min(cfg.iou_bg + delta_b, pos_bar)

    candidates = [g for g in gt.gt_objects if iou(g.box, task.region) > 0.0]
    if not candidates:
        return Verdict(task.task_id, Answer.BOX_DROP)
    best, best_iou = best_gt_match(task.pseudo_box, candidates)
    if best is None:
        # All candidates at IoU 0: the argmax is still a real object (lowest
        # id), reachable in the correct branch when the background bar is 0.
        best = min(candidates, key=lambda g: g.id)
    if best_iou >= pos_bar:
        return Verdict(task.task_id, Answer.BOX_KEEP)
    if best_iou < bg_bar:
        return Verdict(task.task_id, Answer.BOX_DROP)
    return Verdict(task.task_id, Answer.BOX_CORRECT, new_box=best.box)


def simulated_verify_class(task: VerificationTask, matched_gt_class: int | None) -> Verdict:
    """Judge a pseudo class against the class of the box-matched GT object."""
    if task.kind != TaskKind.CLASS:
        raise ValidationError(f"task {task.task_id} is not a class task")
    if matched_gt_class is None:
        raise ValidationError(
            f"task {task.task_id}: no matched ground-truth object recorded; "
            "the class task should never have been issued"
        )
    if task.pseudo_class == matched_gt_class:
        return Verdict(task.task_id, Answer.CLASS_KEEP)
    return Verdict(task.task_id, Answer.CLASS_CORRECT, new_class=matched_gt_class)


class SimulatedOracle:
    """Answer source backed by ground truth; one RNG stream per instance."""

    def __init__(self, dataset, cfg: ExperimentConfig, rng: np.random.Generator):
        self.dataset = dataset
        self.cfg = cfg
        self.rng = rng

    def verify_box(self, task: VerificationTask) -> Verdict:
        return simulated_verify_box(task, self.dataset.image(task.image_id), self.cfg, self.rng)

    def verify_class(self, task: VerificationTask, matched_gt_class: int | None) -> Verdict:
        return simulated_verify_class(task, matched_gt_class)


class ReplayOracle:
    """Re-answers tasks from a recorded verdict log.

    Verdicts are keyed by (kind, annotation_id): an annotation sees at most
    one box and one class question over an experiment, and keying this way
    keeps replay independent of task-id numbering.
    """

    def __init__(self, records: list[dict]):
        self._by_key: dict[tuple[str, str], dict] = {}
        for rec in records:
            key = (str(rec["kind"]), str(rec["annotation_id"]))
            if key in self._by_key:
                raise ValidationError(f"duplicate recorded verdict for {key}")
            self._by_key[key] = rec

    def _lookup(self, task: VerificationTask) -> Verdict:
        key = (task.kind.value, task.annotation_id)
        rec = self._by_key.get(key)
        if rec is None:
            raise ValidationError(f"no recorded verdict for {key}")
        answer = Answer(rec["answer"])
        new_box = BoundingBox.from_list(rec["new_box"]) if rec.get("new_box") else None
        new_class = int(rec["new_class"]) if rec.get("new_class") is not None else None
        return Verdict(task.task_id, answer, new_box=new_box, new_class=new_class)

    def verify_box(self, task: VerificationTask) -> Verdict:
        return self._lookup(task)

    def verify_class(self, task: VerificationTask, matched_gt_class: int | None) -> Verdict:
        return self._lookup(task)
