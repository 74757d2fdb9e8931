"""Multi-cycle orchestration: predictions in, verified pool and reports out.

Each cycle scores a fresh prediction batch, refreshes the unverified part of
the pool, splits the cycle budget into box and class channels, runs both
verification passes, and snapshots metrics. Unspent budget carries into the
next cycle. The mock provider closes the loop by shrinking its noise as the
verified fraction grows, standing in for retraining on the enlarged pool.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

from .engine import PassReport, run_box_pass, run_class_pass, split_budget
from .metrics import MetricsBundle, compute_bundle
from .model import (
    BoxState,
    CostLedger,
    Dataset,
    Detection,
    ExperimentConfig,
    InfeasibleError,
    PoolState,
    ValidationError,
)
from .geometry import hflip_box
from .oracle import SimulatedOracle
from .rng import substream
from .selection import filter_by_confidence, rank_descending
from .synth import NoiseParams, mock_detect
from .uncertainty import score_annotations

IMPROVE_ALPHA = 1.0
JITTER_FLOOR = 0.1


@dataclass
class CycleReport:
    cycle_index: int
    pool_snapshot_ref: str
    box_pass: PassReport
    class_pass: PassReport
    metrics: MetricsBundle
    budget_in_ms: int
    carryover_out_ms: int
    ledger: dict
    cumulative_spent_loc_ms: int
    cumulative_spent_cls_ms: int
    pool_snapshot: dict = field(repr=False, default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "cycle_index": self.cycle_index,
            "pool_snapshot_ref": self.pool_snapshot_ref,
            "box_pass": self.box_pass.to_dict(),
            "class_pass": self.class_pass.to_dict(),
            "metrics": self.metrics.to_dict(),
            "budget_in_ms": self.budget_in_ms,
            "carryover_out_ms": self.carryover_out_ms,
            "ledger": self.ledger,
            "cumulative_spent_loc_ms": self.cumulative_spent_loc_ms,
            "cumulative_spent_cls_ms": self.cumulative_spent_cls_ms,
        }


class MockDetectorProvider:
    """Closed-loop prediction source over a synthetic dataset.

    Effective jitter shrinks linearly in the pool's verified fraction, down
    to a floor; ground truth already pinned down by a verified or corrected
    box is not re-predicted.
    """

    def __init__(self, dataset: Dataset, noise: NoiseParams, seed: int):
        self.dataset = dataset
        self.noise = noise
        self.seed = seed

    def verified_fraction(self, pool: PoolState) -> float:
        total = self.dataset.total_gt_objects()
        if total == 0:
            return 0.0
        settled = sum(
            1 for e in pool if e.box_state in (BoxState.VERIFIED_KEPT, BoxState.CORRECTED)
        )
        return min(1.0, settled / total)

    def _uncovered_view(self, pool: PoolState) -> Dataset:
        covered = pool.covered_gt()
        images = []
        for img in self.dataset.images:
            remaining = [g for g in img.gt_objects if (img.id, g.id) not in covered]
            images.append(
                type(img)(
                    id=img.id,
                    width=img.width,
                    height=img.height,
                    gt_objects=remaining,
                    raster_path=img.raster_path,
                )
            )
        return Dataset(images=images, categories=self.dataset.categories)

    def predictions(
        self, cycle_index: int, pool: PoolState
    ) -> tuple[list[Detection], list[Detection]]:
        v = self.verified_fraction(pool)
        scale = max(1.0 - IMPROVE_ALPHA * v, JITTER_FLOOR)
        effective = self.noise.with_jitter_scale(scale)
        child_seed = int(substream(self.seed, f"mock/c{cycle_index}").integers(0, 2**63 - 1))
        primary, secondary_flipped = mock_detect(
            self._uncovered_view(pool), effective, child_seed, tag=f"c{cycle_index}:"
        )
        return primary, unflip_branch(secondary_flipped, self.dataset)


class FileIngestProvider:
    """Replays prediction files, one (branch-1, branch-2) pair per cycle."""

    def __init__(self, dataset: Dataset, cycle_paths: list[tuple[str, str]]):
        self.dataset = dataset
        self.cycle_paths = cycle_paths

    def predictions(
        self, cycle_index: int, pool: PoolState
    ) -> tuple[list[Detection], list[Detection]]:
        from .storage import load_predictions

        if cycle_index >= len(self.cycle_paths):
            raise InfeasibleError(
                f"no prediction files for cycle {cycle_index}; "
                f"{len(self.cycle_paths)} cycle(s) configured"
            )
        p1, p2 = self.cycle_paths[cycle_index]
        return (
            load_predictions(p1, branch=1, dataset=self.dataset),
            load_predictions(p2, branch=2, dataset=self.dataset),
        )


def unflip_branch(detections: list[Detection], dataset: Dataset) -> list[Detection]:
    """Map flipped-frame boxes back into the primary frame."""
    out = []
    for det in detections:
        image = dataset.image(det.image_id)
        out.append(
            Detection(
                id=det.id,
                image_id=det.image_id,
                box=hflip_box(det.box, image.width),
                class_dist=det.class_dist,
            )
        )
    return out


def run_cycle(
    provider,
    pool: PoolState,
    cycle_budget_ms: int,
    cfg: ExperimentConfig,
    dataset: Dataset,
    cycle_index: int = 0,
    oracle=None,
) -> tuple[CycleReport, CostLedger]:
    """One full active-learning round over the pool.

    Provider failure aborts before the pool is touched. A zero budget is
    legal: both passes stop immediately with nothing charged.
    """
    if cycle_budget_ms < 0:
        raise ValidationError(f"cycle budget must be non-negative, got {cycle_budget_ms}")
    primary, secondary = provider.predictions(cycle_index, pool)

    scored = score_annotations(dataset, primary, secondary)
    admitted = filter_by_confidence(scored, cfg.tau_conf)
    pool.refresh_pseudo(dataset, admitted)

    if oracle is None:
        oracle = SimulatedOracle(dataset, cfg, substream(cfg.seed, f"oracle/c{cycle_index}"))
    ledger = split_budget(cycle_budget_ms, cfg.loc_budget_fraction)

    box_queue = rank_descending(
        [e.annotation for e in pool if e.box_state == BoxState.PSEUDO], "u_loc"
    )
    box_report = run_box_pass(
        pool, [a.id for a in box_queue], oracle, ledger, cfg, dataset, cycle_index
    )

    ledger.transfer_loc_leftover()
    cls_queue = rank_descending([e.annotation for e in pool.class_eligible()], "u_cls")
    class_report = run_class_pass(
        pool, [a.id for a in cls_queue], oracle, ledger, cfg, dataset, cycle_index
    )

    report = CycleReport(
        cycle_index=cycle_index,
        pool_snapshot_ref=f"pool_cycle_{cycle_index:03d}.json",
        box_pass=box_report,
        class_pass=class_report,
        metrics=compute_bundle(pool, dataset, ledger),
        budget_in_ms=cycle_budget_ms,
        carryover_out_ms=ledger.remaining_ms,
        ledger=ledger.to_dict(),
        cumulative_spent_loc_ms=0,
        cumulative_spent_cls_ms=0,
        pool_snapshot=copy.deepcopy(pool.to_dict()),
    )
    return report, ledger


def run_experiment(
    cfg: ExperimentConfig, dataset: Dataset, provider
) -> tuple[list[CycleReport], PoolState]:
    """Run every configured cycle, carrying unspent budget forward."""
    pool = PoolState()
    reports: list[CycleReport] = []
    carryover = 0
    cum_loc = 0
    cum_cls = 0
    for i, planned in enumerate(cfg.cycle_budgets_ms):
        report, ledger = run_cycle(
            provider, pool, planned + carryover, cfg, dataset, cycle_index=i
        )
        carryover = ledger.remaining_ms
        cum_loc += ledger.spent_loc_ms
        cum_cls += ledger.spent_cls_ms
        report.cumulative_spent_loc_ms = cum_loc
        report.cumulative_spent_cls_ms = cum_cls
        reports.append(report)
    return reports, pool


def run_baseline(
    cfg: ExperimentConfig, dataset: Dataset
) -> tuple[list[CycleReport], PoolState]:
    """Exhaustive full-image annotation under the same total budget.

    Produces one report; the pool holds every ground-truth object of each
    image the budget could cover, as fully settled entries.
    """
    from .engine import FULL_IMAGE, full_annotation_baseline
    from .model import ClassDistribution, ClassState, PoolEntry, PseudoAnnotation

    total = sum(cfg.cycle_budgets_ms)
    ledger = CostLedger(budget_total_ms=total, budget_loc_ms=total, budget_cls_ms=0)
    report = full_annotation_baseline(
        dataset.images, ledger, cfg.dataset_profile, cfg.custom_costs
    )

    pool = PoolState()
    for image in dataset.images[: report.tasks_issued]:
        for obj in image.gt_objects:
            ann = PseudoAnnotation(
                id=f"gt:{image.id}:{obj.id}",
                image_id=image.id,
                box=obj.box,
                class_dist=ClassDistribution.one_hot(obj.class_id, dataset.num_classes),
                confidence=1.0,
                u_loc=0.0,
                u_cls=0.0,
                paired=True,
            )
            entry = PoolEntry(
                annotation=ann,
                box_state=BoxState.VERIFIED_KEPT,
                class_state=ClassState.VERIFIED_KEPT,
                matched_gt_id=obj.id,
            )
            entry.record(0, FULL_IMAGE, 0)
            pool.entries[ann.id] = entry

    cycle = CycleReport(
        cycle_index=0,
        pool_snapshot_ref="pool_cycle_000.json",
        box_pass=report,
        class_pass=PassReport(pass_kind="Class"),
        metrics=compute_bundle(pool, dataset, ledger),
        budget_in_ms=total,
        carryover_out_ms=ledger.remaining_ms,
        ledger=ledger.to_dict(),
        cumulative_spent_loc_ms=ledger.spent_loc_ms,
        cumulative_spent_cls_ms=ledger.spent_cls_ms,
        pool_snapshot=copy.deepcopy(pool.to_dict()),
    )
    return [cycle], pool
