import pytest

from delr import (
    BoxState,
    ClassDistribution,
    ClassState,
    Detection,
    ExperimentConfig,
    InfeasibleError,
    FileIngestProvider,
    MockDetectorProvider,
    NoiseParams,
    PoolState,
    generate_scenario,
    new_pool,
    run_baseline,
    run_cycle,
    run_experiment,
)
from delr.engine import BUDGET_EXHAUSTED
from helpers import annotation, box, dataset, gt, image


QUIET = NoiseParams(jitter_frac=0.05, class_confusion=0.02, miss_rate=0.02, spurious_rate=0.1)


def scenario(seed=3, num_images=10):
    return generate_scenario(
        num_images=num_images,
        num_classes=4,
        objects_per_image_range=(1, 3),
        box_size_range=(24, 72),
        image_size=(320, 240),
        seed=seed,
    )


class PerfectProvider:
    """Both branches emit exact ground truth with one-hot classes."""

    def __init__(self, ds):
        self.ds = ds

    def predictions(self, cycle_index, pool):
        primary, secondary = [], []
        for img in self.ds.images:
            for j, g in enumerate(img.gt_objects):
                dist = ClassDistribution.one_hot(g.class_id, self.ds.num_classes)
                primary.append(
                    Detection(id=f"c{cycle_index}:{img.id}:{j}", image_id=img.id, box=g.box, class_dist=dist)
                )
                secondary.append(
                    Detection(id=f"c{cycle_index}:{img.id}:{j}:s", image_id=img.id, box=g.box, class_dist=dist)
                )
        return primary, secondary


def test_perfect_provider_all_kept_in_tie_break_order():
    ds = scenario()
    cfg = ExperimentConfig(seed=1)
    pool = PoolState()
    report, ledger = run_cycle(PerfectProvider(ds), pool, 10**9, cfg, ds)
    total = ds.total_gt_objects()
    assert report.box_pass.tasks_issued == total
    assert report.box_pass.keeps == total
    assert report.box_pass.drops == 0 and report.box_pass.corrections == 0
    # all uncertainties tie at zero, so issue order is (image_id, id)
    settled = [e.annotation for e in pool]
    assert [a.id for a in settled] == sorted(a.id for a in settled)
    assert report.metrics.iou_buckets == (0.0, 0.0, 1.0)
    assert report.metrics.cls_acc_given_correct_loc == 1.0


def test_zero_budget_cycle_reports_budget_exhausted():
    ds = scenario()
    cfg = ExperimentConfig(seed=1)
    pool = PoolState()
    report, ledger = run_cycle(PerfectProvider(ds), pool, 0, cfg, ds)
    assert report.box_pass.tasks_issued == 0
    assert report.class_pass.tasks_issued == 0
    assert report.box_pass.stopped_reason == BUDGET_EXHAUSTED
    assert report.class_pass.stopped_reason == BUDGET_EXHAUSTED
    assert ledger.spent_total_ms == 0
    # predictions still landed in the pool as unverified entries
    assert len(pool) == ds.total_gt_objects()
    assert all(e.box_state == BoxState.PSEUDO for e in pool)


def test_provider_failure_leaves_pool_untouched():
    ds = scenario()

    class Exploding:
        def predictions(self, cycle_index, pool):
            raise InfeasibleError("no files")

    pool = new_pool(ds, [annotation("a0", ds.images[0].id, box(0, 0, 10, 10), (1, 0, 0, 0))])
    with pytest.raises(InfeasibleError):
        run_cycle(Exploding(), pool, 1000, ExperimentConfig(), ds)
    assert [e.annotation.id for e in pool] == ["a0"]


def test_experiment_is_deterministic():
    ds = scenario()
    cfg = ExperimentConfig(seed=42, cycle_budgets_ms=[400000, 400000])
    runs = []
    for _ in range(2):
        provider = MockDetectorProvider(ds, QUIET, seed=cfg.seed)
        reports, pool = run_experiment(cfg, ds, provider)
        runs.append(([r.to_dict() for r in reports], pool.to_dict()))
    assert runs[0] == runs[1]


def test_carryover_flows_between_cycles():
    ds = scenario(num_images=3)
    cfg = ExperimentConfig(seed=5, cycle_budgets_ms=[10**7, 10**7])
    provider = MockDetectorProvider(ds, QUIET, seed=5)
    reports, _ = run_experiment(cfg, ds, provider)
    assert reports[0].carryover_out_ms > 0  # tiny pool cannot absorb 10^7 ms
    assert reports[1].budget_in_ms == 10**7 + reports[0].carryover_out_ms
    assert reports[1].cumulative_spent_loc_ms >= reports[0].cumulative_spent_loc_ms
    assert reports[1].cumulative_spent_cls_ms >= reports[0].cumulative_spent_cls_ms


def test_experiment_without_budgets_is_empty():
    ds = scenario(num_images=2)
    reports, pool = run_experiment(
        ExperimentConfig(seed=1), ds, MockDetectorProvider(ds, QUIET, seed=1)
    )
    assert reports == [] and len(pool) == 0


def test_settled_entries_survive_refresh_across_cycles():
    ds = scenario()
    cfg = ExperimentConfig(seed=9, cycle_budgets_ms=[300000, 300000, 300000])
    provider = MockDetectorProvider(ds, QUIET, seed=9)
    reports, _ = run_experiment(cfg, ds, provider)
    settled_counts = []
    for r in reports:
        states = [e["box_state"] for e in r.pool_snapshot["entries"]]
        settled_counts.append(sum(s != "Pseudo" for s in states))
    assert settled_counts == sorted(settled_counts)


def test_total_spend_never_exceeds_total_budget():
    ds = scenario()
    budgets = [150000, 80000, 220000]
    cfg = ExperimentConfig(seed=7, cycle_budgets_ms=budgets)
    provider = MockDetectorProvider(ds, QUIET, seed=7)
    reports, _ = run_experiment(cfg, ds, provider)
    total_spent = reports[-1].cumulative_spent_loc_ms + reports[-1].cumulative_spent_cls_ms
    assert total_spent <= sum(budgets)


def test_mock_provider_improves_and_shrinks_its_workload():
    ds = scenario()
    provider = MockDetectorProvider(ds, QUIET, seed=3)
    pool = PoolState()
    assert provider.verified_fraction(pool) == 0.0
    cfg = ExperimentConfig(seed=3, cycle_budgets_ms=[10**7])
    reports, pool = run_experiment(cfg, ds, provider)
    assert provider.verified_fraction(pool) > 0.5
    # covered ground truth is not re-predicted
    primary, _ = provider.predictions(1, pool)
    covered = pool.covered_gt()
    remaining_gt = ds.total_gt_objects() - len(covered)
    assert len([d for d in primary if ":sp" not in d.id]) <= remaining_gt


def test_file_provider_runs_out_of_cycles():
    ds = scenario(num_images=2)
    provider = FileIngestProvider(ds, [])
    with pytest.raises(InfeasibleError):
        provider.predictions(0, PoolState())


def test_cycle_report_serialization_excludes_snapshot():
    ds = scenario(num_images=2)
    report, _ = run_cycle(PerfectProvider(ds), PoolState(), 10**6, ExperimentConfig(), ds)
    d = report.to_dict()
    assert "pool_snapshot" not in d
    assert d["pool_snapshot_ref"] == "pool_cycle_000.json"
    assert set(d["ledger"]) == {
        "budget_total_ms",
        "budget_loc_ms",
        "budget_cls_ms",
        "spent_loc_ms",
        "spent_cls_ms",
        "entries",
    }


# --------------------------------------------------------------- baseline


def test_baseline_pool_holds_gt_of_charged_images():
    ds = scenario()
    per_image = 102600
    cfg = ExperimentConfig(seed=1, cycle_budgets_ms=[3 * per_image + 500])
    reports, pool = run_baseline(cfg, ds)
    (report,) = reports
    assert report.box_pass.tasks_issued == 3
    want = sum(len(img.gt_objects) for img in ds.images[:3])
    assert len(pool) == want
    assert all(e.box_state == BoxState.VERIFIED_KEPT for e in pool)
    assert all(e.class_state == ClassState.VERIFIED_KEPT for e in pool)
    assert report.metrics.iou_buckets == (0.0, 0.0, 1.0)
    assert report.metrics.cls_acc_given_correct_loc == 1.0


def test_decoupled_queries_settle_more_objects_than_full_annotation():
    ds = scenario(seed=17, num_images=30)
    budget = 10**6
    cfg = ExperimentConfig(seed=17, cycle_budgets_ms=[budget])
    _, delr_pool = run_experiment(cfg, ds, MockDetectorProvider(ds, QUIET, seed=17))
    _, base_pool = run_baseline(cfg, ds)
    delr_settled = sum(
        1 for e in delr_pool if e.box_state in (BoxState.VERIFIED_KEPT, BoxState.CORRECTED)
    )
    assert delr_settled > len(base_pool)
