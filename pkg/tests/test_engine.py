import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delr import (
    Answer,
    BoxState,
    ClassState,
    CostLedger,
    CostTable,
    ExperimentConfig,
    PoolState,
    ReplayOracle,
    SimulatedOracle,
    ValidationError,
    Verdict,
    cost_of,
    full_annotation_baseline,
    iou,
    matched_class_of,
    new_pool,
    run_box_pass,
    run_class_pass,
    split_budget,
    substream,
)
from delr.engine import BUDGET_EXHAUSTED, QUEUE_EXHAUSTED, apply_box_verdict, costs_for
from helpers import annotation, box, dataset, gt, image


ZERO_DELTA = ExperimentConfig()


def scene():
    """One image, two GT objects of class 0 and 1."""
    img = image(
        "img0",
        width=200,
        height=200,
        objects=[gt("g0", box(0, 0, 10, 10), class_id=0), gt("g1", box(100, 100, 20, 20), class_id=1)],
    )
    return dataset([img], num_classes=3)


def pool_with(ds, specs):
    """specs: list of (ann_id, box, probs, u_loc, u_cls)."""
    anns = [
        annotation(ann_id, "img0", b, probs, u_loc=ul, u_cls=uc)
        for ann_id, b, probs, ul, uc in specs
    ]
    return new_pool(ds, anns)


def ledger_ms(loc, cls):
    return CostLedger(budget_total_ms=loc + cls, budget_loc_ms=loc, budget_cls_ms=cls)


def sim_oracle(ds, cfg=ZERO_DELTA, seed=0):
    return SimulatedOracle(ds, cfg, substream(seed, "oracle/c0"))


# --------------------------------------------------------------- cost table


def test_cost_table_voc_values():
    t = CostTable.for_profile("VOC-like")
    assert (t.verify_box_ms, t.verify_class_ms, t.draw_box_ms) == (1600, 2700, 35000)
    assert (t.assign_class_ms, t.full_image_ms) == (26000, 102600)


def test_cost_table_coco_overrides():
    t = CostTable.for_profile("COCO-like")
    assert t.assign_class_ms == 38000 and t.full_image_ms == 346000
    assert t.verify_box_ms == 1600  # shared with VOC


def test_cost_table_custom():
    t = CostTable.for_profile("Custom", {"verify_box_ms": 1000})
    assert t.verify_box_ms == 1000 and t.draw_box_ms == 35000
    with pytest.raises(ValidationError):
        CostTable.for_profile("Custom", {"verify_tax_ms": 9})
    with pytest.raises(ValidationError):
        CostTable.for_profile("Custom")


def test_cost_table_rejects_non_positive():
    with pytest.raises(ValidationError):
        CostTable(verify_box_ms=0)
    with pytest.raises(ValidationError):
        CostTable(draw_box_ms=-5)


def test_cost_of_lookup():
    assert cost_of("VerifyBox", "VOC-like") == 1600
    assert cost_of("AssignClass", "VOC-like") == 26000
    assert cost_of("FullImage", "COCO-like") == 346000
    with pytest.raises(ValidationError):
        cost_of("PaintBox", "VOC-like")


def test_split_budget():
    led = split_budget(100000, 0.5)
    assert (led.budget_loc_ms, led.budget_cls_ms) == (50000, 50000)
    led = split_budget(100001, 0.5)  # integer floor on the box side
    assert (led.budget_loc_ms, led.budget_cls_ms) == (50000, 50001)
    assert split_budget(7000, 0.0).budget_loc_ms == 0
    assert split_budget(7000, 1.0).budget_cls_ms == 0


# --------------------------------------------------------------- box pass


def test_single_keep_costs_verify_fee_only():
    ds = scene()
    pool = pool_with(ds, [("a0", box(0, 0, 10, 10), (1, 0, 0), 5.0, 0.0)])
    led = ledger_ms(40000, 0)
    report = run_box_pass(pool, ["a0"], sim_oracle(ds), led, ZERO_DELTA, ds)
    assert report.tasks_issued == 1 and report.keeps == 1
    assert report.spent_ms == 1600 and led.spent_loc_ms == 1600
    assert report.stopped_reason == QUEUE_EXHAUSTED
    assert pool.get("a0").box_state == BoxState.VERIFIED_KEPT
    assert pool.get("a0").matched_gt_id == "g0"
    assert pool.get("a0").history == [(0, "BoxKeep", 1600)]


def test_pass_stops_when_worst_case_does_not_fit():
    ds = scene()
    pool = pool_with(ds, [("a0", box(0, 0, 10, 10), (1, 0, 0), 5.0, 0.0)])
    led = ledger_ms(30000, 0)  # below 1600 + 35000
    report = run_box_pass(pool, ["a0"], sim_oracle(ds), led, ZERO_DELTA, ds)
    assert report.tasks_issued == 0 and led.spent_loc_ms == 0
    assert report.stopped_reason == BUDGET_EXHAUSTED
    assert pool.get("a0").box_state == BoxState.PSEUDO


def test_three_corrections_cost_accumulates():
    ds = scene()
    # all three at IoU 0.5 against g0 -> corrected to g0's box
    specs = [
        ("a0", box(0, 0, 10, 5), (1, 0, 0), 3.0, 0.0),
        ("a1", box(0, 5, 10, 10), (0, 1, 0), 2.0, 0.0),
        ("a2", box(5, 0, 10, 10), (0, 0, 1), 1.0, 0.0),
    ]
    pool = pool_with(ds, specs)
    led = ledger_ms(200000, 0)
    report = run_box_pass(pool, ["a0", "a1", "a2"], sim_oracle(ds), led, ZERO_DELTA, ds)
    assert report.corrections == 3
    assert report.spent_ms == 3 * 36600 == 109800
    for ann_id in ("a0", "a1", "a2"):
        e = pool.get(ann_id)
        assert e.box_state in (BoxState.CORRECTED, BoxState.DROPPED)  # merge may drop twins
        if e.box_state == BoxState.CORRECTED:
            assert e.annotation.box.as_tuple() == (0.0, 0.0, 10.0, 10.0)


def test_box_pass_issues_in_ranked_order():
    ds = scene()
    specs = [(f"a{i}", box(0, 0, 10, 10), (1, 0, 0), float(i), 0.0) for i in range(4)]
    pool = pool_with(ds, specs)
    led = ledger_ms(400000, 0)
    run_box_pass(pool, ["a3", "a2", "a1", "a0"], sim_oracle(ds), led, ZERO_DELTA, ds)
    assert [t for t, _, _ in led.entries[:4]] == [f"box-c0-{i:06d}" for i in range(4)]


def test_box_pass_rejects_already_settled_entries():
    ds = scene()
    pool = pool_with(ds, [("a0", box(0, 0, 10, 10), (1, 0, 0), 1.0, 0.0)])
    pool.get("a0").box_state = BoxState.DROPPED
    with pytest.raises(ValidationError):
        run_box_pass(pool, ["a0"], sim_oracle(ds), ledger_ms(50000, 0), ZERO_DELTA, ds)


def test_drop_far_from_any_gt():
    ds = scene()
    pool = pool_with(ds, [("a0", box(150, 20, 10, 10), (1, 0, 0), 1.0, 0.0)])
    led = ledger_ms(50000, 0)
    report = run_box_pass(pool, ["a0"], sim_oracle(ds), led, ZERO_DELTA, ds)
    assert report.drops == 1
    assert pool.get("a0").box_state == BoxState.DROPPED
    assert pool.get("a0").matched_gt_id is None


def test_malformed_correction_rejected_before_charging():
    ds = scene()
    pool = pool_with(ds, [("a0", box(0, 0, 10, 5), (1, 0, 0), 1.0, 0.0)])
    led = ledger_ms(50000, 0)
    costs = costs_for(ZERO_DELTA)
    entry = pool.get("a0")
    bad = Verdict("t0", Answer.BOX_CORRECT, new_box=box(190, 190, 50, 50))
    from delr import PassReport

    with pytest.raises(ValidationError):
        apply_box_verdict(
            pool, entry, bad, ds.image("img0"), led, costs, 0, PassReport(pass_kind="Box")
        )
    assert led.spent_loc_ms == 0 and led.entries == []


# --------------------------------------------------------------- class pass


def settled_pool(ds, specs):
    """Box-settled pool ready for a class pass; matched to g0 or g1 by position."""
    pool = pool_with(ds, specs)
    for e in pool:
        e.box_state = BoxState.VERIFIED_KEPT
        e.matched_gt_id = "g0" if e.annotation.box.x < 50 else "g1"
    return pool


def test_trusted_entries_cost_nothing():
    ds = scene()
    # ranked by u_cls desc; a2/a3 confident and below the median (0.45)
    specs = [
        ("a0", box(0, 0, 10, 10), (0.8, 0.2, 0.0), 0.0, 0.9),
        ("a1", box(0, 0, 10, 10), (0.85, 0.15, 0.0), 0.0, 0.6),
        ("a2", box(0, 0, 10, 10), (0.95, 0.05, 0.0), 0.0, 0.3),
        ("a3", box(0, 0, 10, 10), (0.99, 0.01, 0.0), 0.0, 0.1),
    ]
    pool = settled_pool(ds, specs)
    led = ledger_ms(0, 300000)
    report = run_class_pass(pool, ["a0", "a1", "a2", "a3"], sim_oracle(ds), led, ZERO_DELTA, ds)
    assert report.trusted == 2 and report.tasks_issued == 2
    assert pool.get("a2").class_state == ClassState.TRUSTED
    assert pool.get("a3").class_state == ClassState.TRUSTED
    assert pool.get("a3").history == [(0, "Trusted", 0)]
    # only the two verified entries were charged
    assert led.spent_cls_ms == report.spent_ms == 2 * 2700


def test_confident_but_above_median_is_still_verified():
    ds = scene()
    specs = [
        ("a0", box(0, 0, 10, 10), (0.95, 0.05, 0.0), 0.0, 0.9),  # conf high, u_cls high
        ("a1", box(0, 0, 10, 10), (0.6, 0.4, 0.0), 0.0, 0.1),
    ]
    pool = settled_pool(ds, specs)
    led = ledger_ms(0, 300000)
    report = run_class_pass(pool, ["a0", "a1"], sim_oracle(ds), led, ZERO_DELTA, ds)
    # median is 0.5; a0 fails u_cls < tau, a1 fails confidence
    assert report.trusted == 0 and report.tasks_issued == 2


def test_wrong_class_costs_verify_plus_assign():
    ds = scene()
    # matched to g0 (class 0) but argmax is class 1
    specs = [("a0", box(0, 0, 10, 10), (0.1, 0.9, 0.0), 0.0, 0.5)]
    pool = settled_pool(ds, specs)
    led = ledger_ms(0, 100000)
    report = run_class_pass(pool, ["a0"], sim_oracle(ds), led, ZERO_DELTA, ds)
    assert report.corrections == 1
    assert report.spent_ms == 2700 + 26000 == 28700
    e = pool.get("a0")
    assert e.class_state == ClassState.CORRECTED
    assert e.annotation.class_dist.probs == (1.0, 0.0, 0.0)
    assert e.annotation.confidence == 1.0


def test_admission_failure_ends_whole_pass_even_for_later_trustables():
    ds = scene()
    specs = [
        ("a0", box(0, 0, 10, 10), (0.6, 0.4, 0.0), 0.0, 0.9),  # needs verification
        ("a1", box(0, 0, 10, 10), (0.99, 0.01, 0.0), 0.0, 0.1),  # would be trusted
    ]
    pool = settled_pool(ds, specs)
    led = ledger_ms(0, 10000)  # below 2700 + 26000
    report = run_class_pass(pool, ["a0", "a1"], sim_oracle(ds), led, ZERO_DELTA, ds)
    assert report.tasks_issued == 0 and report.trusted == 0
    assert report.stopped_reason == BUDGET_EXHAUSTED
    assert pool.get("a1").class_state == ClassState.PSEUDO


def test_trusted_before_the_break_still_counts():
    ds = scene()
    specs = [
        ("a0", box(0, 0, 10, 10), (0.99, 0.01, 0.0), 0.0, 0.1),  # trusted first
        ("a1", box(0, 0, 10, 10), (0.6, 0.4, 0.0), 0.0, 0.9),
    ]
    pool = settled_pool(ds, specs)
    led = ledger_ms(0, 10000)
    # ranked order puts a1 (u_cls 0.9) first; a0 second. Trust check precedes
    # admission, so a0 is trusted only if reached before the break.
    report = run_class_pass(pool, ["a1", "a0"], sim_oracle(ds), led, ZERO_DELTA, ds)
    assert report.tasks_issued == 0 and report.trusted == 0
    assert pool.get("a0").class_state == ClassState.PSEUDO


def test_class_pass_rejects_unsettled_boxes():
    ds = scene()
    pool = pool_with(ds, [("a0", box(0, 0, 10, 10), (1, 0, 0), 0.0, 0.0)])
    with pytest.raises(ValidationError):
        run_class_pass(pool, ["a0"], sim_oracle(ds), ledger_ms(0, 50000), ZERO_DELTA, ds)


def test_matched_class_resolution():
    ds = scene()
    pool = settled_pool(ds, [("a0", box(100, 100, 20, 20), (0, 1, 0), 0.0, 0.0)])
    e = pool.get("a0")
    assert matched_class_of(e, ds) == 1  # matched to g1
    e.matched_gt_id = None
    assert matched_class_of(e, ds) is None
    e.matched_gt_id = "ghost"
    with pytest.raises(ValidationError):
        matched_class_of(e, ds)


# --------------------------------------------------------------- merging


def test_duplicate_corrections_merge_keeping_earliest():
    ds = scene()
    specs = [
        ("a0", box(0, 0, 10, 5), (1, 0, 0), 2.0, 0.0),  # IoU 0.5 vs g0
        ("a1", box(0, 5, 10, 10), (1, 0, 0), 1.0, 0.0),  # also corrects to g0
    ]
    pool = pool_with(ds, specs)
    led = ledger_ms(200000, 0)
    report = run_box_pass(pool, ["a0", "a1"], sim_oracle(ds), led, ZERO_DELTA, ds)
    assert report.corrections == 2 and report.merges == 1
    assert pool.get("a0").box_state == BoxState.CORRECTED
    assert pool.get("a1").box_state == BoxState.DROPPED
    assert (0, "MergeDuplicate", 0) in pool.get("a1").history
    assert ("merge:a1", "MergeDuplicate", 0) in led.entries


def test_merge_requires_same_class():
    ds = scene()
    specs = [
        ("a0", box(0, 0, 10, 5), (1, 0, 0), 2.0, 0.0),
        ("a1", box(0, 5, 10, 10), (0, 1, 0), 1.0, 0.0),  # different argmax class
    ]
    pool = pool_with(ds, specs)
    led = ledger_ms(200000, 0)
    report = run_box_pass(pool, ["a0", "a1"], sim_oracle(ds), led, ZERO_DELTA, ds)
    assert report.merges == 0
    assert pool.get("a1").box_state == BoxState.CORRECTED


# --------------------------------------------------------------- invariants


@given(st.integers(min_value=0, max_value=300000), st.integers(min_value=0, max_value=100000))
@settings(max_examples=30, deadline=None)
def test_budget_never_overdrawn(loc_budget, cls_budget):
    ds = scene()
    specs = [
        (f"a{i}", box(float(i), 0, 10, 10 - (i % 3) * 2), (1, 0, 0), float(10 - i), 0.1 * i)
        for i in range(8)
    ]
    pool = pool_with(ds, specs)
    led = CostLedger(loc_budget + cls_budget, loc_budget, cls_budget)
    oracle = sim_oracle(ds)
    run_box_pass(pool, [f"a{i}" for i in range(8)], oracle, led, ZERO_DELTA, ds)
    led.transfer_loc_leftover()
    eligible = [e.annotation.id for e in pool.class_eligible()]
    run_class_pass(pool, eligible, oracle, led, ZERO_DELTA, ds)
    # every prefix of the ledger stays within the (final) channel budgets
    loc_total = cls_total = 0
    for _, action, cost in led.entries:
        if action in ("VerifyBox", "DrawBox", "FullImage"):
            loc_total += cost
        else:
            cls_total += cost
        assert loc_total <= led.budget_loc_ms
        assert cls_total <= led.budget_cls_ms
    assert loc_total + cls_total == led.spent_total_ms


def test_post_pass_purity_on_a_random_scenario():
    from delr import NoiseParams, generate_scenario, mock_detect, score_annotations

    ds = generate_scenario(
        num_images=15,
        num_classes=5,
        objects_per_image_range=(1, 4),
        box_size_range=(20, 80),
        image_size=(400, 300),
        seed=11,
    )
    primary, secondary = mock_detect(ds, NoiseParams(), seed=12)
    anns = score_annotations(ds, primary, secondary)
    pool = new_pool(ds, anns)
    led = ledger_ms(10**9, 0)
    ranked = [a.id for a in anns]
    run_box_pass(pool, ranked, sim_oracle(ds), led, ZERO_DELTA, ds)
    for e in pool.non_dropped():
        img = ds.image(e.annotation.image_id)
        best = max(iou(e.annotation.box, g.box) for g in img.gt_objects)
        exact = any(e.annotation.box.as_tuple() == g.box.as_tuple() for g in img.gt_objects)
        assert best >= 0.7 or exact


def test_replay_reproduces_pool_bit_exactly():
    ds = scene()
    specs = [
        ("a0", box(0, 0, 10, 8), (0.9, 0.1, 0.0), 3.0, 0.8),
        ("a1", box(0, 0, 10, 5), (0.2, 0.8, 0.0), 2.0, 0.2),
        ("a2", box(150, 20, 10, 10), (1, 0, 0), 1.0, 0.5),
    ]

    class Recording:
        def __init__(self, inner):
            self.inner, self.records = inner, []

        def _log(self, task, v):
            self.records.append(
                {
                    "kind": task.kind.value,
                    "annotation_id": task.annotation_id,
                    "answer": v.answer.value,
                    "new_box": v.new_box.to_list() if v.new_box else None,
                    "new_class": v.new_class,
                }
            )
            return v

        def verify_box(self, task):
            return self._log(task, self.inner.verify_box(task))

        def verify_class(self, task, matched):
            return self._log(task, self.inner.verify_class(task, matched))

    def run(oracle_factory):
        pool = pool_with(ds, specs)
        led = ledger_ms(300000, 300000)
        oracle = oracle_factory()
        run_box_pass(pool, ["a0", "a1", "a2"], oracle, led, ZERO_DELTA, ds)
        led.transfer_loc_leftover()
        eligible = [e.annotation.id for e in pool.class_eligible()]
        run_class_pass(pool, eligible, oracle, led, ZERO_DELTA, ds)
        return pool, oracle

    recorded, rec_oracle = run(lambda: Recording(sim_oracle(ds)))
    replayed, _ = run(lambda: ReplayOracle(rec_oracle.records))
    assert replayed.to_dict() == recorded.to_dict()


# --------------------------------------------------------------- baseline


def test_baseline_time_for_413_images():
    images = [image(f"im{i}", width=100, height=100) for i in range(413)]
    led = CostLedger(10**9, 10**9, 0)
    report = full_annotation_baseline(images, led, "VOC-like")
    assert report.tasks_issued == 413
    assert led.spent_loc_ms == 413 * 102600 == 42373800
    assert abs(led.spent_loc_ms / 3600000 - 11.77) < 0.01  # about 11.8 hours


def test_baseline_zero_images():
    led = CostLedger(10**6, 10**6, 0)
    report = full_annotation_baseline([], led, "VOC-like")
    assert report.tasks_issued == 0 and led.spent_loc_ms == 0
    assert report.stopped_reason == QUEUE_EXHAUSTED


def test_baseline_stops_at_budget():
    images = [image(f"im{i}", width=100, height=100) for i in range(5)]
    led = CostLedger(2 * 102600, 2 * 102600, 0)
    report = full_annotation_baseline(images, led, "VOC-like")
    assert report.tasks_issued == 2
    assert report.stopped_reason == BUDGET_EXHAUSTED
    assert led.remaining_loc_ms == 0
