import pytest
from hypothesis import given
from hypothesis import strategies as st

from delr import (
    BoxState,
    PoolEntry,
    ValidationError,
    filter_by_confidence,
    median_u_cls,
    rank_descending,
)
from helpers import annotation, box


def ann(ann_id, conf=0.8, u_loc=0.0, u_cls=0.0, image_id="img0"):
    assert conf >= 0.5, "helper keeps the argmax at index 0"
    return annotation(ann_id, image_id, box(0, 0, 10, 10), (conf, 1 - conf), u_loc=u_loc, u_cls=u_cls)


def test_filter_keeps_boundary_value():
    anns = [ann("a", conf=0.7), ann("b", conf=0.69), ann("c", conf=0.71)]
    kept = filter_by_confidence(anns, 0.7)
    assert [a.id for a in kept] == ["a", "c"]


def test_filter_is_idempotent():
    anns = [ann("a", conf=0.9), ann("b", conf=0.5)]
    once = filter_by_confidence(anns, 0.7)
    assert filter_by_confidence(once, 0.7) == once


def test_rank_descending_orders_by_key():
    anns = [ann("a", u_loc=1.0), ann("b", u_loc=3.0), ann("c", u_loc=2.0)]
    assert [a.id for a in rank_descending(anns, "u_loc")] == ["b", "c", "a"]
    anns = [ann("a", u_cls=0.1), ann("b", u_cls=0.9)]
    assert [a.id for a in rank_descending(anns, "u_cls")] == ["b", "a"]


def test_rank_breaks_ties_by_image_then_id():
    anns = [
        ann("b", u_loc=2.0, image_id="img1"),
        ann("a", u_loc=2.0, image_id="img1"),
        ann("z", u_loc=2.0, image_id="img0"),
    ]
    assert [a.id for a in rank_descending(anns, "u_loc")] == ["z", "a", "b"]


def test_rank_rejects_unknown_key():
    with pytest.raises(ValidationError):
        rank_descending([], "confidence")


@given(st.permutations(list(range(8))))
def test_rank_is_permutation_invariant(order):
    base = [ann(f"a{i}", u_loc=float(i % 3)) for i in range(8)]
    shuffled = [base[i] for i in order]
    assert rank_descending(shuffled, "u_loc") == rank_descending(base, "u_loc")


def entries(*u_values, drop=()):
    out = []
    for i, u in enumerate(u_values):
        e = PoolEntry(annotation=ann(f"a{i}", u_cls=u))
        if i in drop:
            e.box_state = BoxState.DROPPED
        out.append(e)
    return out


def test_median_odd_and_even_counts():
    assert median_u_cls(entries(0.1, 0.5, 0.9)) == 0.5
    assert median_u_cls(entries(0.1, 0.2, 0.8, 0.9)) == pytest.approx(0.5)


def test_median_singleton():
    assert median_u_cls(entries(0.42)) == pytest.approx(0.42)


def test_median_ignores_dropped():
    assert median_u_cls(entries(0.1, 0.5, 99.0, drop=(2,))) == pytest.approx(0.3)


def test_median_empty_is_error():
    with pytest.raises(ValidationError):
        median_u_cls([])
    with pytest.raises(ValidationError):
        median_u_cls(entries(1.0, drop=(0,)))


@given(st.lists(st.floats(min_value=0, max_value=10, allow_nan=False), min_size=1, max_size=15))
def test_median_between_min_and_max(values):
    got = median_u_cls(entries(*values))
    assert min(values) <= got <= max(values)
