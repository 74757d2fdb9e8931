"""Candidate filtering, query ordering, and the class-trust threshold."""

from __future__ import annotations

import statistics
from collections.abc import Iterable

from .model import BoxState, PoolEntry, PseudoAnnotation, ValidationError

RANK_KEYS = ("u_loc", "u_cls")


def filter_by_confidence(
    anns: Iterable[PseudoAnnotation], tau: float
) -> list[PseudoAnnotation]:
    """Keep annotations with confidence >= tau (boundary included)."""
    return [a for a in anns if a.confidence >= tau]


def rank_descending(anns: Iterable[PseudoAnnotation], key: str) -> list[PseudoAnnotation]:
    """Order by u_loc or u_cls, largest first.

    Ties resolve by (image_id, id) so queue order is reproducible under any
    input permutation.
    """
    if key not in RANK_KEYS:
        raise ValidationError(f"rank key must be one of {RANK_KEYS}, got {key!r}")
    return sorted(anns, key=lambda a: (-getattr(a, key), a.image_id, a.id))


def median_u_cls(entries: Iterable[PoolEntry]) -> float:
    """Median class disagreement over non-dropped entries.

    Even counts take the mean of the two middle values. Empty selections have
    no median and are a caller error.
    """
    values = [e.annotation.u_cls for e in entries if e.box_state != BoxState.DROPPED]
    if not values:
        raise ValidationError("median undefined: no non-dropped entries")
    return float(statistics.median(values))
