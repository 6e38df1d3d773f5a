"""Scale-sensitive restrictions, per-scale predictors, and their aggregation.

A subclass at scale ``a`` predicts on ``x`` by picking the value bucket
``[j*a, (j+1)*a)`` whose restriction has the largest shattering dimension
(smallest ``j`` on ties) and outputting the bucket's upper edge
``(j+1)*a``.  Raw outputs may exceed 1; clamping happens only when a
prediction is emitted to the outside world.

Predictor values from a ladder of scales are combined by taking the value
at the first scale where consecutive predictions jump by more than twice
that scale; that index is the cutoff.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from .core import FiniteHypothesisClass, Rational, as_fraction
from .dimensions import sfat_value, _mask_bits

_BUCKET_TABLES: Dict[tuple, tuple] = {}


def _bucket_table(cls_: FiniteHypothesisClass, alpha: Fraction) -> List[Dict[int, int]]:
    """Per point, the full-class bitmask of each nonempty value bucket."""
    key = (id(cls_), alpha)
    hit = _BUCKET_TABLES.get(key)
    if hit is not None and hit[0] is cls_:
        return hit[1]
    tables: List[Dict[int, int]] = []
    for j in range(cls_.n_points):
        table: Dict[int, int] = {}
        for i, row in enumerate(cls_.hypotheses):
            b = int(row[j] // alpha)
            table[b] = table.get(b, 0) | 1 << i
        tables.append(table)
    _BUCKET_TABLES[key] = (cls_, tables)
    return tables


@dataclass(frozen=True)
class ScaleLadder:
    """Scales 2^-1, ..., 2^-n_scales."""

    n_scales: int

    def __post_init__(self):
        if self.n_scales < 1:
            raise ValueError("ladder needs at least one scale")

    def scale(self, level: int) -> Fraction:
        if not 1 <= level <= self.n_scales:
            raise IndexError(f"level {level} outside [1, {self.n_scales}]")
        return Fraction(1, 1 << level)

    def scales(self) -> List[Fraction]:
        return [Fraction(1, 1 << level) for level in range(1, self.n_scales + 1)]

    def finest(self) -> Fraction:
        return Fraction(1, 1 << self.n_scales)

    def check_grid(self, cls_: FiniteHypothesisClass) -> None:
        if self.n_scales > cls_.grid_log2_denominator:
            raise ValueError(
                f"finest scale 2^-{self.n_scales} is finer than the class grid "
                f"2^-{cls_.grid_log2_denominator}"
            )


class SubclassRef:
    """A subclass of a parent class, stored as a bitmask of row indices."""

    __slots__ = ("parent", "mask")

    def __init__(self, parent: FiniteHypothesisClass, mask: Optional[int] = None):
        self.parent = parent
        self.mask = parent.full_mask() if mask is None else mask

    def __eq__(self, other):
        return (
            isinstance(other, SubclassRef)
            and self.parent is other.parent
            and self.mask == other.mask
        )

    def __hash__(self):
        return hash((id(self.parent), self.mask))

    def __repr__(self):
        return f"<subclass of {self.parent!r}, {self.size} members>"

    @property
    def size(self) -> int:
        return bin(self.mask).count("1")

    @property
    def is_empty(self) -> bool:
        return self.mask == 0

    def indices(self) -> List[int]:
        return list(_mask_bits(self.mask))

    def contains(self, hyp_index: int) -> bool:
        return bool(self.mask >> hyp_index & 1)

    def sfat(self, alpha: Rational) -> int:
        """Cached dimension; -1 when the subclass is empty."""
        return sfat_value(self.parent, alpha, self.mask)

    def restrict(self, x: str, y: Rational, alpha: Rational) -> "SubclassRef":
        """Keep hypotheses whose value at x shares y's scale-``alpha`` bucket."""
        alpha = as_fraction(alpha)
        y = as_fraction(y)
        j = y // alpha
        return self.restrict_bucket(x, int(j), alpha)

    def restrict_bucket(self, x: str, bucket: int, alpha: Rational) -> "SubclassRef":
        alpha = as_fraction(alpha)
        col = self.parent.point_index(x)
        table = _bucket_table(self.parent, alpha)[col]
        return SubclassRef(self.parent, self.mask & table.get(bucket, 0))


def bucket_masks(sub: SubclassRef, x: str, alpha: Rational) -> Dict[int, int]:
    """Bitmask of members per nonempty value bucket at x."""
    alpha = as_fraction(alpha)
    col = sub.parent.point_index(x)
    table = _bucket_table(sub.parent, alpha)[col]
    out: Dict[int, int] = {}
    for b, full in table.items():
        kept = sub.mask & full
        if kept:
            out[b] = kept
    return out


def soa_hypothesis(sub: SubclassRef, alpha: Rational, x: str) -> Fraction:
    """Raw bucket-edge prediction ``(j* + 1) * alpha``; may exceed 1.

    ``j*`` is the smallest bucket index whose restriction attains the
    maximum shattering dimension at scale ``alpha`` (empty buckets count
    as minus infinity and are never selected).
    """
    if sub.is_empty:
        raise ValueError("SOA prediction of an empty subclass is undefined")
    alpha = as_fraction(alpha)
    buckets = bucket_masks(sub, x, alpha)
    best_j = None
    best_dim = None
    for j in sorted(buckets):
        d = sfat_value(sub.parent, alpha, buckets[j])
        if best_dim is None or d > best_dim:
            best_dim = d
            best_j = j
    return (best_j + 1) * alpha


_SOA_MEMO: Dict[tuple, tuple] = {}


def soa_value_cached(
    cls_: FiniteHypothesisClass, alpha: Fraction, mask: int, x: str
) -> Fraction:
    """Memoized raw SOA value; the hot path for collections and trackers."""
    key = (id(cls_), alpha, mask, x)
    hit = _SOA_MEMO.get(key)
    if hit is not None and hit[0] is cls_:
        return hit[1]
    value = soa_hypothesis(SubclassRef(cls_, mask), alpha, x)
    _SOA_MEMO[key] = (cls_, value)
    return value


def hagg(values: Sequence[Rational], ladder: ScaleLadder) -> Tuple[Fraction, int]:
    """First-jump aggregation: value at the cutoff level.

    The cutoff is the first level whose prediction differs from the next
    one by more than twice the level's scale; if none, the last level.
    """
    n = ladder.n_scales
    if len(values) != n:
        raise ValueError(f"expected {n} values, got {len(values)}")
    vals = [as_fraction(v) for v in values]
    for level in range(1, n):
        if abs(vals[level - 1] - vals[level]) > 2 * ladder.scale(level):
            return vals[level - 1], level
    return vals[n - 1], n


def soa_sequence(
    subs: Sequence[SubclassRef], ladder: ScaleLadder, x: str
) -> Tuple[Fraction, int, List[Fraction]]:
    """Aggregate the per-scale predictions of a chain of subclasses.

    Returns (value, cutoff, per-scale raw predictions).
    """
    if len(subs) != ladder.n_scales:
        raise ValueError("one subclass per scale required")
    per_scale = [
        soa_hypothesis(sub, ladder.scale(level), x)
        for level, sub in enumerate(subs, start=1)
    ]
    value, cutoff = hagg(per_scale, ladder)
    return value, cutoff, per_scale
