"""Multi-scale improper learner for realizable streams, with an exact
potential audit.

One subclass per scale; each observed example restricts every scale from
a data-driven level onward, but only where the restriction strictly
shrinks the shattering dimension.  The audited potential

    (rounds left) * (finest scale) + 16 * sum_level scale * sfat(subclass)

must drop by at least the round's raw error, every round, in exact
arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Tuple

from .core import FiniteHypothesisClass, Rational, as_fraction, clamp_unit
from .errors import InvariantError, RealizabilityError
from .soa import ScaleLadder, SubclassRef, soa_sequence


@dataclass
class HilRound:
    t: int
    x: str
    y: Fraction
    raw_prediction: Fraction
    emitted: Fraction
    cutoff: int
    delta: Fraction
    potential_after: Fraction


class HilLearner:
    """Deterministic improper learner; predictions are clamped bucket edges."""

    def __init__(self, cls_: FiniteHypothesisClass, n_scales: int, horizon: int):
        if horizon < 0:
            raise ValueError("horizon must be nonnegative")
        self.cls = cls_
        self.ladder = ScaleLadder(n_scales)
        self.ladder.check_grid(cls_)
        self.horizon = horizon
        self.subclasses: List[SubclassRef] = [
            SubclassRef(cls_) for _ in range(n_scales)
        ]
        self.t = 1
        self.cumulative_loss = Fraction(0)
        self.cumulative_delta = Fraction(0)
        self.trace: List[HilRound] = []
        self._pending: Optional[Tuple[str, Fraction, int]] = None
        self.initial_potential = self.potential()

    def potential(self) -> Fraction:
        rounds_left = self.horizon + 1 - self.t
        total = rounds_left * self.ladder.finest()
        for level, sub in enumerate(self.subclasses, start=1):
            total += 16 * self.ladder.scale(level) * sub.sfat(self.ladder.scale(level))
        return total

    def predict(self, x: str) -> Fraction:
        """Emitted (clamped) prediction for x; also stages the raw value."""
        for sub in self.subclasses:
            if sub.is_empty:
                raise RealizabilityError("a scale's subclass died; stream not realizable")
        raw, cutoff, _ = soa_sequence(self.subclasses, self.ladder, x)
        self._pending = (x, raw, cutoff)
        return clamp_unit(raw)

    def update(self, x: str, y: Rational) -> HilRound:
        """Consume the example for the round whose prediction was just drawn."""
        if self._pending is None or self._pending[0] != x:
            self.predict(x)
        _, raw, cutoff = self._pending
        self._pending = None
        y = as_fraction(y)
        phi_before = self.potential()

        delta = abs(y - raw)
        loss = abs(y - clamp_unit(raw))
        n = self.ladder.n_scales
        finest = self.ladder.finest()
        if delta <= finest:
            mistake_level = n + 1
        else:
            mistake_level = next(
                level for level in range(1, n + 1) if delta > self.ladder.scale(level)
            )
        start = min(mistake_level, cutoff + 1)
        for level in range(start, n + 1):
            sub = self.subclasses[level - 1]
            alpha = self.ladder.scale(level)
            restricted = sub.restrict(x, y, alpha)
            if restricted.is_empty:
                # the target's bucket always survives on realizable input
                raise RealizabilityError(
                    f"restriction at scale 2^-{level} emptied the subclass"
                )
            if restricted.sfat(alpha) < sub.sfat(alpha):
                self.subclasses[level - 1] = restricted

        self.t += 1
        phi_after = self.potential()
        if phi_before - phi_after < delta:
            raise InvariantError(
                f"potential dropped by {phi_before - phi_after}, needed {delta}"
            )
        self.cumulative_loss += loss
        self.cumulative_delta += delta
        row = HilRound(self.t - 1, x, y, raw, clamp_unit(raw), cutoff, delta, phi_after)
        self.trace.append(row)
        return row

    def contains_target(self, target_index: int) -> bool:
        return all(sub.contains(target_index) for sub in self.subclasses)

    def loss_bound(self) -> Fraction:
        """Exact realizable bound: horizon * finest + 16 * sum scale * sfat(class)."""
        total = self.horizon * self.ladder.finest()
        full = SubclassRef(self.cls)
        for level in range(1, self.ladder.n_scales + 1):
            alpha = self.ladder.scale(level)
            total += 16 * alpha * full.sfat(alpha)
        return total


def optimal_scale_param(cls_: FiniteHypothesisClass, horizon: int) -> Tuple[Fraction, int]:
    """Scan ladder depths for the one minimizing the exact loss bound.

    Returns (alpha, n_scales) where alpha = 2^-(n_scales+1) is the dyadic
    scale whose ladder depth floor(log2(1/(2*alpha))) equals n_scales.
    """
    best = None
    full = SubclassRef(cls_)
    for n_scales in range(1, cls_.grid_log2_denominator + 1):
        bound = horizon * Fraction(1, 1 << n_scales)
        for level in range(1, n_scales + 1):
            alpha = Fraction(1, 1 << level)
            bound += 16 * alpha * full.sfat(alpha)
        if best is None or bound < best[0]:
            best = (bound, n_scales)
    n = best[1]
    return Fraction(1, 1 << (n + 1)), n
