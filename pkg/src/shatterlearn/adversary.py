"""Adversary generators and the exact benchmark harness.

Adversaries are deterministic state machines given their seed.  The
lower-bound adversary plays the two-endpoint product class and always
labels with the endpoint farther from the learner's expected prediction,
forcing expected loss of half the endpoint gap per round against any
learner; the stream stays realizable because the product class contains
every endpoint pattern.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, List, Optional, Sequence, Tuple

from .core import Example, FiniteHypothesisClass, MixedHypothesis, Rational, as_fraction
from .errors import RealizabilityError
from .experts import OseLearner
from .hil import HilLearner
from .hpl import HplLearner


@dataclass(frozen=True)
class AdversarySpec:
    kind: str  # fixed-target | adaptive-realizable | lower-bound | slow-drift
    target_index: Optional[int] = None
    d: Optional[int] = None
    alpha_prime: Optional[Fraction] = None
    kappa: Optional[Fraction] = None
    seed: int = 0
    strategy: str = "round-robin"  # uniform | round-robin | greedy

    def __post_init__(self):
        kinds = ("fixed-target", "adaptive-realizable", "lower-bound", "slow-drift")
        if self.kind not in kinds:
            raise ValueError(f"unknown adversary kind {self.kind!r}")
        if self.kind in ("fixed-target", "adaptive-realizable") and self.target_index is None:
            raise ValueError(f"{self.kind} adversary needs a target index")
        if self.kind == "lower-bound" and (self.d is None or self.alpha_prime is None):
            raise ValueError("lower-bound adversary needs d and alpha_prime")
        if self.kind == "slow-drift" and self.kappa is None:
            raise ValueError("slow-drift adversary needs kappa")


def is_realizable(cls_: FiniteHypothesisClass, examples: Sequence[Example]) -> bool:
    """Does some hypothesis label every example exactly?"""
    for row in cls_.hypotheses:
        if all(row[cls_.point_index(e.x)] == e.y for e in examples):
            return True
    return False


# ---------------------------------------------------------------------------
# the forced-loss instance
# ---------------------------------------------------------------------------


def lower_bound_class(
    d: int, alpha_prime: Rational, grid_log2_denominator: Optional[int] = None
) -> FiniteHypothesisClass:
    """All functions from d points to the two endpoints (1 +- alpha')/2."""
    alpha_prime = as_fraction(alpha_prime)
    if d < 1:
        raise ValueError("d must be at least 1")
    lo = (1 - alpha_prime) / 2
    hi = (1 + alpha_prime) / 2
    if grid_log2_denominator is None:
        grid_log2_denominator = max(
            lo.denominator.bit_length() - 1, hi.denominator.bit_length() - 1
        )
    rows = [
        [hi if bit else lo for bit in bits]
        for bits in itertools.product((0, 1), repeat=d)
    ]
    return FiniteHypothesisClass(
        [f"x{i}" for i in range(1, d + 1)],
        rows,
        grid_log2_denominator,
        name=f"two-endpoint-{d}",
    )


class LowerBoundAdversary:
    """Feeds x_t = t and labels away from the learner's expected prediction."""

    def __init__(self, d: int, alpha_prime: Rational):
        self.alpha_prime = as_fraction(alpha_prime)
        self.cls = lower_bound_class(d, alpha_prime)
        self.d = d
        self.t = 0
        self.history: List[Example] = []

    @property
    def endpoints(self) -> Tuple[Fraction, Fraction]:
        return (1 - self.alpha_prime) / 2, (1 + self.alpha_prime) / 2

    def next_x(self) -> str:
        if self.t >= self.d:
            raise IndexError("lower-bound stream exhausted")
        return self.cls.domain[self.t]

    def choose_label(self, expected_prediction: Rational) -> Fraction:
        """The endpoint farther from the prediction (upper one on a tie)."""
        lo, hi = self.endpoints
        pred = as_fraction(expected_prediction)
        y = lo if abs(pred - lo) > abs(pred - hi) else hi
        self.history.append(Example(self.cls.domain[self.t], y))
        self.t += 1
        return y


def lower_bound_instance(d: int, alpha_prime: Rational) -> Tuple[FiniteHypothesisClass, LowerBoundAdversary]:
    adversary = LowerBoundAdversary(d, alpha_prime)
    return adversary.cls, adversary


# ---------------------------------------------------------------------------
# realizable and drifting streams
# ---------------------------------------------------------------------------


class AdaptiveRealizableAdversary:
    """Emits (x, target(x)); the point choice follows the strategy."""

    def __init__(
        self,
        cls_: FiniteHypothesisClass,
        target_index: int,
        strategy: str = "round-robin",
        seed: int = 0,
    ):
        if not 0 <= target_index < cls_.n_hypotheses:
            raise ValueError("target index outside the class")
        if strategy not in ("uniform", "round-robin", "greedy"):
            raise ValueError(f"unknown strategy {strategy!r}")
        self.cls = cls_
        self.target = target_index
        self.strategy = strategy
        self.rng = random.Random(seed)
        self.t = 0
        self.history: List[Example] = []

    def next_example(
        self, expected_prediction: Optional[Callable[[str], Fraction]] = None
    ) -> Example:
        if self.strategy == "round-robin":
            x = self.cls.domain[self.t % self.cls.n_points]
        elif self.strategy == "uniform":
            x = self.rng.choice(self.cls.domain)
        else:
            if expected_prediction is None:
                raise ValueError("greedy strategy needs the learner's expected prediction")
            best = None
            for x_cand in self.cls.domain:
                y_cand = self.cls.value(self.target, x_cand)
                loss = abs(expected_prediction(x_cand) - y_cand)
                if best is None or loss > best[0]:
                    best = (loss, x_cand)
            x = best[1]
        y = self.cls.value(self.target, x)
        self.t += 1
        example = Example(x, y)
        self.history.append(example)
        return example


def slow_drift(
    cls_: FiniteHypothesisClass,
    kappa: Rational,
    seed: int,
    horizon: int,
) -> List[Example]:
    """A label stream whose consecutive feature and label drift is at most
    kappa (feature drift in the class sup-norm), verified before return."""
    kappa = as_fraction(kappa)
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    rng = random.Random(seed)
    step = Fraction(1, 1 << cls_.grid_log2_denominator)

    def feature_dist(a: str, b: str) -> Fraction:
        ia, ib = cls_.point_index(a), cls_.point_index(b)
        return max(abs(row[ia] - row[ib]) for row in cls_.hypotheses)

    neighbors = {
        x: [x2 for x2 in cls_.domain if feature_dist(x, x2) <= kappa]
        for x in cls_.domain
    }
    if any(not opts for opts in neighbors.values()):
        raise RealizabilityError("no admissible drift step from some point")

    x = rng.choice(cls_.domain)
    y_steps = int(kappa / step)
    grid_max = 1 << cls_.grid_log2_denominator
    y_idx = rng.randrange(grid_max + 1)
    out = []
    for _ in range(horizon):
        out.append(Example(x, Fraction(y_idx, grid_max)))
        x = rng.choice(neighbors[x])
        lo = max(0, y_idx - y_steps)
        hi = min(grid_max, y_idx + y_steps)
        y_idx = rng.randrange(lo, hi + 1)
    verify_drift(cls_, out, kappa)
    return out


def verify_drift(cls_: FiniteHypothesisClass, stream: Sequence[Example], kappa: Rational) -> None:
    kappa = as_fraction(kappa)
    for a, b in zip(stream, stream[1:]):
        ia, ib = cls_.point_index(a.x), cls_.point_index(b.x)
        feat = max(abs(row[ia] - row[ib]) for row in cls_.hypotheses)
        if feat > kappa or abs(a.y - b.y) > kappa:
            raise RealizabilityError("stream violates the drift budget")


# ---------------------------------------------------------------------------
# learner adapters: a uniform announced-prediction interface
# ---------------------------------------------------------------------------


class ImproperAdapter:
    """HIL: deterministic prediction per point."""

    def __init__(self, learner: HilLearner):
        self.learner = learner

    def expected_prediction(self, x: str) -> Fraction:
        return self.learner.predict(x)

    def expected_loss(self, x: str, y: Fraction) -> Fraction:
        return abs(self.learner.predict(x) - y)

    def observe(self, x: str, y: Fraction) -> None:
        self.learner.update(x, y)


class ProperAdapter:
    """HPL or OSE: a mixture announced before the feature arrives."""

    def __init__(self, learner, cls_: FiniteHypothesisClass):
        self.learner = learner
        self.cls = cls_
        self._mixture: Optional[MixedHypothesis] = None

    def _announce(self) -> MixedHypothesis:
        if self._mixture is None:
            if isinstance(self.learner, HplLearner):
                self._mixture = self.learner.emit()
            elif isinstance(self.learner, OseLearner):
                self._mixture = self.learner.announce()
            else:
                raise TypeError("unsupported learner")
        return self._mixture

    @property
    def mixture(self) -> MixedHypothesis:
        return self._announce()

    def expected_prediction(self, x: str) -> Fraction:
        return self._announce().expected_value_at(self.cls, x)

    def expected_loss(self, x: str, y: Fraction) -> Fraction:
        from .core import expected_abs_loss

        return expected_abs_loss(self._announce(), Example(x, y), self.cls)

    def observe(self, x: str, y: Fraction) -> None:
        self._announce()
        self.learner.observe(x, y)
        self._mixture = None


def run_lower_bound(adapter, adversary: LowerBoundAdversary) -> Fraction:
    """Total expected loss of the learner against the forced-label stream."""
    total = Fraction(0)
    for _ in range(adversary.d):
        x = adversary.next_x()
        pred = adapter.expected_prediction(x)
        y = adversary.choose_label(pred)
        total += adapter.expected_loss(x, y)
        adapter.observe(x, y)
    if not is_realizable(adversary.cls, adversary.history):
        raise RealizabilityError("forced stream left the class (bug)")
    return total
