"""Optimistic exponential weights over a cover of prediction experts, each
expert backed by a stabilized proper learner on an augmented class.

Experts are indexed by a set of restriction rounds plus a bucket value per
round; an expert predicts with the scale-``alpha`` bucket-edge rule on its
running restricted class.  The learner's output each round is a mixture
over the *base* class obtained by projecting each expert's stabilized
proper mixture through a canonical map and averaging with the experts'
weights.

Two engines share the same semantics:

* ``full`` — every expert instantiated; for small horizons and tests.
* ``lazy`` — experts sharing a restriction-past are aggregated into one
  group (identical predictions, losses, and weights), splitting only into
  nonempty buckets as rounds pass; exact member counts keep the weight
  update identical to full enumeration.
"""

from __future__ import annotations

import copy
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from .core import (
    Example,
    FiniteHypothesisClass,
    MixedHypothesis,
    Rational,
    as_fraction,
    expected_abs_loss,
)
from .errors import CapacityError, RealizabilityError
from .hpl import HplConfig, HplLearner, Stabilizer
from .soa import SubclassRef, soa_hypothesis, soa_value_cached

E_LOWER = Fraction(2718281828, 10**9)  # rational lower bound on e


def exp_fraction(x: Rational) -> Fraction:
    """The exact binary64 value of exp(x); snapped to a rational once."""
    return Fraction(math.exp(float(as_fraction(x))))


# ---------------------------------------------------------------------------
# the expert set
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExpertId:
    """Restriction rounds (sorted) and one bucket index per round."""

    rounds: tuple
    buckets: tuple

    def __post_init__(self):
        if len(self.rounds) != len(self.buckets):
            raise ValueError("one bucket per restriction round required")
        if list(self.rounds) != sorted(set(self.rounds)):
            raise ValueError("restriction rounds must be sorted and distinct")


def bucket_count(alpha: Fraction) -> int:
    return math.ceil(1 / alpha)


def enumerate_experts(
    cls_: FiniteHypothesisClass,
    horizon: int,
    alpha: Rational,
    cap: int = 20000,
) -> List[ExpertId]:
    """All experts for the class at this scale and horizon.

    The restriction budget is the class's shattering dimension at the
    scale; exceeding ``cap`` raises (use the lazy engine instead).
    """
    alpha = as_fraction(alpha)
    d = SubclassRef(cls_).sfat(alpha)
    k = bucket_count(alpha)
    total = sum(math.comb(horizon, s) * k**s for s in range(min(d, horizon) + 1))
    if total > cap:
        raise CapacityError(
            f"{total} experts exceed cap {cap}; use the lazy engine for long horizons"
        )
    experts = []
    for s in range(min(d, horizon) + 1):
        for rounds in itertools.combinations(range(1, horizon + 1), s):
            for buckets in itertools.product(range(k), repeat=s):
                experts.append(ExpertId(rounds, buckets))
    return experts


def expert_count_bound(horizon: int, alpha: Fraction, dimension: int) -> Fraction:
    """(2 e T / alpha)^d with a rational lower bound on e (safe to assert against)."""
    return (2 * E_LOWER * horizon / alpha) ** dimension


class ExpertTracker:
    """Running restricted class of one expert along an observed stream."""

    def __init__(self, expert: ExpertId, cls_: FiniteHypothesisClass, alpha: Fraction):
        self.expert = expert
        self.cls = cls_
        self.alpha = alpha
        self.sub = SubclassRef(cls_)
        self.t = 1
        self.dead = False

    def predict(self, x: str) -> Optional[Fraction]:
        """Raw bucket-edge prediction at the current round; None when dead."""
        if self.dead:
            return None
        return soa_value_cached(self.cls, self.alpha, self.sub.mask, x)

    def advance(self, x: str) -> None:
        """Close the current round; restrict if it is a restriction round."""
        if not self.dead and self.t in self.expert.rounds:
            i = self.expert.rounds.index(self.t)
            label = self.expert.buckets[i] * self.alpha
            self.sub = self.sub.restrict(x, label, self.alpha)
            if self.sub.is_empty:
                self.dead = True
        self.t += 1


def expert_predict(
    expert: ExpertId,
    cls_: FiniteHypothesisClass,
    alpha: Rational,
    x_prefix: Sequence[str],
) -> Optional[Fraction]:
    """Replay the prefix and return the expert's prediction at its last
    point (None once the running class has died)."""
    if not x_prefix:
        raise ValueError("prediction needs a nonempty prefix")
    tracker = ExpertTracker(expert, cls_, as_fraction(alpha))
    for x in x_prefix[:-1]:
        if tracker.dead:
            return None
        tracker.advance(x)
    return tracker.predict(x_prefix[-1])


# ---------------------------------------------------------------------------
# augmented class and canonical projection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AugmentedClass:
    """The base class plus every grid function uniformly within ``alpha``
    of a base member, with a canonical base representative for each."""

    base: FiniteHypothesisClass
    alpha: Fraction
    extended: FiniteHypothesisClass
    canonical: tuple  # extended hypothesis index -> base hypothesis index

    def project(self, mixture: MixedHypothesis) -> MixedHypothesis:
        """Push a mixture over the extended class to the base class."""
        weights: Dict[int, Fraction] = {}
        for i, w in mixture.support:
            j = self.canonical[i]
            weights[j] = weights.get(j, Fraction(0)) + w
        return MixedHypothesis(tuple(weights.items()), self.base.name)


def build_augmented(
    base: FiniteHypothesisClass, alpha: Rational, cap: int = 4096
) -> AugmentedClass:
    alpha = as_fraction(alpha)
    if alpha <= 0:
        raise ValueError("augmentation radius must be positive")
    step = Fraction(1, 1 << base.grid_log2_denominator)
    choice_lists_cache: Dict[tuple, List[Fraction]] = {}

    rows = set()
    for row in base.hypotheses:
        per_point: List[List[Fraction]] = []
        count = 1
        for v in row:
            key = (v,)
            choices = choice_lists_cache.get(key)
            if choices is None:
                lo = max(Fraction(0), v - alpha)
                hi = min(Fraction(1), v + alpha)
                k0 = math.ceil(lo / step)
                k1 = math.floor(hi / step)
                choices = [k * step for k in range(k0, k1 + 1)]
                choice_lists_cache[key] = choices
            per_point.append(choices)
            count *= len(choices)
            if count > cap * 4:
                raise CapacityError("augmented class enumeration exceeds cap")
        for combo in itertools.product(*per_point):
            rows.add(combo)
            if len(rows) > cap:
                raise CapacityError(f"augmented class exceeds cap {cap}")

    ordered = sorted(rows)
    canonical = []
    base_sorted = sorted(range(base.n_hypotheses), key=lambda i: base.hypotheses[i])
    for row in ordered:
        rep = next(
            i
            for i in base_sorted
            if all(abs(a - b) <= alpha for a, b in zip(base.hypotheses[i], row))
        )
        canonical.append(rep)
    extended = FiniteHypothesisClass(
        base.domain,
        ordered,
        base.grid_log2_denominator,
        name=f"{base.name or 'class'}+{alpha}",
    )
    return AugmentedClass(base, alpha, extended, tuple(canonical))


# ---------------------------------------------------------------------------
# the learner
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OseConfig:
    alpha: Fraction
    eta_oh: Fraction
    eta_psr: Fraction
    horizon: int
    hpl: HplConfig
    expert_rounds: Optional[int] = None  # lazy engine: restriction-slot horizon
    expert_cap: int = 20000
    augment_cap: int = 4096
    check_invariants: bool = True
    hpl_max_rebuilds: Optional[int] = None  # cap + fallback for embedded learners

    def __post_init__(self):
        object.__setattr__(self, "alpha", as_fraction(self.alpha))
        object.__setattr__(self, "eta_oh", as_fraction(self.eta_oh))
        object.__setattr__(self, "eta_psr", as_fraction(self.eta_psr))
        if (2 / self.eta_psr).denominator != 1:
            raise ValueError("2/eta_psr must be an integer (stabilizer window)")

    @property
    def smoothing(self) -> Fraction:
        return self.eta_psr / 2

    def stability_bound(self) -> Fraction:
        return 5 * self.eta_oh + 3 * self.eta_psr


class _Unit:
    """One weight-carrying unit: a single expert (full engine) or a group
    of indistinguishable experts (lazy engine)."""

    __slots__ = (
        "past", "count", "weight", "tracker", "hpl", "stab",
        "current_mix", "frozen_mix", "dead", "prev_loss", "depth",
    )

    def __init__(self, past, count, weight, tracker, hpl, stab):
        self.past = past
        self.count = count
        self.weight = weight
        self.tracker = tracker
        self.hpl = hpl
        self.stab = stab
        self.current_mix: Optional[MixedHypothesis] = None
        self.frozen_mix: Optional[MixedHypothesis] = None
        self.dead = False
        self.prev_loss = Fraction(0)
        self.depth = len(past)


class OseLearner:
    """Announce a proper mixture, then observe the round's example."""

    def __init__(self, cls_: FiniteHypothesisClass, config: OseConfig, mode: str = "full"):
        if mode not in ("full", "lazy"):
            raise ValueError("mode must be 'full' or 'lazy'")
        self.base = cls_
        self.config = config
        self.mode = mode
        self.aug = build_augmented(cls_, config.alpha, config.augment_cap)
        self.alpha = config.alpha
        self.k = bucket_count(config.alpha)
        self.dimension = SubclassRef(cls_).sfat(config.alpha)
        self.t = 1
        self.announced: List[MixedHypothesis] = []
        self.out_of_regime = not (
            1 <= config.alpha * config.horizon <= max(self.dimension, 0)
        )

        slots = config.horizon if mode == "full" else (config.expert_rounds or config.horizon)
        self.slot_horizon = min(slots, config.horizon)
        self.units: List[_Unit] = []
        if mode == "full":
            experts = enumerate_experts(cls_, self.slot_horizon, config.alpha, config.expert_cap)
            self.expert_total = len(experts)
            w = Fraction(1, self.expert_total)
            for expert in experts:
                self.units.append(
                    _Unit(
                        tuple(zip(expert.rounds, expert.buckets)),
                        1,
                        w,
                        ExpertTracker(expert, cls_, config.alpha),
                        self._new_hpl(),
                        Stabilizer(config.smoothing),
                    )
                )
            self._full_experts = experts
        else:
            self.expert_total = self._members(0, 1)
            root = _Unit(
                (),
                self.expert_total,
                Fraction(1, self.expert_total),
                ExpertTracker(ExpertId((), ()), cls_, config.alpha),
                self._new_hpl(),
                Stabilizer(config.smoothing),
            )
            self.units.append(root)

    # -- helpers -------------------------------------------------------------

    def _new_hpl(self) -> HplLearner:
        return HplLearner(
            self.aug.extended,
            self.config.hpl,
            self.config.check_invariants,
            max_rebuilds=self.config.hpl_max_rebuilds,
            fallback_on_cap=self.config.hpl_max_rebuilds is not None,
        )

    def _members(self, depth: int, t: int) -> int:
        """Experts whose restriction-past has the given depth at time t and
        whose remaining restriction rounds lie in [t, slot_horizon]."""
        avail = max(0, self.slot_horizon - t + 1)
        budget = max(0, min(self.dimension, self.slot_horizon) - depth)
        return sum(math.comb(avail, j) * self.k**j for j in range(budget + 1))

    def _unit_mixture(self, unit: _Unit) -> MixedHypothesis:
        if unit.dead:
            return unit.frozen_mix
        try:
            raw = unit.hpl.emit()
        except (RealizabilityError, CapacityError):
            self._kill(unit)
            return unit.frozen_mix
        smoothed = unit.stab.push(raw)
        unit.current_mix = self.aug.project(smoothed)
        return unit.current_mix

    def _kill(self, unit: _Unit) -> None:
        """Freeze the unit's last projected mixture and pin its loss to 1."""
        if unit.frozen_mix is None:
            unit.frozen_mix = unit.current_mix or MixedHypothesis.uniform(
                range(self.base.n_hypotheses), self.base.name
            )
        unit.dead = True

    # -- protocol -------------------------------------------------------------

    def announce(self) -> MixedHypothesis:
        """The round's proper mixture over the base class."""
        parts = []
        for unit in self.units:
            mixture = self._unit_mixture(unit)
            parts.append((unit.weight * unit.count, mixture))
        announced = MixedHypothesis.mix(parts, self.base.name)
        self.announced.append(announced)
        return announced

    def observe(self, x: str, y: Rational) -> Dict[str, Fraction]:
        """Feed the adversary's example; run losses, weights, splits."""
        y = as_fraction(y)
        example = Example(x, y)
        losses = []
        for unit in self.units:
            if unit.dead:
                losses.append(Fraction(1))
                continue
            mixture = unit.current_mix
            losses.append(expected_abs_loss(mixture, example, self.base))

        # optimistic exponential weights on exact snapped rationals
        new_weights = []
        for unit, loss in zip(self.units, losses):
            factor = exp_fraction(-self.config.eta_oh * (2 * loss - unit.prev_loss))
            new_weights.append(unit.weight * factor)
        total = sum(w * u.count for w, u in zip(new_weights, self.units))
        for unit, w, loss in zip(self.units, new_weights, losses):
            unit.weight = w / total
            unit.prev_loss = loss

        # feed proper learners with each expert's own label
        for unit in self.units:
            if unit.dead:
                continue
            label = unit.tracker.predict(x)
            clipped = min(max(label, Fraction(0)), Fraction(1))
            try:
                unit.hpl.observe(x, clipped)
            except (RealizabilityError, CapacityError):
                self._kill(unit)

        for unit in self.units:
            if not unit.dead:
                unit.tracker.advance(x)
                if unit.tracker.dead:
                    self._kill(unit)

        if self.mode == "lazy":
            self._split_lazy(x)
        self.t += 1
        return {"loss_vector_min": min(losses), "loss_vector_max": max(losses)}

    def _split_lazy(self, x: str) -> None:
        """Spawn bucket children for groups that may restrict this round."""
        t = self.t
        if t > self.slot_horizon:
            return
        budget = min(self.dimension, self.slot_horizon)
        spawned: List[_Unit] = []
        for unit in self.units:
            if unit.dead or unit.depth >= budget:
                continue  # dead lineages stay aggregated; full-depth ones cannot branch
            child_count = self._members(unit.depth + 1, t + 1)
            if child_count == 0:
                continue
            dead_buckets = 0
            for b in range(self.k):
                restricted = unit.tracker.sub.restrict(x, b * self.alpha, self.alpha)
                if restricted.is_empty:
                    dead_buckets += 1
                    continue
                expert = ExpertId(
                    tuple(r for r, _ in unit.past) + (t,),
                    tuple(bk for _, bk in unit.past) + (b,),
                )
                tracker = ExpertTracker(expert, self.base, self.alpha)
                tracker.sub = restricted
                tracker.t = t + 1
                child = _Unit(
                    unit.past + ((t, b),),
                    child_count,
                    unit.weight,
                    tracker,
                    copy.deepcopy(unit.hpl),
                    copy.deepcopy(unit.stab),
                )
                child.prev_loss = unit.prev_loss
                child.current_mix = unit.current_mix
                spawned.append(child)
            if dead_buckets:
                ghost = _Unit(
                    unit.past + ((t, -1),),
                    dead_buckets * child_count,
                    unit.weight,
                    ExpertTracker(ExpertId((), ()), self.base, self.alpha),
                    None,
                    None,
                )
                ghost.prev_loss = unit.prev_loss
                ghost.current_mix = unit.current_mix
                ghost.frozen_mix = unit.current_mix or MixedHypothesis.uniform(
                    range(self.base.n_hypotheses), self.base.name
                )
                ghost.dead = True
                spawned.append(ghost)
            # the parent keeps the members that do not restrict at t
            unit.count = self._members(unit.depth, t + 1)
        self.units.extend(spawned)
        self.units = [u for u in self.units if u.count > 0]
