"""Proper realizable learner over weighted subclass collections.

State: per scale level, a weighted multiset of subclasses.  Each round
either (a) a mixture over the base class satisfying per-level accuracy
constraints on the collection's confident points exists — it is emitted,
and the next example decays and restricts the subclasses that erred on
it — or (b) no such mixture exists, in which case exact minimax duality
produces per-level datasets of confident points on which every base
hypothesis errs noticeably, and the collection is rebuilt against them.

All weights and probabilities are exact rationals.  Multisets are stored
compressed as (mask, weight) -> multiplicity, which is observationally
identical because every quantity used anywhere (votes, truncated errors,
level weights, per-tuple updates) depends only on the weighted measure
over subclasses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from .core import FiniteHypothesisClass, MixedHypothesis, Rational, as_fraction
from .errors import CapacityError, InvariantError, RealizabilityError
from .minimax import Infeasible, MatrixGame, feasible_distribution, solve
from .soa import ScaleLadder, SubclassRef, soa_hypothesis
from .dimensions import sfat_value, _mask_bits

LN_SLACK = Fraction(1, 10**9)


def ln_bounds(value: Fraction) -> Tuple[Fraction, Fraction]:
    """Rational bracket of the natural log, 1e-9 wide on each side."""
    if value <= 0:
        raise ValueError("log of a nonpositive value")
    approx = Fraction(math.log(value))
    return approx - LN_SLACK, approx + LN_SLACK


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HplConfig:
    """Run constants.  Defaults follow the forcing inequalities; overrides
    below them are allowed but flip ``strict_constants`` off, downgrading
    the affected bound assertions from hard errors to recorded flags."""

    n_scales: int
    mixture_levels: int
    indicator_levels: int
    highvote_divisor: int
    dataset_scale: Fraction
    m_cap: int
    constraint_cap: int
    strict_constants: bool

    @classmethod
    def default(
        cls,
        n_scales: int,
        mixture_levels: Optional[int] = None,
        indicator_levels: Optional[int] = None,
        highvote_divisor: Optional[int] = None,
        dataset_scale: Rational = Fraction(1, 2),
        m_cap: int = 256,
        constraint_cap: int = 2048,
    ) -> "HplConfig":
        if mixture_levels is None or indicator_levels is None or highvote_divisor is None:
            if n_scales < 7:
                raise ValueError(
                    "default constants need at least 7 scales; override the "
                    "level and divisor constants explicitly for shallower ladders"
                )
        if mixture_levels is None:
            mixture_levels = n_scales - 6
        if indicator_levels is None:
            indicator_levels = n_scales - 3
        if highvote_divisor is None:
            highvote_divisor = 3072 * n_scales**3
        if not 1 <= mixture_levels <= n_scales:
            raise ValueError("mixture_levels outside [1, n_scales]")
        if not 1 <= indicator_levels <= n_scales:
            raise ValueError("indicator_levels outside [1, n_scales]")
        dataset_scale = as_fraction(dataset_scale)
        if dataset_scale <= 0:
            raise ValueError("dataset_scale must be positive")
        strict = (
            highvote_divisor >= 3072 * n_scales**3
            and highvote_divisor >= 32
            and mixture_levels <= n_scales - 6
            and indicator_levels <= n_scales - 3
        )
        config = cls(
            n_scales,
            mixture_levels,
            indicator_levels,
            highvote_divisor,
            dataset_scale,
            m_cap,
            constraint_cap,
            strict,
        )
        if config.decay > Fraction(1, 2):
            raise ValueError("weight decay must be at most 1/2")
        if config.sample_mass_max > 2 * config.sample_mass_min:
            raise ValueError("per-level sample masses spread by more than a factor 2")
        if (config.sample_mass_max / config.finest).denominator != 1:
            raise ValueError("copy factor is not an integer")
        return config

    @property
    def finest(self) -> Fraction:
        return Fraction(1, 1 << self.n_scales)

    @property
    def decay(self) -> Fraction:
        return self.finest / self.highvote_divisor

    def scale(self, level: int) -> Fraction:
        return Fraction(1, 1 << level)

    def dataset_size(self, level: int) -> int:
        return max(1, math.ceil(self.dataset_scale * (1 << level)))

    @property
    def sample_mass_min(self) -> Fraction:
        return min(self.scale(l) * self.dataset_size(l) for l in range(1, self.n_scales + 1))

    @property
    def sample_mass_max(self) -> Fraction:
        return max(self.scale(l) * self.dataset_size(l) for l in range(1, self.n_scales + 1))

    @property
    def copy_factor(self) -> int:
        return int(self.sample_mass_max / self.finest)


# ---------------------------------------------------------------------------
# weighted subclass collections
# ---------------------------------------------------------------------------


class WeightedSubclassCollection:
    """Per level, a compressed multiset {(mask, weight): multiplicity}."""

    def __init__(self, cls_: FiniteHypothesisClass, n_scales: int):
        self.cls = cls_
        self.ladder = ScaleLadder(n_scales)
        self.ladder.check_grid(cls_)
        full = cls_.full_mask()
        self.levels: List[Dict[Tuple[int, Fraction], int]] = [
            {(full, Fraction(1)): 1} for _ in range(n_scales)
        ]
        self.version = 0

    @property
    def n_scales(self) -> int:
        return self.ladder.n_scales

    def level_weight(self, level: int) -> Fraction:
        return sum(
            (w * mult for (_, w), mult in self.levels[level - 1].items()),
            Fraction(0),
        )

    def mask_distribution(self, level: int) -> List[Tuple[int, Fraction]]:
        """Aggregated probability per distinct mask, deterministic order."""
        total = self.level_weight(level)
        agg: Dict[int, Fraction] = {}
        for (mask, w), mult in self.levels[level - 1].items():
            agg[mask] = agg.get(mask, Fraction(0)) + w * mult
        return [(mask, w / total) for mask, w in sorted(agg.items())]

    def tuple_count(self, level: int) -> int:
        return sum(self.levels[level - 1].values())

    def chain_count(self) -> int:
        total = 1
        for level in range(1, self.n_scales + 1):
            total *= self.tuple_count(level)
        return total

    def contains_target(self, target: int) -> bool:
        return all(
            any(mask >> target & 1 for (mask, _) in layer)
            for layer in self.levels
        )


from .soa import soa_value_cached as _soa_value


def chain_outcomes(coll: WeightedSubclassCollection, x: str) -> Dict[Tuple[Fraction, int], Fraction]:
    """Exact distribution of (aggregated value, cutoff) over random chains.

    Chains are drawn per level independently with probability proportional
    to weight; the forward pass tracks the unbroken mass per current value
    and peels off the first-jump outcomes, which equals full enumeration.
    """
    n = coll.n_scales
    level_values: List[Dict[Fraction, Fraction]] = []
    for level in range(1, n + 1):
        alpha = coll.ladder.scale(level)
        dist: Dict[Fraction, Fraction] = {}
        for mask, prob in coll.mask_distribution(level):
            value = _soa_value(coll.cls, alpha, mask, x)
            dist[value] = dist.get(value, Fraction(0)) + prob
        level_values.append(dist)

    outcomes: Dict[Tuple[Fraction, int], Fraction] = {}
    unbroken = dict(level_values[0])
    for level in range(2, n + 1):
        jump = 2 * coll.ladder.scale(level - 1)
        incoming = level_values[level - 1]
        still: Dict[Fraction, Fraction] = {}
        for g, pg in unbroken.items():
            for g2, p2 in incoming.items():
                mass = pg * p2
                if abs(g - g2) > jump:
                    key = (g, level - 1)
                    outcomes[key] = outcomes.get(key, Fraction(0)) + mass
                else:
                    still[g2] = still.get(g2, Fraction(0)) + mass
        unbroken = still
    for g, pg in unbroken.items():
        key = (g, n)
        outcomes[key] = outcomes.get(key, Fraction(0)) + pg
    return outcomes


def vote_from_outcomes(outcomes: Dict[Tuple[Fraction, int], Fraction]) -> Fraction:
    return sum((p * value for (value, _), p in outcomes.items()), Fraction(0))


def terr_from_outcomes(
    outcomes: Dict[Tuple[Fraction, int], Fraction], y: Fraction, finest_ladder: ScaleLadder
) -> Fraction:
    total = Fraction(0)
    for (value, cutoff), p in outcomes.items():
        total += p * max(abs(value - y), finest_ladder.scale(cutoff))
    return total


def vote_and_terr(
    coll: WeightedSubclassCollection, x: str, y: Optional[Rational] = None
) -> Tuple[Fraction, Optional[Fraction], Dict[int, Fraction]]:
    """Exact vote value, truncated error at (x, y), and cutoff distribution."""
    outcomes = chain_outcomes(coll, x)
    vote = vote_from_outcomes(outcomes)
    terr = None
    if y is not None:
        terr = terr_from_outcomes(outcomes, as_fraction(y), coll.ladder)
    cutoff_dist: Dict[int, Fraction] = {}
    for (_, cutoff), p in outcomes.items():
        cutoff_dist[cutoff] = cutoff_dist.get(cutoff, Fraction(0)) + p
    return vote, terr, cutoff_dist


def highvote_set(
    coll: WeightedSubclassCollection,
    epsilon: Rational,
    outcome_cache: Optional[Dict[str, dict]] = None,
) -> List[Tuple[str, Fraction]]:
    """All (x, vote(x)) with truncated error at the vote at most epsilon."""
    epsilon = as_fraction(epsilon)
    out = []
    for x in coll.cls.domain:
        if outcome_cache is not None and x in outcome_cache:
            outcomes = outcome_cache[x]
        else:
            outcomes = chain_outcomes(coll, x)
            if outcome_cache is not None:
                outcome_cache[x] = outcomes
        vote = vote_from_outcomes(outcomes)
        if terr_from_outcomes(outcomes, vote, coll.ladder) <= epsilon:
            out.append((x, vote))
    return out


def min_terr(coll: WeightedSubclassCollection, x: str) -> Tuple[Fraction, Fraction]:
    """(y*, min_y Terr(coll, x, y)) minimized exactly over y in [0, 1].

    The objective is convex piecewise-linear in y; the minimum sits at a
    kink (value +- cutoff scale) or an endpoint.
    """
    outcomes = chain_outcomes(coll, x)
    candidates = {Fraction(0), Fraction(1)}
    for (value, cutoff), _ in outcomes.items():
        for cand in (value, value - coll.ladder.scale(cutoff), value + coll.ladder.scale(cutoff)):
            if 0 <= cand <= 1:
                candidates.add(cand)
    best = None
    for y in sorted(candidates):
        t = terr_from_outcomes(outcomes, y, coll.ladder)
        if best is None or t < best[1]:
            best = (y, t)
    return best


# ---------------------------------------------------------------------------
# the mixture step and the dual fallback
# ---------------------------------------------------------------------------


def find_proper_mixture(
    coll: WeightedSubclassCollection,
    config: HplConfig,
    outcome_cache: Optional[Dict[str, dict]] = None,
):
    """Feasibility of the per-level accuracy constraints over the simplex.

    Constraints: for each level up to ``mixture_levels`` and each point in
    the level's confident set, the mixture's expected absolute error at
    the point must not exceed the level's scale.  Returns a
    ``MixedHypothesis`` or an ``Infeasible`` certificate.
    """
    cls_ = coll.cls
    n = cls_.n_hypotheses
    coeffs: List[List[Fraction]] = []
    bounds: List[Fraction] = []
    for level in range(1, config.mixture_levels + 1):
        eps = config.scale(level) / config.highvote_divisor
        for x, vote in highvote_set(coll, eps, outcome_cache):
            col = cls_.point_index(x)
            coeffs.append([abs(row[col] - vote) for row in cls_.hypotheses])
            bounds.append(config.scale(level))
            if len(coeffs) > config.constraint_cap:
                raise CapacityError("mixture constraint count exceeds cap")
    if not coeffs:
        return MixedHypothesis.uniform(range(n), cls_.name)
    # minimal-support tie-break: the first feasible point mass wins
    for i in range(n):
        if all(row[i] <= b for row, b in zip(coeffs, bounds)):
            return MixedHypothesis.point_mass(i, cls_.name)
    result = feasible_distribution(coeffs, bounds)
    if isinstance(result, Infeasible):
        return result
    support = tuple((i, w) for i, w in enumerate(result) if w > 0)
    return MixedHypothesis(support, cls_.name)


def assign_scale_levels(
    coll: WeightedSubclassCollection, config: HplConfig, outcome_cache: Dict[str, dict]
) -> Dict[str, Tuple[Fraction, Optional[int]]]:
    """Per point: (payoff scale, finest confident level or None).

    The payoff scale is the finest level scale at which the point is
    confident; points confident at no positive level fall back to coarser
    scales (they join no dataset but still enter the minimax game).
    """
    out: Dict[str, Tuple[Fraction, Optional[int]]] = {}
    floor_level = -(config.highvote_divisor.bit_length() + 1)
    for x in coll.cls.domain:
        outcomes = outcome_cache.get(x)
        if outcomes is None:
            outcomes = outcome_cache[x] = chain_outcomes(coll, x)
        vote = vote_from_outcomes(outcomes)
        terr = terr_from_outcomes(outcomes, vote, coll.ladder)
        assigned = None
        for level in range(config.mixture_levels, 0, -1):
            if terr <= config.scale(level) / config.highvote_divisor:
                assigned = (Fraction(1, 1 << level), level)
                break
        if assigned is None:
            level = 0
            while level >= floor_level:
                if terr <= Fraction(1 << -level) / config.highvote_divisor:
                    break
                level -= 1
            if level < floor_level:
                continue  # excluded: confident at no admissible scale
            assigned = (Fraction(1 << -level), None)
        out[x] = assigned
    return out


def dual_datasets(
    coll: WeightedSubclassCollection,
    config: HplConfig,
    certificate: Infeasible,
    growth: int = 1,
) -> Dict[int, List[Tuple[str, Fraction]]]:
    """Per-level datasets of confident points witnessing that every
    hypothesis errs noticeably, verified exhaustively before returning.

    The construction solves the zero-sum game with payoff
    |f(x) - vote(x)| / (scale of x) exactly, apportions each level's
    sample budget over the optimal column strategy's atoms (largest
    remainder, deterministic), and doubles the budgets until the
    for-every-hypothesis property holds.  Exhausting the growth schedule
    is a hard error: it indicates misconfigured constants.
    """
    if certificate is None:
        raise ValueError("the dual fallback requires an infeasibility certificate")
    cls_ = coll.cls
    outcome_cache: Dict[str, dict] = {}
    assignment = assign_scale_levels(coll, config, outcome_cache)
    if not assignment:
        raise InvariantError("dual fallback reached with no scorable points")
    points = sorted(assignment)
    votes = {x: vote_from_outcomes(outcome_cache[x]) for x in points}
    payoffs = tuple(
        tuple(abs(row[cls_.point_index(x)] - votes[x]) / assignment[x][0] for x in points)
        for row in cls_.hypotheses
    )
    _, _, column_strategy = solve(MatrixGame(payoffs))
    mass = {x: q for x, q in zip(points, column_strategy)}

    while True:
        datasets: Dict[int, List[Tuple[str, Fraction]]] = {}
        for level in range(1, config.mixture_levels + 1):
            if level == 1:  # the coarsest dataset catches every confident point
                atoms = [x for x in points if assignment[x][1] is not None]
            else:
                atoms = [x for x in points if assignment[x][1] == level]
            total = sum((mass[x] for x in atoms), Fraction(0))
            if total == 0:
                continue
            m = config.dataset_size(level) * growth
            quotas = [(x, mass[x] / total * m) for x in atoms]
            counts = {x: int(q) for x, q in quotas}
            remainder = m - sum(counts.values())
            for x, q in sorted(quotas, key=lambda t: (t[1] - int(t[1]), t[0]), reverse=True):
                if remainder <= 0:
                    break
                counts[x] += 1
                remainder -= 1
            pairs: List[Tuple[str, Fraction]] = []
            for x in atoms:
                pairs.extend([(x, votes[x])] * counts[x])
            if pairs:
                datasets[level] = pairs

        if _verify_datasets(cls_, config, datasets):
            return datasets
        if any(len(p) * 2 > config.m_cap for p in datasets.values()) or not datasets:
            raise CapacityError(
                "dataset verification failed at the growth cap; "
                "the run's constants are misconfigured for this class"
            )
        growth *= 2


def _verify_datasets(
    cls_: FiniteHypothesisClass,
    config: HplConfig,
    datasets: Dict[int, List[Tuple[str, Fraction]]],
) -> bool:
    """Every hypothesis must err beyond some indicator scale on enough of
    some level's dataset."""
    if not datasets:
        return False
    for row in cls_.hypotheses:
        ok = False
        for level, pairs in datasets.items():
            m = len(pairs)
            for ind in range(1, config.indicator_levels + 1):
                threshold = config.scale(level) / (16 * config.n_scales * config.scale(ind))
                count = sum(
                    1 for x, y in pairs if abs(row[cls_.point_index(x)] - y) > config.scale(ind)
                )
                if Fraction(count, m) > threshold:
                    ok = True
                    break
            if ok:
                break
        if not ok:
            return False
    return True


# ---------------------------------------------------------------------------
# the learner
# ---------------------------------------------------------------------------


@dataclass
class HplRound:
    index: int
    branch: str  # "mixture" or "rebuild"
    t: int
    weights_before: tuple
    weights_after: tuple
    delta: Optional[Fraction] = None
    x: Optional[str] = None
    y: Optional[Fraction] = None
    support_size: Optional[int] = None
    flags: tuple = ()


class HplLearner:
    """Drives the emit/observe protocol and audits every round exactly."""

    def __init__(
        self,
        cls_: FiniteHypothesisClass,
        config: HplConfig,
        check_invariants: bool = True,
        max_rebuilds: Optional[int] = None,
        fallback_on_cap: bool = False,
    ):
        self.cls = cls_
        self.config = config
        self.coll = WeightedSubclassCollection(cls_, config.n_scales)
        self.check_invariants = check_invariants
        self.max_rebuilds = max_rebuilds
        # embedded runs: once the rebuild budget is spent, re-emit the last
        # mixture instead of raising; example-driven updates keep learning
        self.fallback_on_cap = fallback_on_cap
        self._last_emitted: Optional[MixedHypothesis] = None
        self.t = 1
        self.round_index = 0
        self.failure_rounds = 0
        self.cumulative_delta = Fraction(0)
        self.success_log_sum = Fraction(0)  # sum over levels/rounds of scale * ln-ratio bracket
        self.trace: List[HplRound] = []
        self._pending: Optional[MixedHypothesis] = None
        self._last_certificate: Optional[Infeasible] = None
        self._outcome_cache: Dict[str, dict] = {}
        self._mixture_cache: Optional[MixedHypothesis] = None
        self._sfat_budget_cache: Optional[List[int]] = None

    @property
    def _sfat_budget(self) -> List[int]:
        # base-class dimensions per scale; lazy because embedded runs with
        # invariant checks off never need them
        if self._sfat_budget_cache is None:
            self._sfat_budget_cache = [
                SubclassRef(self.cls).sfat(self.config.scale(level))
                for level in range(1, self.config.n_scales + 1)
            ]
        return self._sfat_budget_cache

    # -- bookkeeping -------------------------------------------------------

    def _weights(self) -> tuple:
        return tuple(self.coll.level_weight(level) for level in range(1, self.config.n_scales + 1))

    def _invalidate(self):
        self._outcome_cache = {}
        self._mixture_cache = None
        self.coll.version += 1

    def _flag(self, condition: bool, message: str, flags: list):
        if condition:
            return
        if self.check_invariants and self.config.strict_constants:
            raise InvariantError(message)
        flags.append(message)

    def sfat_mass(self) -> Fraction:
        """sum over levels of scale * sfat(base class at that scale)."""
        return sum(
            (self.config.scale(level) * d for level, d in enumerate(self._sfat_budget, 1)),
            Fraction(0),
        )

    def delta_bound(self) -> Fraction:
        """32 * finest * (t-1) + 64 * n * ln(1/decay) * sfat_mass, upper bracket."""
        _, ln_hi = ln_bounds(1 / self.config.decay)
        return (
            32 * self.config.finest * (self.t - 1)
            + 64 * self.config.n_scales * ln_hi * self.sfat_mass()
        )

    def failure_budget(self) -> Fraction:
        _, ln_hi = ln_bounds(1 / self.config.decay)
        return 1024 * self.config.n_scales / self.config.finest * ln_hi * self.sfat_mass()

    # -- protocol ------------------------------------------------------------

    def emit(self) -> MixedHypothesis:
        """Run rebuild rounds until a proper mixture exists, then emit it."""
        while True:
            if (
                self.fallback_on_cap
                and self.max_rebuilds is not None
                and self.failure_rounds >= self.max_rebuilds
            ):
                mixture = self._mixture_branch()
                if mixture is None:
                    mixture = self._last_emitted or MixedHypothesis.uniform(
                        range(self.cls.n_hypotheses), self.cls.name
                    )
                self._pending = mixture
                self._last_emitted = mixture
                return mixture
            state, mixture = hpl_round(self, None)
            assert state is self
            if mixture is not None:
                self._last_emitted = mixture
                return mixture

    def observe(self, x: str, y: Rational) -> HplRound:
        state, _ = hpl_round(self, (x, as_fraction(y)))
        return self.trace[-1]

    # -- branch implementations ---------------------------------------------

    def _mixture_branch(self) -> Optional[MixedHypothesis]:
        if self._mixture_cache is not None:
            return self._mixture_cache
        result = find_proper_mixture(self.coll, self.config, self._outcome_cache)
        if isinstance(result, Infeasible):
            self._last_certificate = result
            return None
        self._mixture_cache = result
        return result

    def _success_round(self, x: str, y: Fraction) -> HplRound:
        if self._pending is None:
            raise InvariantError("observe() called before a mixture was emitted")
        before = self._weights()
        outcomes = self._outcome_cache.get(x)
        if outcomes is None:
            outcomes = chain_outcomes(self.coll, x)
        delta = terr_from_outcomes(outcomes, y, self.coll.ladder)
        n = self.config.n_scales
        decay = self.config.decay

        flags: list = []
        changed = False
        for level in range(1, n + 1):
            alpha = self.config.scale(level)
            layer = self.coll.levels[level - 1]
            new_layer: Dict[Tuple[int, Fraction], int] = {}
            level_changed = False
            for (mask, w), mult in layer.items():
                value = _soa_value(self.cls, alpha, mask, x)
                if abs(value - y) > alpha:
                    level_changed = True
                    restricted = SubclassRef(self.cls, mask).restrict(x, y, alpha)
                    if restricted.is_empty:
                        continue  # dropped tuple
                    key = (restricted.mask, w * decay)
                else:
                    key = (mask, w)
                new_layer[key] = new_layer.get(key, 0) + mult
            if not new_layer:
                raise RealizabilityError(
                    f"level {level} lost all subclasses; stream not realizable"
                )
            if level_changed:
                changed = True
                self.coll.levels[level - 1] = new_layer
        if changed:
            self._invalidate()
        after = self._weights()

        self._flag(
            all(a <= b for a, b in zip(after, before)),
            "level weights increased on a mixture round",
            flags,
        )
        if delta > 32 * self.config.finest:
            shrunk = any(
                after[level - 1]
                <= before[level - 1] * (1 - delta / (64 * n * self.config.scale(level)))
                for level in range(1, n + 1)
            )
            self._flag(shrunk, "no level shrank proportionally to the round error", flags)
        self._check_weight_floor(flags)

        for level in range(1, n + 1):
            if after[level - 1] > 0 and before[level - 1] > 0:
                lo, _ = ln_bounds(before[level - 1] / after[level - 1])
                if lo > 0:
                    self.success_log_sum += self.config.scale(level) * lo

        self.cumulative_delta += delta
        self.t += 1
        self.round_index += 1
        self._pending = None
        row = HplRound(
            self.round_index,
            "mixture",
            self.t - 1,
            before,
            after,
            delta=delta,
            x=x,
            y=y,
            flags=tuple(flags),
        )
        self.trace.append(row)
        return row

    def _rebuild_round(self) -> HplRound:
        if self.max_rebuilds is not None and self.failure_rounds >= self.max_rebuilds:
            raise CapacityError(f"rebuild cap {self.max_rebuilds} reached")
        before = self._weights()
        flags: list = []
        datasets = dual_datasets(self.coll, self.config, self._last_certificate)
        n = self.config.n_scales
        A = self.config.copy_factor
        round_mass_max = max(
            (self.config.scale(lv) * len(pairs) for lv, pairs in datasets.items()),
            default=self.config.sample_mass_max,
        )
        round_mass_max = max(round_mass_max, self.config.sample_mass_max)

        new_weight_totals = [Fraction(0)] * n
        for target in range(1, n + 1):
            alpha = self.config.scale(target)
            max_bucket = (1 // alpha) + 1  # buckets 0..floor(1/alpha)+1
            layer = self.coll.levels[target - 1]
            rebuilt: Dict[Tuple[int, Fraction], int] = {
                key: mult * A for key, mult in layer.items()
            }
            for (mask, w), mult in layer.items():
                sub = SubclassRef(self.cls, mask)
                for _, pairs in sorted(datasets.items()):
                    for x, ylabel in pairs:
                        value = _soa_value(self.cls, alpha, mask, x)
                        if abs(value - ylabel) <= 5 * alpha:
                            w_new = self.config.decay * w
                            for b in range(int(max_bucket) + 1):
                                if abs(b * alpha - ylabel) <= 6 * alpha:
                                    continue
                                restricted = sub.restrict_bucket(x, b, alpha)
                                if restricted.is_empty:
                                    continue
                                key = (restricted.mask, w_new)
                                rebuilt[key] = rebuilt.get(key, 0) + mult
                                new_weight_totals[target - 1] += w_new * mult
                        else:
                            key = (mask, w)
                            rebuilt[key] = rebuilt.get(key, 0) + mult
                            new_weight_totals[target - 1] += w * mult
            self.coll.levels[target - 1] = rebuilt
        self._invalidate()
        after = self._weights()

        for level in range(1, n + 1):
            cap = 3 * round_mass_max * n / (self.config.scale(level) * self.config.highvote_divisor)
            self._flag(
                after[level - 1] <= before[level - 1] * (A + cap),
                f"rebuild grew level {level} weight beyond its bound",
                flags,
            )
            self._flag(
                new_weight_totals[level - 1] <= cap * before[level - 1],
                f"rebuild minted too much fresh weight at level {level}",
                flags,
            )
        self._check_weight_floor(flags)

        self.failure_rounds += 1
        self.round_index += 1
        if self.check_invariants:
            self._flag(
                Fraction(self.failure_rounds) <= self.failure_budget(),
                "rebuild rounds exceeded the termination budget",
                flags,
            )
        row = HplRound(self.round_index, "rebuild", self.t, before, after, flags=tuple(flags))
        self.trace.append(row)
        return row

    def _check_weight_floor(self, flags: list):
        if not self.check_invariants:
            return
        for level in range(1, self.config.n_scales + 1):
            floor = self.config.decay ** self._sfat_budget[level - 1]
            for (mask, w) in self.coll.levels[level - 1]:
                if w < floor:
                    raise InvariantError(
                        f"tuple weight {w} below decay^sfat floor at level {level}"
                    )


def hpl_round(state: HplLearner, example: Optional[tuple]):
    """One outer round: either consume the example for the last emitted
    mixture, or make one mixture/rebuild attempt.  Returns (state, mixture
    or None)."""
    if example is not None:
        x, y = example
        state._success_round(x, as_fraction(y))
        return state, None
    mixture = state._mixture_branch()
    if mixture is not None:
        state._pending = mixture
        return state, mixture
    state._rebuild_round()
    return state, None


# ---------------------------------------------------------------------------
# stabilization
# ---------------------------------------------------------------------------


def stabilize(mixtures: Sequence[MixedHypothesis], eta: Rational) -> List[MixedHypothesis]:
    """Sliding-window averages of the emitted mixtures.

    The window length is 1/eta (must be an integer); history before the
    first round is padded with the first mixture, so consecutive outputs
    differ by at most 2*eta in the summed-absolute-difference norm.
    """
    eta = as_fraction(eta)
    if eta <= 0 or (1 / eta).denominator != 1:
        raise ValueError("1/eta must be a positive integer")
    window = int(1 / eta)
    out = []
    for t in range(len(mixtures)):
        parts = []
        for s in range(window):
            idx = t - s
            parts.append((eta, mixtures[idx] if idx >= 0 else mixtures[0]))
        out.append(MixedHypothesis.mix(parts, mixtures[t].class_id))
    return out


class Stabilizer:
    """Streaming form of ``stabilize``."""

    def __init__(self, eta: Rational):
        self.eta = as_fraction(eta)
        if self.eta <= 0 or (1 / self.eta).denominator != 1:
            raise ValueError("1/eta must be a positive integer")
        self.window = int(1 / self.eta)
        self.history: List[MixedHypothesis] = []

    def push(self, mixture: MixedHypothesis) -> MixedHypothesis:
        self.history.append(mixture)
        parts = []
        for s in range(self.window):
            idx = len(self.history) - 1 - s
            parts.append((self.eta, self.history[idx] if idx >= 0 else self.history[0]))
        if len(self.history) > self.window:
            self.history = self.history[-self.window:]
        return MixedHypothesis.mix(parts, mixture.class_id)

    @property
    def current(self) -> Optional[MixedHypothesis]:
        return self.history[-1] if self.history else None


def sample_complexity_v(cls_: FiniteHypothesisClass, finest: Fraction, depth_cap: int = 6) -> Fraction:
    """Indicative uniform-convergence sample bound for the absolute-loss
    class of ``cls_`` (unit constants); informational only — dataset sizes
    are governed by the verification gate, not by this number."""
    from .dimensions import fat

    grid = 1 << cls_.grid_log2_denominator
    domain = []
    rows: List[List[Fraction]] = [[] for _ in cls_.hypotheses]
    seen = set()
    for x in cls_.domain:
        col = cls_.point_index(x)
        for k in range(grid + 1):
            y = Fraction(k, grid)
            column = tuple(abs(row[col] - y) for row in cls_.hypotheses)
            if column in seen:
                continue
            seen.add(column)
            domain.append(f"{x}@{k}")
            for i, v in enumerate(column):
                rows[i].append(v)
    abs_cls = FiniteHypothesisClass.deduped(
        domain, rows, cls_.grid_log2_denominator, name="abs-loss"
    )
    try:
        d = fat(abs_cls, finest / 10, depth_cap=depth_cap)
    except CapacityError:
        d = depth_cap
    log_term = Fraction(math.log(float(10 / finest)))
    return 10 * d * log_term / finest**2
