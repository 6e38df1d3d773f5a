"""Exact combinatorial dimensions of finite hypothesis classes.

Sequential fat-shattering dimension, Littlestone dimension, the
non-sequential fat-shattering dimension, dual classes, sequential
covering numbers, and margin-threshold families — all computed by
exhaustive search with exact rationals, returning re-checkable
certificates where one exists.

Witness values: a depth-1 split at margin ``alpha/2`` keeps
``{f : f(x) <= s - alpha/2}`` and ``{f : f(x) >= s + alpha/2}``.  As the
real witness ``s`` sweeps, the pair of kept sets only changes at the
breakpoints ``v - alpha/2`` and ``v + alpha/2`` for values ``v`` attained
at ``x``, and the configuration AT a breakpoint dominates (contains) the
configurations on the adjacent open interval.  Enumerating breakpoints is
therefore exact, and every breakpoint is automatically a half-grid point
when values and ``alpha`` are dyadic.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .core import FiniteHypothesisClass, Rational, as_fraction
from .errors import CapacityError

MAX_SHATTER_DEPTH = 12
MAX_CLASS_SIZE = 4096

_EMPTY = -1  # sentinel dimension of the empty class, below every real value


def _mask_bits(mask: int) -> Iterable[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


@dataclass(frozen=True)
class ShatterTree:
    """A complete binary tree of domain labels with a parallel witness tree.

    Nodes at depth ``t`` are indexed by sign prefixes of length ``t - 1``
    (tuples over {-1, +1}).  ``verify`` re-checks the shattering claim by
    exhaustive leaf enumeration, independently of how the tree was found.
    """

    depth: int
    labels: Dict[tuple, str]
    witness: Dict[tuple, Fraction]

    def __post_init__(self):
        for t in range(self.depth):
            for prefix in itertools.product((-1, 1), repeat=t):
                if prefix not in self.labels:
                    raise ValueError(f"missing label at node {prefix} (depth {t + 1})")
                if self.witness and prefix not in self.witness:
                    raise ValueError(f"missing witness at node {prefix} (depth {t + 1})")

    @classmethod
    def point_tree(cls, depth: int, labels: Dict[tuple, str]) -> "ShatterTree":
        """A labels-only tree (no witness), e.g. for covering-number queries."""
        return cls(depth, labels, {})

    def verify(self, cls_: FiniteHypothesisClass, alpha: Rational, mask: Optional[int] = None) -> bool:
        alpha = as_fraction(alpha)
        if mask is None:
            mask = cls_.full_mask()
        half = alpha / 2
        rows = cls_.hypotheses
        indices = list(_mask_bits(mask))
        for leaf in itertools.product((-1, 1), repeat=self.depth):
            found = False
            for i in indices:
                ok = True
                for t in range(self.depth):
                    prefix = leaf[:t]
                    j = cls_.point_index(self.labels[prefix])
                    if leaf[t] * (rows[i][j] - self.witness[prefix]) < half:
                        ok = False
                        break
                if ok:
                    found = True
                    break
            if not found:
                return False
        return True


# ---------------------------------------------------------------------------
# sequential fat-shattering dimension
# ---------------------------------------------------------------------------


class _SfatCache:
    """Per-(class, alpha) memo of subclass dimensions, keyed by bitmask.

    Candidate splits are precomputed once as full-class low/high bitmasks
    per (point, witness); a subclass split is then two bigint ANDs.
    """

    def __init__(self, cls_: FiniteHypothesisClass, alpha: Fraction, depth_cap: int):
        self.cls = cls_
        self.alpha = alpha
        self.half = alpha / 2
        self.depth_cap = depth_cap
        self.memo: Dict[int, int] = {0: _EMPTY}
        self.split_table: List[List[Tuple[Fraction, int, int]]] = []
        for j in range(cls_.n_points):
            values = sorted({row[j] for row in cls_.hypotheses})
            cand = set()
            for v in values:
                for s in (v - self.half, v + self.half):
                    if 0 <= s <= 1:
                        cand.add(s)
            table = []
            for s in sorted(cand):
                lo = hi = 0
                for i, row in enumerate(cls_.hypotheses):
                    v = row[j]
                    if v <= s - self.half:
                        lo |= 1 << i
                    elif v >= s + self.half:
                        hi |= 1 << i
                if lo and hi:
                    table.append((s, lo, hi))
            self.split_table.append(table)

    def splits(self, mask: int, j: int) -> List[Tuple[Fraction, int, int]]:
        """Distinct (witness, low-mask, high-mask) splits of ``mask`` at point j."""
        out = []
        seen = set()
        for s, lo_full, hi_full in self.split_table[j]:
            lo = mask & lo_full
            hi = mask & hi_full
            if lo and hi and (lo, hi) not in seen:
                seen.add((lo, hi))
                out.append((s, lo, hi))
        return out

    def dim(self, mask: int) -> int:
        cached = self.memo.get(mask)
        if cached is not None:
            return cached
        best = 0
        for j in range(self.cls.n_points):
            for _, lo, hi in self.splits(mask, j):
                d = 1 + min(self.dim(lo), self.dim(hi))
                if d > best:
                    best = d
                    if best > self.depth_cap:
                        raise CapacityError(
                            f"shattering depth exceeds cap {self.depth_cap}"
                        )
        self.memo[mask] = best
        return best

    def build_tree(self, mask: int, depth: int) -> ShatterTree:
        labels: Dict[tuple, str] = {}
        witness: Dict[tuple, Fraction] = {}

        def fill(sub: int, d: int, prefix: tuple) -> None:
            if d == 0:
                return
            for j in range(self.cls.n_points):
                for s, lo, hi in self.splits(sub, j):
                    if self.dim(lo) >= d - 1 and self.dim(hi) >= d - 1:
                        labels[prefix] = self.cls.domain[j]
                        witness[prefix] = s
                        fill(lo, d - 1, prefix + (-1,))
                        fill(hi, d - 1, prefix + (1,))
                        return
            raise AssertionError("certificate construction disagrees with search")

        fill(mask, depth, ())
        return ShatterTree(depth, labels, witness)


_CACHES: Dict[tuple, _SfatCache] = {}


def _cache_for(cls_: FiniteHypothesisClass, alpha: Fraction, depth_cap: int) -> _SfatCache:
    key = (id(cls_), alpha, depth_cap)
    cache = _CACHES.get(key)
    if cache is None or cache.cls is not cls_:
        cache = _SfatCache(cls_, alpha, depth_cap)
        _CACHES[key] = cache
    return cache


def sfat_value(
    cls_: FiniteHypothesisClass,
    alpha: Rational,
    mask: Optional[int] = None,
    depth_cap: int = MAX_SHATTER_DEPTH,
) -> int:
    """Sequential fat-shattering dimension of a subclass (no certificate).

    Returns -1 for the empty subclass so that bucket maximization can
    treat empties as minus infinity.
    """
    alpha = as_fraction(alpha)
    if alpha <= 0:
        raise ValueError("scale alpha must be positive")
    if cls_.n_hypotheses > MAX_CLASS_SIZE:
        raise CapacityError(f"class size {cls_.n_hypotheses} exceeds cap {MAX_CLASS_SIZE}")
    if mask is None:
        mask = cls_.full_mask()
    return _cache_for(cls_, alpha, depth_cap).dim(mask)


def sfat(
    cls_: FiniteHypothesisClass,
    alpha: Rational,
    mask: Optional[int] = None,
    depth_cap: int = MAX_SHATTER_DEPTH,
) -> Tuple[int, Optional[ShatterTree]]:
    """Exact sequential fat-shattering dimension with a verified certificate.

    The certificate (absent at dimension 0) is re-checked by exhaustive
    leaf verification before being returned.
    """
    if mask is None:
        mask = cls_.full_mask()
    if mask == 0:
        raise ValueError("sfat of the empty class is undefined")
    d = sfat_value(cls_, alpha, mask, depth_cap)
    if d == 0:
        return 0, None
    alpha = as_fraction(alpha)
    tree = _cache_for(cls_, alpha, depth_cap).build_tree(mask, d)
    if not tree.verify(cls_, alpha, mask):
        raise AssertionError("certificate failed independent verification")
    return d, tree


def ldim(cls_: FiniteHypothesisClass, mask: Optional[int] = None) -> int:
    """Littlestone dimension of a binary-valued class (sfat at scale 1)."""
    for row in cls_.hypotheses:
        for v in row:
            if v != 0 and v != 1:
                raise ValueError("Littlestone dimension requires a {0,1}-valued class")
    if mask is None:
        mask = cls_.full_mask()
    if mask == 0:
        raise ValueError("ldim of the empty class is undefined")
    return sfat_value(cls_, Fraction(1), mask)


# ---------------------------------------------------------------------------
# non-sequential fat-shattering dimension
# ---------------------------------------------------------------------------


def fat(
    cls_: FiniteHypothesisClass,
    alpha: Rational,
    mask: Optional[int] = None,
    depth_cap: int = MAX_SHATTER_DEPTH,
) -> int:
    """Non-sequential fat-shattering dimension by exhaustive subset search.

    A set of points shatters iff splitting every currently-live subclass
    at each successive point leaves all 2^d cells nonempty; repeated
    points never shatter, so the search runs over distinct points.
    """
    alpha = as_fraction(alpha)
    if alpha <= 0:
        raise ValueError("scale alpha must be positive")
    if mask is None:
        mask = cls_.full_mask()
    if mask == 0:
        raise ValueError("fat of the empty class is undefined")
    half = alpha / 2
    rows = cls_.hypotheses
    n_points = cls_.n_points

    point_splits: List[List[Tuple[int, int]]] = []
    for j in range(n_points):
        values = sorted({row[j] for row in rows})
        cand = set()
        for v in values:
            for s in (v - half, v + half):
                if 0 <= s <= 1:
                    cand.add(s)
        splits = []
        seen = set()
        for s in sorted(cand):
            lo = hi = 0
            for i, row in enumerate(rows):
                v = row[j]
                if v <= s - half:
                    lo |= 1 << i
                elif v >= s + half:
                    hi |= 1 << i
            if lo and hi and (lo, hi) not in seen:
                seen.add((lo, hi))
                splits.append((lo, hi))
        point_splits.append(splits)

    memo: Dict[tuple, int] = {}

    def rec(cells: frozenset, avail: tuple) -> int:
        key = (cells, avail)
        cached = memo.get(key)
        if cached is not None:
            return cached
        best = 0
        if all(bin(c).count("1") >= 2 for c in cells):
            for idx, j in enumerate(avail):
                rest = avail[:idx] + avail[idx + 1:]
                for lo, hi in point_splits[j]:
                    new_cells = set()
                    ok = True
                    for c in cells:
                        clo, chi = c & lo, c & hi
                        if not clo or not chi:
                            ok = False
                            break
                        new_cells.add(clo)
                        new_cells.add(chi)
                    if ok:
                        d = 1 + rec(frozenset(new_cells), rest)
                        if d > best:
                            best = d
                            if best > depth_cap:
                                raise CapacityError(
                                    f"fat-shattering depth exceeds cap {depth_cap}"
                                )
        memo[key] = best
        return best

    return rec(frozenset([mask]), tuple(range(n_points)))


# ---------------------------------------------------------------------------
# dual class
# ---------------------------------------------------------------------------


def dual_class(cls_: FiniteHypothesisClass) -> FiniteHypothesisClass:
    """Transpose: hypotheses become points and vice versa, duplicates collapsed."""
    columns = [
        [cls_.hypotheses[i][j] for i in range(cls_.n_hypotheses)]
        for j in range(cls_.n_points)
    ]
    domain = [f"f{i}" for i in range(cls_.n_hypotheses)]
    name = f"{cls_.name}^*" if cls_.name else None
    return FiniteHypothesisClass.deduped(domain, columns, cls_.grid_log2_denominator, name)


# ---------------------------------------------------------------------------
# sequential covering numbers
# ---------------------------------------------------------------------------


def _path_profiles(cls_: FiniteHypothesisClass, xtree: ShatterTree) -> List[tuple]:
    """Distinct (leaf, value-profile) pairs over hypotheses and leaves."""
    d = xtree.depth
    profiles = set()
    for leaf in itertools.product((-1, 1), repeat=d):
        point_idx = [cls_.point_index(xtree.labels[leaf[:t]]) for t in range(d)]
        for row in cls_.hypotheses:
            profiles.add((leaf, tuple(row[j] for j in point_idx)))
    return sorted(profiles)


def seq_cover_number(
    cls_: FiniteHypothesisClass,
    xtree: ShatterTree,
    alpha: Rational,
    depth_cap: int = 6,
) -> int:
    """Exact minimum size of a sequential alpha-cover on the given point tree.

    A single covering tree can serve a subset of (hypothesis, leaf) pairs
    iff at every shared node the attained values lie within a 2*alpha
    window; that condition is pairwise, so the minimum cover is a minimum
    clique cover of the compatibility graph, found exactly by search.
    """
    alpha = as_fraction(alpha)
    if xtree.depth > depth_cap:
        raise CapacityError(f"tree depth {xtree.depth} exceeds cover-search cap {depth_cap}")
    universe = _path_profiles(cls_, xtree)
    n = len(universe)
    if n == 0:
        return 0
    if n > 24:
        raise CapacityError(f"{n} path profiles exceed cover-search capacity")
    two_alpha = 2 * alpha

    def compatible(a: tuple, b: tuple) -> bool:
        leaf_a, prof_a = a
        leaf_b, prof_b = b
        for t in range(len(leaf_a)):
            if leaf_a[:t] != leaf_b[:t]:
                break
            if abs(prof_a[t] - prof_b[t]) > two_alpha:
                return False
        return True

    adj = [0] * n
    for i in range(n):
        for k in range(i + 1, n):
            if compatible(universe[i], universe[k]):
                adj[i] |= 1 << k
                adj[k] |= 1 << i

    full = (1 << n) - 1
    best = [n]
    memo: Dict[int, int] = {}

    def min_cover(uncovered: int, used: int) -> None:
        if used + 1 >= best[0] and uncovered:
            return
        if uncovered == 0:
            best[0] = min(best[0], used)
            return
        seen = memo.get(uncovered)
        if seen is not None and seen <= used:
            return
        memo[uncovered] = used

        pivot_bit = uncovered & -uncovered
        pivot = pivot_bit.bit_length() - 1
        cliques: List[int] = []

        def dfs(clique: int, common_adj: int, cand: int) -> None:
            if common_adj & uncovered & ~clique == 0:
                cliques.append(clique)  # maximal within the uncovered set
            rest = cand
            while rest:
                low = rest & -rest
                rest ^= low
                v = low.bit_length() - 1
                dfs(clique | low, common_adj & adj[v], rest & adj[v])

        dfs(pivot_bit, adj[pivot], adj[pivot] & uncovered)
        for clique in cliques:
            min_cover(uncovered & ~clique, used + 1)

    min_cover(full, 0)
    return best[0]


# ---------------------------------------------------------------------------
# thresholds with margin
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ThresholdFamily:
    """A staircase witness: d points, d hypotheses, and levels u, u'."""

    points: tuple
    hypotheses: tuple
    u: Fraction
    u_prime: Fraction
    margin: Fraction
    tightness: Fraction
    ordered: bool

    def verify(self, cls_: FiniteHypothesisClass) -> bool:
        if abs(self.u - self.u_prime) < self.margin:
            return False
        if self.ordered and self.u_prime <= self.u:
            return False
        d = len(self.points)
        if len(self.hypotheses) != d:
            return False
        for a, i in enumerate(self.hypotheses):
            for b, x in enumerate(self.points):
                v = cls_.value(i, x)
                target = self.u if a <= b else self.u_prime
                if abs(v - target) > self.tightness:
                    return False
        return True


def find_thresholds(
    cls_: FiniteHypothesisClass,
    alpha: Rational,
    beta: Rational,
    ordered: bool = False,
    cap: int = 8,
    node_cap: int = 200_000,
) -> Tuple[int, Optional[ThresholdFamily], bool]:
    """Largest margin-threshold family, by depth-first search.

    Returns (d, family, exact) where ``exact`` is False when the search
    hit ``node_cap`` and the result is only a lower bound.
    """
    alpha = as_fraction(alpha)
    beta = as_fraction(beta)
    if not alpha > 2 * beta >= 0:
        raise ValueError("need alpha > 2*beta >= 0")
    rows = cls_.hypotheses
    n_h, n_p = cls_.n_hypotheses, cls_.n_points

    best: List = [0, None]
    nodes = [0]
    exact = [True]

    def levels_ok(a_lo, a_hi, b_lo, b_hi) -> Optional[Tuple[Fraction, Fraction]]:
        # u within beta of every "upper-left" value, u' of every "lower-left" one
        u_lo, u_hi = max(a_hi - beta, Fraction(0)), min(a_lo + beta, Fraction(1))
        if a_lo > a_hi:  # no constraint yet
            u_lo, u_hi = Fraction(0), Fraction(1)
        v_lo, v_hi = max(b_hi - beta, Fraction(0)), min(b_lo + beta, Fraction(1))
        if b_lo > b_hi:
            v_lo, v_hi = Fraction(0), Fraction(1)
        if u_lo > u_hi or v_lo > v_hi:
            return None
        if v_hi - u_lo >= alpha:
            return u_lo, v_hi
        if not ordered and u_hi - v_lo >= alpha:
            return u_hi, v_lo
        return None

    def extend(seq: List[Tuple[int, int]], a_lo, a_hi, b_lo, b_hi) -> None:
        d = len(seq)
        if d > best[0]:
            u, u_prime = levels_ok(a_lo, a_hi, b_lo, b_hi)
            best[0] = d
            best[1] = ThresholdFamily(
                tuple(cls_.domain[x] for _, x in seq),
                tuple(i for i, _ in seq),
                u,
                u_prime,
                alpha,
                beta,
                ordered,
            )
        if d == cap:
            return
        used_h = {i for i, _ in seq}
        used_x = {x for _, x in seq}
        for i in range(n_h):
            if i in used_h:
                continue
            for x in range(n_p):
                if x in used_x:
                    continue
                nodes[0] += 1
                if nodes[0] > node_cap:
                    exact[0] = False
                    return
                # appending (f_i, x) adds column values (all f at x) to the
                # u-cluster and row values (f_i at old x) to the u'-cluster
                na_lo, na_hi = a_lo, a_hi
                for ii, _ in seq + [(i, x)]:
                    v = rows[ii][x]
                    na_lo, na_hi = min(na_lo, v), max(na_hi, v)
                nb_lo, nb_hi = b_lo, b_hi
                for _, xx in seq:
                    v = rows[i][xx]
                    nb_lo, nb_hi = min(nb_lo, v), max(nb_hi, v)
                if na_hi - na_lo > 2 * beta or nb_hi - nb_lo > 2 * beta:
                    continue
                if levels_ok(na_lo, na_hi, nb_lo, nb_hi) is None:
                    continue
                extend(seq + [(i, x)], na_lo, na_hi, nb_lo, nb_hi)

    one = Fraction(1)
    extend([], one, Fraction(0), one, Fraction(0))
    d, family = best
    if family is not None and not family.verify(cls_):
        raise AssertionError("threshold family failed verification")
    return d, family, exact[0]


def make_threshold_class(
    d: int,
    u: Rational,
    u_prime: Rational,
    grid_log2_denominator: int = 4,
    name: Optional[str] = None,
) -> FiniteHypothesisClass:
    """Explicit staircase class: f_i(x_j) = u for i <= j, u' otherwise."""
    u = as_fraction(u)
    u_prime = as_fraction(u_prime)
    domain = [f"x{j}" for j in range(1, d + 1)]
    rows = [[u if i <= j else u_prime for j in range(1, d + 1)] for i in range(1, d + 1)]
    return FiniteHypothesisClass(
        domain, rows, grid_log2_denominator, name or f"thresholds-{d}"
    )
