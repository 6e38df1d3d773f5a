"""Independent brute-force oracles the fast implementations are checked
against.  These deliberately use different data structures (frozensets of
value rows instead of bitmasks) and a different witness grid (the full
half-grid of the class) so shared bugs are unlikely."""

import itertools
from fractions import Fraction

from shatterlearn.soa import ScaleLadder, hagg


def half_grid(grid_log2_denominator):
    denom = 1 << (grid_log2_denominator + 1)
    return [Fraction(k, denom) for k in range(denom + 1)]


def sfat_oracle(cls_, alpha):
    """Sequential fat-shattering dimension by frozenset recursion over the
    full half-grid of witnesses."""
    alpha = Fraction(alpha)
    half = alpha / 2
    witnesses = half_grid(cls_.grid_log2_denominator)
    n_points = cls_.n_points
    memo = {}

    def rec(rows):
        if rows in memo:
            return memo[rows]
        best = 0
        for j in range(n_points):
            seen = set()
            for s in witnesses:
                lo = frozenset(r for r in rows if r[j] <= s - half)
                hi = frozenset(r for r in rows if r[j] >= s + half)
                if lo and hi and (lo, hi) not in seen:
                    seen.add((lo, hi))
                    best = max(best, 1 + min(rec(lo), rec(hi)))
        memo[rows] = best
        return best

    return rec(frozenset(cls_.hypotheses))


def ldim_oracle(cls_):
    """Littlestone dimension by the classic binary split recursion."""
    memo = {}

    def rec(rows):
        if rows in memo:
            return memo[rows]
        best = 0
        for j in range(cls_.n_points):
            zeros = frozenset(r for r in rows if r[j] == 0)
            ones = frozenset(r for r in rows if r[j] == 1)
            if zeros and ones:
                best = max(best, 1 + min(rec(zeros), rec(ones)))
        memo[rows] = best
        return best

    return rec(frozenset(cls_.hypotheses))


def ldim_tree_oracle(cls_, max_depth):
    """Littlestone dimension by literal enumeration of labeled trees."""

    def shatters(rows, depth):
        if depth == 0:
            return bool(rows)
        for j in range(cls_.n_points):
            zeros = frozenset(r for r in rows if r[j] == 0)
            ones = frozenset(r for r in rows if r[j] == 1)
            if zeros and ones and shatters(zeros, depth - 1) and shatters(ones, depth - 1):
                return True
        return False

    rows = frozenset(cls_.hypotheses)
    d = 0
    while d < max_depth and shatters(rows, d + 1):
        d += 1
    return d


def fat_oracle(cls_, alpha):
    """Non-sequential fat dimension: distinct point subsets with per-point
    witnesses from the full half-grid, all sign patterns demanded."""
    alpha = Fraction(alpha)
    half = alpha / 2
    witnesses = half_grid(cls_.grid_log2_denominator)
    rows = list(cls_.hypotheses)
    n_points = cls_.n_points

    split_options = []
    for j in range(n_points):
        options = []
        seen = set()
        for s in witnesses:
            lo = frozenset(r for r in rows if r[j] <= s - half)
            hi = frozenset(r for r in rows if r[j] >= s + half)
            if lo and hi and (lo, hi) not in seen:
                seen.add((lo, hi))
                options.append((lo, hi))
        split_options.append(options)

    memo = {}

    def rec(cells, remaining):
        key = (cells, remaining)
        if key in memo:
            return memo[key]
        best = 0
        for idx, j in enumerate(remaining):
            rest = remaining[:idx] + remaining[idx + 1:]
            for lo, hi in split_options[j]:
                new_cells = set()
                ok = True
                for cell in cells:
                    a, b = cell & lo, cell & hi
                    if not a or not b:
                        ok = False
                        break
                    new_cells.add(a)
                    new_cells.add(b)
                if ok:
                    best = max(best, 1 + rec(frozenset(new_cells), rest))
        memo[key] = best
        return best

    return rec(frozenset([frozenset(rows)]), tuple(range(n_points)))


def enumerate_chain_outcomes(coll, x):
    """Naive enumeration over every chain of a weighted subclass collection."""
    from shatterlearn.hpl import _soa_value

    n = coll.n_scales
    per_level = []
    for level in range(1, n + 1):
        alpha = coll.ladder.scale(level)
        entries = []
        total = coll.level_weight(level)
        for (mask, w), mult in sorted(coll.levels[level - 1].items()):
            entries.append((_soa_value(coll.cls, alpha, mask, x), w * mult / total))
        per_level.append(entries)
    outcomes = {}
    for chain in itertools.product(*per_level):
        prob = Fraction(1)
        values = []
        for v, p in chain:
            prob *= p
            values.append(v)
        if prob == 0:
            continue
        value, cutoff = hagg(values, coll.ladder)
        key = (value, cutoff)
        outcomes[key] = outcomes.get(key, Fraction(0)) + prob
    return outcomes


def min_cover_oracle(universe, compatible):
    """Exact minimum clique cover by exhaustive assignment search."""
    n = len(universe)
    comp = [[compatible(universe[i], universe[j]) for j in range(n)] for i in range(n)]

    def feasible(k):
        assignment = [-1] * n

        def place(i):
            if i == n:
                return True
            used = {assignment[j] for j in range(i)}
            for c in range(min(k, len(used) + 1)):
                if all(comp[i][j] for j in range(i) if assignment[j] == c):
                    assignment[i] = c
                    if place(i + 1):
                        return True
                    assignment[i] = -1
            return False

        return place(0)

    for k in range(1, n + 1):
        if feasible(k):
            return k
    return n
