"""Exact zero-sum matrix game solving over the rationals.

Rows minimize, columns maximize.  The solver shifts the payoff matrix to
be strictly positive, solves the classic normalized linear program with a
Bland-rule simplex on exact fractions, and reads the opponent's strategy
from the dual.  Every returned solution is re-verified against the
defining inequalities before being handed back.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

from .core import Rational, as_fraction
from .errors import InvariantError


@dataclass(frozen=True)
class MatrixGame:
    """Rational payoff matrix; the row player pays the entry to the column player."""

    payoffs: tuple

    def __post_init__(self):
        rows = tuple(tuple(as_fraction(v) for v in row) for row in self.payoffs)
        if not rows or not rows[0]:
            raise ValueError("payoff matrix must be nonempty")
        if len({len(r) for r in rows}) != 1:
            raise ValueError("payoff matrix must be rectangular")
        object.__setattr__(self, "payoffs", rows)

    @property
    def n_rows(self) -> int:
        return len(self.payoffs)

    @property
    def n_cols(self) -> int:
        return len(self.payoffs[0])

    def restrict(self, rows: Optional[Sequence[int]] = None, cols: Optional[Sequence[int]] = None) -> "MatrixGame":
        rows = list(rows) if rows is not None else list(range(self.n_rows))
        cols = list(cols) if cols is not None else list(range(self.n_cols))
        if not rows or not cols:
            raise ValueError("restriction subsets must be nonempty")
        return MatrixGame(tuple(tuple(self.payoffs[i][j] for j in cols) for i in rows))


def _simplex_max(A: List[List[Fraction]], b: List[Fraction], c: List[Fraction]):
    """Maximize c*x subject to A x <= b, x >= 0, with b >= 0.

    Bland's rule, exact fractions.  Returns (objective, x, duals).
    """
    m, n = len(A), len(c)
    # tableau: m constraint rows + cost row; columns: n vars, m slacks, rhs
    width = n + m + 1
    tab = [[Fraction(0)] * width for _ in range(m + 1)]
    for i in range(m):
        for j in range(n):
            tab[i][j] = A[i][j]
        tab[i][n + i] = Fraction(1)
        tab[i][-1] = b[i]
    for j in range(n):
        tab[m][j] = c[j]
    basis = list(range(n, n + m))

    while True:
        enter = next((j for j in range(n + m) if tab[m][j] > 0), None)
        if enter is None:
            break
        ratio = None
        leave = None
        for i in range(m):
            if tab[i][enter] > 0:
                r = tab[i][-1] / tab[i][enter]
                if ratio is None or r < ratio or (r == ratio and basis[i] < basis[leave]):
                    ratio = r
                    leave = i
        if leave is None:
            raise InvariantError("unbounded linear program")
        piv = tab[leave][enter]
        tab[leave] = [v / piv for v in tab[leave]]
        for i in range(m + 1):
            if i != leave and tab[i][enter] != 0:
                coef = tab[i][enter]
                tab[i] = [v - coef * w for v, w in zip(tab[i], tab[leave])]
        basis[leave] = enter

    x = [Fraction(0)] * n
    for i, var in enumerate(basis):
        if var < n:
            x[var] = tab[i][-1]
    duals = [-tab[m][n + i] for i in range(m)]
    return -tab[m][-1], x, duals


def solve(game: MatrixGame) -> Tuple[Fraction, tuple, tuple]:
    """Exact value and optimal mixed strategies, both verified.

    The row strategy caps every column at <= value; the column strategy
    floors every row at >= value.
    """
    M = game.payoffs
    m, n = game.n_rows, game.n_cols
    shift = 1 - min(min(row) for row in M)
    # row player: maximize sum(u) s.t. (M + shift)^T u <= 1, u >= 0
    A = [[M[i][j] + shift for i in range(m)] for j in range(n)]
    ones_n = [Fraction(1)] * n
    ones_m = [Fraction(1)] * m
    obj, u, duals = _simplex_max(A, ones_n, ones_m)
    if obj <= 0:
        raise InvariantError("normalized game program returned nonpositive objective")
    inv = 1 / obj
    row_strategy = tuple(ui * inv for ui in u)
    col_strategy = tuple(z * inv for z in duals)
    value = inv - shift

    if sum(row_strategy) != 1 or any(p < 0 for p in row_strategy):
        raise InvariantError("row strategy is not a distribution")
    if sum(col_strategy) != 1 or any(q < 0 for q in col_strategy):
        raise InvariantError("column strategy is not a distribution")
    for j in range(n):
        if sum(row_strategy[i] * M[i][j] for i in range(m)) > value:
            raise InvariantError("row strategy fails to cap a column at the value")
    for i in range(m):
        if sum(col_strategy[j] * M[i][j] for j in range(n)) < value:
            raise InvariantError("column strategy fails to floor a row at the value")
    return value, row_strategy, col_strategy


def pure_minmax(game: MatrixGame) -> Fraction:
    return min(max(row) for row in game.payoffs)


def pure_maxmin(game: MatrixGame) -> Fraction:
    return max(
        min(game.payoffs[i][j] for i in range(game.n_rows))
        for j in range(game.n_cols)
    )


def value_gap(
    game: MatrixGame,
    rows: Optional[Sequence[int]] = None,
    cols: Optional[Sequence[int]] = None,
) -> Tuple[Fraction, Fraction]:
    """(mixed value - pure maxmin, pure minmax - mixed value), both >= 0."""
    sub = game.restrict(rows, cols)
    value, _, _ = solve(sub)
    lo_gap = value - pure_maxmin(sub)
    hi_gap = pure_minmax(sub) - value
    if lo_gap < 0 or hi_gap < 0:
        raise InvariantError("mixed value escaped the pure-strategy bracket")
    return lo_gap, hi_gap


@dataclass(frozen=True)
class Infeasible:
    """Certificate that no distribution satisfies the constraint system.

    ``constraint_weights`` is a distribution over constraints under which
    every candidate point violates the aggregate by at least ``margin``.
    """

    constraint_weights: tuple
    margin: Fraction


def feasible_distribution(
    coefficients: Sequence[Sequence[Rational]],
    bounds: Sequence[Rational],
):
    """Find p in the simplex with coefficients[k] . p <= bounds[k] for all k.

    Returns a tuple of weights (one per coordinate, possibly zero) on
    success, else an ``Infeasible`` certificate.  With no constraints the
    uniform distribution is returned.  Deterministic (Bland's rule).
    """
    n = None
    rows = []
    bvals = [as_fraction(v) for v in bounds]
    for coeffs in coefficients:
        row = [as_fraction(v) for v in coeffs]
        if n is None:
            n = len(row)
        elif len(row) != n:
            raise ValueError("ragged constraint matrix")
        rows.append(row)
    if not rows:
        raise ValueError("dimension unknown: no constraints (caller handles this case)")

    # p feasible iff the game min_p max_k (coeffs[k].p - bounds[k]) has value <= 0
    payoff = [[rows[k][i] - bvals[k] for k in range(len(rows))] for i in range(n)]
    value, p, mu = solve(MatrixGame(tuple(tuple(r) for r in payoff)))
    if value <= 0:
        for k in range(len(rows)):
            if sum(p[i] * rows[k][i] for i in range(n)) > bvals[k]:
                raise InvariantError("feasibility solution violates a constraint")
        return tuple(p)
    # verify the certificate: every vertex violates the mu-aggregate
    for i in range(n):
        aggregate = sum(mu[k] * payoff[i][k] for k in range(len(rows)))
        if aggregate < value:
            raise InvariantError("infeasibility certificate fails on a vertex")
    return Infeasible(tuple(mu), value)
