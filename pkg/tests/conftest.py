"""Shared corpus of finite hypothesis classes for the whole test suite."""

import itertools
import random
from fractions import Fraction

import pytest

from shatterlearn.core import FiniteHypothesisClass
from shatterlearn.dimensions import make_threshold_class


def full_cube(n_points):
    return FiniteHypothesisClass(
        [f"x{i}" for i in range(n_points)],
        [list(bits) for bits in itertools.product((0, 1), repeat=n_points)],
        0,
        name=f"cube{n_points}",
    )


def threshold_steps(n):
    """n distinct one-sided step functions on n points (includes all-ones)."""
    return FiniteHypothesisClass(
        [f"x{j}" for j in range(n)],
        [[1 if x >= i else 0 for x in range(n)] for i in range(n)],
        0,
        name=f"steps{n}",
    )


def endpoint_product(d, alpha_prime=Fraction(1, 2), grid=None):
    """All maps from d points to the two endpoints (1 +- alpha')/2."""
    lo = (1 - Fraction(alpha_prime)) / 2
    hi = (1 + Fraction(alpha_prime)) / 2
    if grid is None:
        grid = max(lo.denominator.bit_length() - 1, hi.denominator.bit_length() - 1)
    return FiniteHypothesisClass(
        [f"x{i}" for i in range(1, d + 1)],
        [[hi if b else lo for b in bits] for bits in itertools.product((0, 1), repeat=d)],
        grid,
        name=f"endpoints{d}m{alpha_prime.denominator if isinstance(alpha_prime, Fraction) else alpha_prime}",
    )


def random_grid_class(seed, n_hyp, n_points, grid):
    rng = random.Random(seed)
    denom = 1 << grid
    rows = set()
    while len(rows) < n_hyp:
        rows.add(tuple(Fraction(rng.randrange(denom + 1), denom) for _ in range(n_points)))
    return FiniteHypothesisClass(
        [f"x{i}" for i in range(n_points)],
        sorted(rows),
        grid,
        name=f"rand{seed}_{n_hyp}x{n_points}g{grid}",
    )


def random_binary_class(seed, n_hyp, n_points):
    rng = random.Random(seed)
    rows = set()
    while len(rows) < n_hyp:
        rows.add(tuple(rng.randrange(2) for _ in range(n_points)))
    return FiniteHypothesisClass(
        [f"x{i}" for i in range(n_points)],
        sorted(rows),
        0,
        name=f"randbin{seed}_{n_hyp}x{n_points}",
    )


def build_corpus():
    classes = [
        full_cube(1),
        full_cube(2),
        full_cube(3),
        threshold_steps(4),
        threshold_steps(8),
        endpoint_product(2),
        endpoint_product(3),
        endpoint_product(4),
        endpoint_product(3, Fraction(1, 4), grid=3),
        make_threshold_class(4, 0, 1, 2),
        make_threshold_class(4, Fraction(1, 4), Fraction(3, 4), 2),
        make_threshold_class(8, 0, 1, 2),
        FiniteHypothesisClass(["x0"], [[Fraction(1, 2)]], 1, name="singleton"),
        FiniteHypothesisClass(["x0", "x1"], [[0, 0], [1, 1]], 0, name="constants"),
        FiniteHypothesisClass(
            ["x1", "x2", "x3"], [[0, 1, 1], [1, 0, 1], [1, 1, 0]], 2, name="anti3"
        ),
        random_grid_class(1, 5, 3, 2),
        random_grid_class(2, 8, 3, 3),
        random_grid_class(3, 12, 4, 3),
        random_grid_class(4, 16, 3, 4),
        random_grid_class(5, 6, 4, 2),
        random_binary_class(6, 32, 6),
        random_binary_class(7, 64, 6),
    ]
    assert len(classes) >= 20
    return classes


_CORPUS = build_corpus()


@pytest.fixture(scope="session")
def corpus():
    return _CORPUS


@pytest.fixture(scope="session")
def small_corpus():
    """Members cheap enough for the heaviest oracle cross-checks."""
    return [c for c in _CORPUS if c.n_hypotheses <= 16 and c.n_points <= 4]
