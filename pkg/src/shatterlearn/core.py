"""Exact dyadic values, finite hypothesis classes, examples, and mixtures.

Everything downstream (dimension search, learners, games) operates on
exact rationals: hypothesis values and labels live on a dyadic grid
``p / 2^k``, while weights may be arbitrary ``Fraction`` values.  No
floating point is used anywhere on a comparison path.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

from .errors import GridError

Rational = Union[int, Fraction]

_DYADIC_RE = re.compile(r"^(-?\d+)\s*/\s*2\^(\d+)$")
_RATIO_RE = re.compile(r"^(-?\d+)\s*/\s*(\d+)$")


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


class DyadicValue(Fraction):
    """A rational with power-of-two denominator, in canonical reduced form.

    ``Fraction`` normalization already guarantees the canonical form
    (odd numerator unless zero); construction only adds the denominator
    check.  Arithmetic degrades gracefully to plain ``Fraction``.
    """

    __slots__ = ()

    def __new__(cls, numerator: Rational = 0, log2_denominator: Optional[int] = None):
        if log2_denominator is None:
            value = Fraction(numerator)
        else:
            if log2_denominator < 0:
                raise GridError("log2_denominator must be nonnegative")
            value = Fraction(numerator, 1 << log2_denominator)
        if not _is_power_of_two(value.denominator):
            raise GridError(f"{value} is not dyadic")
        return super().__new__(cls, value)

    @property
    def log2_denominator(self) -> int:
        return self.denominator.bit_length() - 1

    @classmethod
    def parse(cls, text: str) -> "DyadicValue":
        """Parse ``p/2^k``, an exact decimal, a plain ratio, or an integer."""
        text = text.strip()
        m = _DYADIC_RE.match(text)
        if m:
            return cls(int(m.group(1)), int(m.group(2)))
        m = _RATIO_RE.match(text)
        if m:
            return cls(Fraction(int(m.group(1)), int(m.group(2))))
        try:
            return cls(Fraction(text))
        except (ValueError, ZeroDivisionError) as exc:
            raise GridError(f"cannot parse dyadic value from {text!r}") from exc

    def render(self) -> str:
        return f"{self.numerator}/2^{self.log2_denominator}"


def as_fraction(value: Rational) -> Fraction:
    return value if isinstance(value, Fraction) else Fraction(value)


def clamp_unit(value: Rational) -> Fraction:
    """Clamp to [0, 1].  Never increases |v - y| for any y in [0, 1]."""
    v = as_fraction(value)
    if v < 0:
        v = Fraction(0)
    elif v > 1:
        v = Fraction(1)
    return DyadicValue(v) if isinstance(value, DyadicValue) else v


def render_rational(value: Rational) -> str:
    """Exact string form; dyadic values render as ``p/2^k``."""
    v = as_fraction(value)
    if _is_power_of_two(v.denominator):
        return f"{v.numerator}/2^{v.denominator.bit_length() - 1}"
    return f"{v.numerator}/{v.denominator}"


@dataclass(frozen=True)
class Example:
    """One labelled observation: a domain point id and a label in [0, 1]."""

    x: str
    y: Fraction

    def __post_init__(self):
        object.__setattr__(self, "y", as_fraction(self.y))
        if not 0 <= self.y <= 1:
            raise ValueError(f"label {self.y} outside [0, 1]")


class FiniteHypothesisClass:
    """A finite set of [0, 1]-valued functions on a finite ordered domain.

    Stored densely as a value matrix: ``hypotheses[i][j]`` is the value
    of hypothesis ``i`` at domain point ``j``.  Rows must be distinct,
    values must lie on the dyadic grid ``2^-grid_log2_denominator``.
    """

    __slots__ = ("domain", "hypotheses", "grid_log2_denominator", "name", "_point_index", "_hash")

    def __init__(
        self,
        domain: Sequence[str],
        hypotheses: Sequence[Sequence[Rational]],
        grid_log2_denominator: int,
        name: Optional[str] = None,
    ):
        if not domain:
            raise ValueError("domain must be nonempty")
        if len(set(domain)) != len(domain):
            raise ValueError("domain point ids must be distinct")
        if grid_log2_denominator < 0:
            raise GridError("grid_log2_denominator must be nonnegative")
        step_den = 1 << grid_log2_denominator
        rows = []
        for row in hypotheses:
            if len(row) != len(domain):
                raise ValueError("hypothesis row length does not match domain")
            frow = tuple(as_fraction(v) for v in row)
            for v in frow:
                if not 0 <= v <= 1:
                    raise ValueError(f"value {v} outside [0, 1]")
                if (v * step_den).denominator != 1:
                    raise GridError(f"value {v} not on grid 2^-{grid_log2_denominator}")
            rows.append(frow)
        if not rows:
            raise ValueError("hypothesis set must be nonempty")
        if len(set(rows)) != len(rows):
            raise ValueError("hypothesis rows must be distinct")
        self.domain = tuple(domain)
        self.hypotheses = tuple(rows)
        self.grid_log2_denominator = grid_log2_denominator
        self.name = name
        self._point_index = {x: j for j, x in enumerate(self.domain)}
        self._hash = hash((self.domain, self.hypotheses, grid_log2_denominator))

    # -- basic accessors -------------------------------------------------

    @property
    def n_hypotheses(self) -> int:
        return len(self.hypotheses)

    @property
    def n_points(self) -> int:
        return len(self.domain)

    def point_index(self, x: str) -> int:
        try:
            return self._point_index[x]
        except KeyError:
            raise KeyError(f"point {x!r} not in domain") from None

    def value(self, hyp_index: int, x: str) -> Fraction:
        return self.hypotheses[hyp_index][self.point_index(x)]

    def full_mask(self) -> int:
        return (1 << self.n_hypotheses) - 1

    def __eq__(self, other):
        return (
            isinstance(other, FiniteHypothesisClass)
            and self.domain == other.domain
            and self.hypotheses == other.hypotheses
            and self.grid_log2_denominator == other.grid_log2_denominator
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        label = self.name or "class"
        return f"<{label}: {self.n_hypotheses} hypotheses on {self.n_points} points>"

    # -- derived classes -------------------------------------------------

    def with_grid(self, grid_log2_denominator: int) -> "FiniteHypothesisClass":
        """Re-declare the grid resolution (values unchanged, must still fit)."""
        return FiniteHypothesisClass(self.domain, self.hypotheses, grid_log2_denominator, self.name)

    def with_name(self, name: str) -> "FiniteHypothesisClass":
        return FiniteHypothesisClass(self.domain, self.hypotheses, self.grid_log2_denominator, name)

    @classmethod
    def deduped(
        cls,
        domain: Sequence[str],
        hypotheses: Iterable[Sequence[Rational]],
        grid_log2_denominator: int,
        name: Optional[str] = None,
    ) -> "FiniteHypothesisClass":
        """Build a class from possibly-duplicated rows, keeping first occurrences."""
        seen = set()
        rows = []
        for row in hypotheses:
            key = tuple(as_fraction(v) for v in row)
            if key not in seen:
                seen.add(key)
                rows.append(key)
        return cls(domain, rows, grid_log2_denominator, name)

    # -- serialization ---------------------------------------------------

    def to_json(self) -> str:
        payload = {
            "name": self.name,
            "domain": list(self.domain),
            "grid_log2_denominator": self.grid_log2_denominator,
            "hypotheses": [[render_rational(v) for v in row] for row in self.hypotheses],
        }
        return json.dumps(payload, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "FiniteHypothesisClass":
        payload = json.loads(text)
        rows = [
            [DyadicValue.parse(str(v)) for v in row]
            for row in payload["hypotheses"]
        ]
        return cls(
            payload["domain"],
            rows,
            int(payload["grid_log2_denominator"]),
            payload.get("name"),
        )

    def save(self, path) -> None:
        with open(path, "w") as handle:
            handle.write(self.to_json())
            handle.write("\n")

    @classmethod
    def load(cls, path) -> "FiniteHypothesisClass":
        with open(path) as handle:
            return cls.from_json(handle.read())


@dataclass(frozen=True)
class MixedHypothesis:
    """A finite-support distribution over hypothesis indices, exact weights.

    ``class_id`` is an optional tag used to detect cross-class mixups in
    binary operations; it carries no other semantics.
    """

    support: tuple
    class_id: Optional[str] = None

    def __post_init__(self):
        support = tuple(sorted((int(i), as_fraction(w)) for i, w in self.support))
        if not support:
            raise ValueError("mixture support must be nonempty")
        indices = [i for i, _ in support]
        if len(set(indices)) != len(indices):
            raise ValueError("support indices must be distinct")
        if any(w <= 0 for _, w in support):
            raise ValueError("support weights must be positive")
        if sum(w for _, w in support) != 1:
            raise ValueError("support weights must sum to exactly 1")
        object.__setattr__(self, "support", support)

    @classmethod
    def point_mass(cls, index: int, class_id: Optional[str] = None) -> "MixedHypothesis":
        return cls(((index, Fraction(1)),), class_id)

    @classmethod
    def uniform(cls, indices: Sequence[int], class_id: Optional[str] = None) -> "MixedHypothesis":
        n = len(indices)
        return cls(tuple((i, Fraction(1, n)) for i in indices), class_id)

    @classmethod
    def mix(cls, parts: Sequence[tuple], class_id: Optional[str] = None) -> "MixedHypothesis":
        """Exact convex combination of mixtures: parts are (coefficient, mixture)."""
        weights: dict = {}
        total = Fraction(0)
        for coeff, mixture in parts:
            coeff = as_fraction(coeff)
            if coeff < 0:
                raise ValueError("mixture coefficients must be nonnegative")
            total += coeff
            for i, w in mixture.support:
                weights[i] = weights.get(i, Fraction(0)) + coeff * w
        if total != 1:
            raise ValueError("mixture coefficients must sum to exactly 1")
        support = tuple((i, w) for i, w in weights.items() if w > 0)
        return cls(support, class_id)

    def weight(self, index: int) -> Fraction:
        for i, w in self.support:
            if i == index:
                return w
        return Fraction(0)

    def indices(self) -> tuple:
        return tuple(i for i, _ in self.support)

    def expected_value_at(self, cls_: FiniteHypothesisClass, x: str) -> Fraction:
        j = cls_.point_index(x)
        return sum((w * cls_.hypotheses[i][j] for i, w in self.support), Fraction(0))


def tv_distance(a: MixedHypothesis, b: MixedHypothesis) -> Fraction:
    """Sum of absolute weight differences (twice the total variation distance)."""
    if a.class_id is not None and b.class_id is not None and a.class_id != b.class_id:
        raise ValueError(f"mixtures over different classes: {a.class_id!r} vs {b.class_id!r}")
    diff: dict = {}
    for i, w in a.support:
        diff[i] = diff.get(i, Fraction(0)) + w
    for i, w in b.support:
        diff[i] = diff.get(i, Fraction(0)) - w
    return sum((abs(v) for v in diff.values()), Fraction(0))


def expected_abs_loss(m: MixedHypothesis, e: Example, cls_: FiniteHypothesisClass) -> Fraction:
    """Expected absolute prediction error of the mixture on one example."""
    j = cls_.point_index(e.x)
    n = cls_.n_hypotheses
    total = Fraction(0)
    for i, w in m.support:
        if not 0 <= i < n:
            raise IndexError(f"support index {i} outside class of size {n}")
        total += w * abs(cls_.hypotheses[i][j] - e.y)
    return total
