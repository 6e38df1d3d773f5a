import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from shatterlearn.core import (
    DyadicValue,
    Example,
    FiniteHypothesisClass,
    MixedHypothesis,
    clamp_unit,
    expected_abs_loss,
    render_rational,
    tv_distance,
)
from shatterlearn.errors import GridError


class TestDyadicValue:
    def test_canonical_form(self):
        v = DyadicValue(2, 2)  # 2/4 reduces to 1/2
        assert v.numerator == 1 and v.log2_denominator == 1

    def test_rejects_non_dyadic(self):
        with pytest.raises(GridError):
            DyadicValue(Fraction(1, 3))

    def test_parse_forms(self):
        assert DyadicValue.parse("3/2^2") == Fraction(3, 4)
        assert DyadicValue.parse("0.25") == Fraction(1, 4)
        assert DyadicValue.parse("1") == 1
        assert DyadicValue.parse("-1/2^3") == Fraction(-1, 8)
        assert DyadicValue.parse("3/4") == Fraction(3, 4)
        with pytest.raises(GridError):
            DyadicValue.parse("1/3")

    def test_render_roundtrip(self):
        v = DyadicValue(5, 4)
        assert DyadicValue.parse(v.render()) == v

    @given(st.integers(-64, 64), st.integers(0, 8))
    def test_exact_value(self, num, k):
        assert DyadicValue(num, k) == Fraction(num, 2**k)


class TestClamp:
    def test_spec_values(self):
        assert clamp_unit(Fraction(1, 2)) == Fraction(1, 2)
        assert clamp_unit(Fraction(5, 4)) == 1
        assert clamp_unit(Fraction(-1, 8)) == 0

    @given(
        st.fractions(min_value=-2, max_value=3),
        st.fractions(min_value=0, max_value=1),
    )
    def test_never_increases_loss(self, v, y):
        assert abs(clamp_unit(v) - y) <= abs(v - y)


class TestMixtures:
    def test_tv_identity(self):
        a = MixedHypothesis.uniform([0, 1, 2])
        assert tv_distance(a, a) == 0

    def test_tv_disjoint_point_masses(self):
        a = MixedHypothesis.point_mass(0)
        b = MixedHypothesis.point_mass(1)
        assert tv_distance(a, b) == 2

    def test_tv_spec_example(self):
        a = MixedHypothesis(((0, Fraction(1, 2)), (1, Fraction(1, 2))))
        b = MixedHypothesis(((0, Fraction(3, 4)), (1, Fraction(1, 4))))
        assert tv_distance(a, b) == Fraction(1, 2)

    def test_tv_mismatched_class(self):
        a = MixedHypothesis.point_mass(0, class_id="A")
        b = MixedHypothesis.point_mass(0, class_id="B")
        with pytest.raises(ValueError):
            tv_distance(a, b)

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            MixedHypothesis(((0, Fraction(1, 2)),))

    def test_triangle_inequality_random(self):
        rng = random.Random(11)
        for _ in range(200):
            n = rng.randrange(1, 5)

            def rand_mix():
                cuts = sorted(rng.randrange(0, 24) for _ in range(n - 1))
                weights = []
                prev = 0
                for c in cuts + [24]:
                    weights.append(Fraction(c - prev, 24))
                    prev = c
                support = tuple(
                    (i, w) for i, w in enumerate(weights) if w > 0
                )
                return MixedHypothesis(support)

            a, b, c = rand_mix(), rand_mix(), rand_mix()
            assert tv_distance(a, c) <= tv_distance(a, b) + tv_distance(b, c)

    def test_mix_exact(self):
        a = MixedHypothesis.point_mass(0)
        b = MixedHypothesis.point_mass(1)
        m = MixedHypothesis.mix([(Fraction(1, 3), a), (Fraction(2, 3), b)])
        assert m.weight(0) == Fraction(1, 3) and m.weight(1) == Fraction(2, 3)


class TestExpectedAbsLoss:
    @pytest.fixture
    def pair(self):
        cls_ = FiniteHypothesisClass(
            ["p", "q"], [[0, Fraction(3, 4)], [1, Fraction(1, 4)]], 2, "pair"
        )
        return cls_

    def test_point_mass_zero(self, pair):
        m = MixedHypothesis.point_mass(0)
        assert expected_abs_loss(m, Example("p", 0), pair) == 0

    def test_point_mass_difference(self, pair):
        m = MixedHypothesis.point_mass(0)
        assert expected_abs_loss(m, Example("q", Fraction(1, 4)), pair) == Fraction(1, 2)

    def test_even_mixture(self, pair):
        m = MixedHypothesis.uniform([0, 1])
        assert expected_abs_loss(m, Example("p", Fraction(1, 2)), pair) == Fraction(1, 2)

    def test_bad_index(self, pair):
        m = MixedHypothesis.point_mass(5)
        with pytest.raises(IndexError):
            expected_abs_loss(m, Example("p", 0), pair)

    def test_clamped_at_most_raw(self, pair):
        rng = random.Random(3)
        for _ in range(100):
            raw = Fraction(rng.randrange(-8, 24), 16)
            y = Fraction(rng.randrange(0, 17), 16)
            assert abs(clamp_unit(raw) - y) <= abs(raw - y)


class TestSerialization:
    def test_roundtrip_identity(self, corpus):
        for cls_ in corpus:
            again = FiniteHypothesisClass.from_json(cls_.to_json())
            assert again == cls_

    def test_file_roundtrip(self, tmp_path, corpus):
        path = tmp_path / "cls.json"
        corpus[2].save(path)
        assert FiniteHypothesisClass.load(path) == corpus[2]

    def test_render_both_forms(self):
        assert render_rational(Fraction(1, 2)) == "1/2^1"
        assert render_rational(Fraction(1, 3)) == "1/3"


class TestClassValidation:
    def test_duplicate_rows_rejected(self):
        with pytest.raises(ValueError):
            FiniteHypothesisClass(["a"], [[0], [0]], 0)

    def test_off_grid_rejected(self):
        with pytest.raises(GridError):
            FiniteHypothesisClass(["a"], [[Fraction(1, 8)]], 2)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            FiniteHypothesisClass(["a"], [[Fraction(9, 8)]], 3)

    def test_empty_domain_rejected(self):
        with pytest.raises(ValueError):
            FiniteHypothesisClass([], [[]], 0)
