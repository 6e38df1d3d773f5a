import itertools
from fractions import Fraction

import pytest

from shatterlearn.core import FiniteHypothesisClass
from shatterlearn.dimensions import (
    ShatterTree,
    dual_class,
    fat,
    find_thresholds,
    ldim,
    make_threshold_class,
    seq_cover_number,
    sfat,
    sfat_value,
)
from shatterlearn.errors import CapacityError

from conftest import endpoint_product, full_cube, threshold_steps
from oracles import fat_oracle, ldim_oracle, ldim_tree_oracle, min_cover_oracle, sfat_oracle

SCALES = [Fraction(1, 2), Fraction(1, 4), Fraction(3, 4), Fraction(1)]


class TestSfat:
    def test_singleton_any_scale(self):
        single = FiniteHypothesisClass(["x"], [[Fraction(1, 2)]], 1)
        for alpha in SCALES:
            assert sfat(single, alpha)[0] == 0

    def test_full_cube_at_one(self):
        d, cert = sfat(full_cube(3), 1)
        assert d == 3
        assert cert.verify(full_cube(3), 1)

    def test_endpoint_product_both_scales(self):
        cls_ = endpoint_product(4)
        assert sfat_value(cls_, Fraction(1, 2)) == 4
        assert sfat_value(cls_, Fraction(9, 16)) == 0

    def test_certificates_verify_on_corpus(self, corpus):
        for cls_ in corpus:
            for alpha in (Fraction(1, 2), Fraction(1, 4)):
                d, cert = sfat(cls_, alpha)
                if d > 0:
                    assert cert.depth == d
                    assert cert.verify(cls_, alpha)

    def test_matches_oracle(self, corpus):
        for cls_ in corpus:
            for alpha in (Fraction(1), Fraction(1, 2), Fraction(1, 4)):
                assert sfat_value(cls_, alpha) == sfat_oracle(cls_, alpha), (
                    cls_.name,
                    alpha,
                )

    def test_monotone_in_scale(self, corpus):
        for cls_ in corpus:
            dims = [sfat_value(cls_, a) for a in (Fraction(1, 4), Fraction(1, 2), Fraction(1))]
            assert dims == sorted(dims, reverse=True)

    def test_monotone_in_subclass(self, small_corpus):
        import random

        rng = random.Random(0)
        for cls_ in small_corpus:
            full = cls_.full_mask()
            for _ in range(5):
                mask = rng.randrange(1, full + 1)
                assert sfat_value(cls_, Fraction(1, 2), mask) <= sfat_value(
                    cls_, Fraction(1, 2)
                )

    def test_empty_class_error(self):
        cls_ = full_cube(2)
        with pytest.raises(ValueError):
            sfat(cls_, Fraction(1, 2), mask=0)

    def test_depth_cap(self):
        cls_ = full_cube(3)
        with pytest.raises(CapacityError):
            sfat_value(cls_, Fraction(1), depth_cap=2)


class TestLdim:
    def test_cube(self):
        assert ldim(full_cube(3)) == 3

    def test_singleton(self):
        assert ldim(FiniteHypothesisClass(["x"], [[1]], 0)) == 0

    def test_eight_steps(self):
        # eight distinct one-sided steps: binary-search depth 3
        assert ldim(threshold_steps(8)) == 3
        assert ldim_tree_oracle(threshold_steps(8), 4) == 3

    def test_rejects_real_valued(self):
        with pytest.raises(ValueError):
            ldim(endpoint_product(2))

    def test_equals_sfat_at_all_scales(self, corpus):
        for cls_ in corpus:
            if any(v not in (0, 1) for row in cls_.hypotheses for v in row):
                continue
            d = ldim(cls_)
            for alpha in (Fraction(1), Fraction(1, 2), Fraction(1, 8)):
                assert sfat_value(cls_, alpha) == d

    def test_matches_oracle(self, corpus):
        for cls_ in corpus:
            if any(v not in (0, 1) for row in cls_.hypotheses for v in row):
                continue
            assert ldim(cls_) == ldim_oracle(cls_)


class TestFat:
    def test_singleton(self):
        assert fat(FiniteHypothesisClass(["x"], [[0]], 0), Fraction(1, 2)) == 0

    def test_endpoint_product(self):
        assert fat(endpoint_product(4), Fraction(1, 2)) == 4

    def test_at_most_sfat(self, corpus):
        for cls_ in corpus:
            for alpha in (Fraction(1, 2), Fraction(1, 4)):
                assert fat(cls_, alpha) <= sfat_value(cls_, alpha)

    def test_matches_oracle(self, small_corpus):
        for cls_ in small_corpus:
            for alpha in (Fraction(1, 2), Fraction(1, 4)):
                assert fat(cls_, alpha) == fat_oracle(cls_, alpha), (cls_.name, alpha)


class TestDualClass:
    def test_one_by_one(self):
        cls_ = FiniteHypothesisClass(["x"], [[Fraction(1, 2)]], 1)
        d = dual_class(cls_)
        assert d.n_hypotheses == 1 and d.n_points == 1
        assert d.hypotheses[0][0] == Fraction(1, 2)

    def test_cube_transpose(self):
        cls_ = full_cube(2)
        d = dual_class(cls_)
        assert d.n_points == 4
        assert sorted(d.hypotheses) == sorted(
            tuple(row[j] for row in cls_.hypotheses) for j in range(2)
        )

    def test_involution_up_to_column_collapse(self, corpus):
        for cls_ in corpus:
            dd = dual_class(dual_class(cls_))
            # original rows restricted to first occurrences of distinct columns
            seen = []
            keep = []
            for j in range(cls_.n_points):
                col = tuple(row[j] for row in cls_.hypotheses)
                if col not in seen:
                    seen.append(col)
                    keep.append(j)
            expected = {tuple(row[j] for j in keep) for row in cls_.hypotheses}
            assert set(dd.hypotheses) == expected


class TestSeqCover:
    def test_single_hypothesis(self):
        cls_ = FiniteHypothesisClass(["a", "b"], [[0, 1]], 0)
        tree = ShatterTree.point_tree(1, {(): "a"})
        assert seq_cover_number(cls_, tree, Fraction(1, 4)) == 1

    def test_shattered_tree_lower_bound(self):
        cls_ = full_cube(2)
        d, cert = sfat(cls_, 1)
        tree = ShatterTree.point_tree(d, cert.labels)
        assert seq_cover_number(cls_, tree, Fraction(1, 4)) >= 2**d

    def test_matches_exhaustive_oracle(self):
        import random

        rng = random.Random(5)
        for trial in range(6):
            cls_ = FiniteHypothesisClass(
                ["a", "b", "c"],
                sorted(
                    {
                        tuple(Fraction(rng.randrange(5), 4) for _ in range(3))
                        for _ in range(4)
                    }
                ),
                2,
                name=f"cover{trial}",
            )
            labels = {
                (): rng.choice(cls_.domain),
                (-1,): rng.choice(cls_.domain),
                (1,): rng.choice(cls_.domain),
            }
            tree = ShatterTree.point_tree(2, labels)
            alpha = Fraction(1, 4)
            got = seq_cover_number(cls_, tree, alpha)

            from shatterlearn.dimensions import _path_profiles

            universe = _path_profiles(cls_, tree)

            def compatible(a, b):
                la, pa = a
                lb, pb = b
                for t in range(len(la)):
                    if la[:t] != lb[:t]:
                        break
                    if abs(pa[t] - pb[t]) > 2 * alpha:
                        return False
                return True

            assert got == min_cover_oracle(universe, compatible)


class TestThresholds:
    def test_explicit_staircase(self):
        cls_ = make_threshold_class(4, 0, 1)
        d, family, exact = find_thresholds(cls_, Fraction(1), Fraction(0))
        assert d == 4 and exact
        assert family.verify(cls_)

    def test_singleton_at_most_one(self):
        cls_ = FiniteHypothesisClass(["x"], [[Fraction(1, 2)]], 1)
        d, _, _ = find_thresholds(cls_, Fraction(1, 4), Fraction(0))
        assert d <= 1

    def test_sfat_from_thresholds(self):
        # a d-threshold family forces shattering depth log2(d) at the
        # reduced margin
        cls_ = make_threshold_class(4, 0, 1)
        assert sfat_value(cls_, Fraction(1)) >= 2

    def test_tightness(self):
        cls_ = make_threshold_class(4, Fraction(1, 4), Fraction(3, 4))
        d, family, _ = find_thresholds(
            cls_, Fraction(1, 2), Fraction(0), ordered=True
        )
        assert d == 4
        assert family.u_prime > family.u
