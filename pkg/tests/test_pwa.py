import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from heavisolve.pwa import (AffineFn, Box, DcPwa, MaxAffine, MinAffine,
                            evaluate, heaviside_closed, heaviside_open,
                            lower_bound_on_box, negate, upper_bound_on_box)

from _oracles import random_dc, random_min_affine


def aff(w, b):
    return AffineFn(np.atleast_1d(np.asarray(w, dtype=float)), b)


ABS = MaxAffine((aff([1.0], 0.0), aff([-1.0], 0.0)))


class TestEvaluate:
    def test_affine_offset_only(self):
        f = aff([1.0, 0.0], 0.5)
        assert evaluate(f, np.array([0.0, 0.0])) == 0.5

    def test_max_affine_absolute_value(self):
        assert evaluate(ABS, np.array([-2.0])) == 2.0

    def test_dc_by_hand(self):
        # plus = |x|, minus = max(0, 2x - 1); at x = 1: 1 - 1 = 0.
        minus = MaxAffine((aff([0.0], 0.0), aff([2.0], -1.0)))
        f = DcPwa(ABS, minus)
        assert evaluate(f, np.array([1.0])) == pytest.approx(0.0, abs=1e-15)

    def test_min_affine(self):
        f = MinAffine((aff([1.0], 0.0), aff([1.0], -2.0)))
        assert evaluate(f, np.array([0.5])) == pytest.approx(-1.5)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            evaluate(aff([1.0, 2.0], 0.0), np.array([1.0]))

    def test_dc_identity_random(self, rng):
        for _ in range(50):
            f = random_dc(rng, 3)
            x = rng.uniform(-2, 2, 3)
            direct = f.plus.value(x) - f.minus.value(x)
            scale = max(1.0, abs(direct))
            assert abs(f.value(x) - direct) <= 1e-12 * scale


class TestHeaviside:
    def test_closed_includes_zero(self):
        assert heaviside_closed(0.0) == 1

    def test_open_excludes_zero(self):
        assert heaviside_open(0.0) == 0

    def test_sign_cases(self):
        assert heaviside_closed(-0.5) == 0
        assert heaviside_open(3.2) == 1

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            heaviside_closed(float("nan"))
        with pytest.raises(ValueError):
            heaviside_open(float("nan"))

    @given(st.floats(allow_nan=False, allow_infinity=False))
    def test_complement_identity(self, t):
        assert heaviside_open(t) + heaviside_closed(-t) == 1


class TestBounds:
    def test_affine_on_interval(self):
        box = Box([-1.0], [3.0])
        assert lower_bound_on_box(aff([1.0], 0.0), box) == -1.0

    def test_min_affine_takes_min_of_piece_bounds(self):
        f = MinAffine((aff([1.0], 0.0), aff([1.0], -2.0)))
        assert lower_bound_on_box(f, Box([-1.0], [3.0])) == -3.0

    def test_max_affine_takes_max_of_piece_bounds(self):
        # |x| on [-1, 3]: piece bounds -1 and -3, so -1; valid since |x| >= 0.
        box = Box([-1.0], [3.0])
        lb = lower_bound_on_box(ABS, box)
        assert lb == -1.0
        for x in np.linspace(-1, 3, 101):
            assert ABS.value(np.array([x])) >= lb

    def test_soundness_random(self, rng):
        for _ in range(200):
            n = int(rng.integers(1, 4))
            lo = rng.uniform(-3, 0, n)
            hi = lo + rng.uniform(0.1, 3, n)
            box = Box(lo, hi)
            kind = rng.integers(0, 4)
            if kind == 0:
                f = aff(rng.uniform(-2, 2, n), float(rng.uniform(-1, 1)))
            elif kind == 1:
                f = random_min_affine(rng, n)
            elif kind == 2:
                f = random_min_affine(rng, n).negated()
            else:
                f = random_dc(rng, n)
            lb = lower_bound_on_box(f, box)
            ub = upper_bound_on_box(f, box)
            for _ in range(50):
                x = rng.uniform(lo, hi)
                v = f.value(x)
                assert v >= lb - 1e-9
                assert v <= ub + 1e-9


class TestNegate:
    def test_termwise(self):
        f = MinAffine((aff([1.0], 0.0), aff([-1.0], 2.0)))
        g = negate(f)
        assert isinstance(g, MaxAffine)
        assert g.pieces[0].weights[0] == -1.0
        assert g.pieces[1].offset == -2.0

    def test_round_trip_structural(self, rng):
        f = random_min_affine(rng, 3)
        assert negate(negate(f)) == f

    def test_value_negation(self, rng):
        for _ in range(10):
            f = random_min_affine(rng, 2)
            for _ in range(100):
                x = rng.uniform(-3, 3, 2)
                assert abs(negate(f).value(x) + f.value(x)) <= 1e-12


class TestValidation:
    def test_empty_pieces_rejected(self):
        with pytest.raises(ValueError):
            MinAffine(())

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            AffineFn(np.array([np.inf]), 0.0)
        with pytest.raises(ValueError):
            AffineFn(np.array([1.0]), math.nan)

    def test_box_order(self):
        with pytest.raises(ValueError):
            Box([1.0], [0.0])
        with pytest.raises(ValueError):
            Box([0.0], [np.inf])

    def test_mixed_piece_dims_rejected(self):
        with pytest.raises(ValueError):
            MaxAffine((aff([1.0], 0.0), aff([1.0, 2.0], 0.0)))
