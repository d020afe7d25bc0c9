"""Normalized accuracy, SEM, the paired t-test and squared Pearson correlation."""

from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from hypothesis.extra import numpy as hnp

from errpdecode.evalharness.metrics import confusion_counts, normalized_accuracy, sem
from errpdecode.evalharness.stats import (
    ZeroVarianceError, betainc_regularized, paired_t_test, pearson_r2, t_two_sided_p,
)

mpmath.mp.dps = 40


def mp_t_test(a, b):
    """t statistic in 40-digit arithmetic and the two-sided p from direct
    quadrature of the Student t density."""
    d = [mpmath.mpf(x) - mpmath.mpf(y) for x, y in zip(a, b)]
    n = len(d)
    mean = sum(d) / n
    sd = mpmath.sqrt(sum((x - mean) ** 2 for x in d) / (n - 1))
    t = mean / (sd / mpmath.sqrt(n))
    nu = mpmath.mpf(n - 1)
    c = mpmath.gamma((nu + 1) / 2) / (mpmath.sqrt(nu * mpmath.pi) * mpmath.gamma(nu / 2))
    density = lambda x: c * (1 + x * x / nu) ** (-(nu + 1) / 2)  # noqa: E731
    p = 2 * mpmath.quad(density, [abs(t), abs(t) + 10, mpmath.inf])
    return float(t), float(p)


def mp_pearson_r2(x, y):
    x = [mpmath.mpf(v) for v in x]
    y = [mpmath.mpf(v) for v in y]
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return float(sxy**2 / (sxx * syy))


class TestNormalizedAccuracy:
    def test_hand_example(self):
        true = np.r_[np.zeros(100), np.ones(20)]
        pred = np.r_[np.zeros(90), np.ones(10), np.ones(10), np.zeros(10)]
        assert normalized_accuracy(true, pred) == pytest.approx(0.7, abs=1e-15)

    @pytest.mark.parametrize("label", [0, 1])
    def test_constant_predictor_exactly_half(self, label):
        true = np.r_[np.zeros(77), np.ones(23)]
        assert normalized_accuracy(true, np.full(100, label)) == 0.5

    def test_perfect(self):
        y = np.array([0, 1, 1, 0])
        assert normalized_accuracy(y, y) == 1.0

    def test_missing_class(self):
        with pytest.raises(ValueError, match="both classes"):
            normalized_accuracy(np.zeros(4), np.zeros(4))

    def test_confusion_counts(self):
        c = confusion_counts([1, 1, 0, 0, 0], [1, 0, 1, 0, 0])
        assert c == {"tp": 1, "fn": 1, "fp": 1, "tn": 2}

    @given(st.integers(1, 60), st.integers(1, 60), st.data())
    def test_constant_predictor_property(self, n_corr, n_err, data):
        true = np.r_[np.zeros(n_corr), np.ones(n_err)]
        label = data.draw(st.sampled_from([0, 1]))
        assert normalized_accuracy(true, np.full(true.size, label)) == 0.5

    @given(st.integers(1, 50), st.data())
    def test_balanced_equals_plain_accuracy(self, n, data):
        true = np.r_[np.zeros(n), np.ones(n)]
        pred = np.array(data.draw(st.lists(st.sampled_from([0, 1]), min_size=2 * n,
                                           max_size=2 * n)))
        assert abs(normalized_accuracy(true, pred) - np.mean(true == pred)) <= 1e-12

    @given(st.lists(st.tuples(st.sampled_from([0, 1]), st.sampled_from([0, 1])),
                    min_size=2, max_size=80))
    def test_relabeling_symmetry(self, pairs):
        true = np.array([p[0] for p in pairs])
        pred = np.array([p[1] for p in pairs])
        assume(0 < true.sum() < true.size)
        assert normalized_accuracy(true, pred) == pytest.approx(
            normalized_accuracy(1 - true, 1 - pred), abs=1e-15)


class TestSem:
    def test_constant(self):
        assert sem([1, 1, 1, 1]) == 0.0

    def test_two_points(self):
        assert sem([0, 2]) == pytest.approx(1.0)

    def test_needs_two_values(self):
        with pytest.raises(ValueError):
            sem([1.0])

    def test_standard_normal_draws(self):
        values = [sem(np.random.default_rng(s).standard_normal(100)) for s in range(20)]
        assert abs(np.mean(values) - 0.1) < 0.03


class TestIncompleteBeta:
    @pytest.mark.parametrize("a,b,x", [(0.5, 0.5, 0.3), (2.0, 3.0, 0.7), (10.0, 0.5, 0.95),
                                       (15.0, 0.5, 0.2), (1.0, 1.0, 0.42)])
    def test_against_mpmath(self, a, b, x):
        ref = float(mpmath.betainc(a, b, 0, x, regularized=True))
        assert betainc_regularized(a, b, x) == pytest.approx(ref, rel=1e-12, abs=1e-15)

    def test_endpoints(self):
        assert betainc_regularized(2.0, 3.0, 0.0) == 0.0
        assert betainc_regularized(2.0, 3.0, 1.0) == 1.0


FIXED_VECTORS = [
    ([1, 2, 3, 4, 5], [0.8, 1.9, 2.7, 4.2, 4.6]),
    ([0.71, 0.80, 0.66, 0.92, 0.75, 0.81], [0.65, 0.79, 0.60, 0.85, 0.70, 0.82]),
    ([3.0, 1.0], [1.0, 0.5]),
    (list(np.linspace(0, 1, 31) + 0.07 * np.sin(np.arange(31))), list(np.linspace(0, 1, 31))),
]


class TestPairedTTest:
    @pytest.mark.parametrize("a,b", FIXED_VECTORS)
    def test_matches_high_precision_oracle(self, a, b):
        t, p = paired_t_test(a, b)
        t_ref, p_ref = mp_t_test(a, b)
        assert abs(t - t_ref) <= 1e-9 * max(1.0, abs(t_ref))
        assert abs(p - p_ref) <= 1e-9

    def test_symmetric_differences(self):
        t, p = paired_t_test([1, 0, 1, 0], [0, 1, 0, 1])
        assert t == 0.0 and p == 1.0

    def test_zero_variance(self):
        with pytest.raises(ZeroVarianceError, match="zero-variance differences"):
            paired_t_test([1, 2, 3], [1, 2, 3])
        with pytest.raises(ZeroVarianceError):
            paired_t_test([1.5, 2.5, 3.5], [1, 2, 3])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            paired_t_test([1, 2, 3], [1, 2])

    def test_tiny_p_value(self):
        a = 0.80 + 0.01 * np.sin(np.arange(31))
        t, p = paired_t_test(a, a - 0.07 + 0.003 * np.cos(np.arange(31)))
        assert 0 < p < 1e-20
        ref = float(mpmath.betainc(15, 0.5, 0, 30 / (30 + mpmath.mpf(t) ** 2), regularized=True))
        assert p == pytest.approx(ref, rel=1e-9)

    @given(hnp.arrays(np.float64, st.integers(2, 30), elements=st.floats(-10, 10)),
           hnp.arrays(np.float64, 30, elements=st.floats(-10, 10)))
    def test_antisymmetry(self, a, b):
        b = b[: a.size]
        d = a - b
        assume(d.std(ddof=1) > 1e-6 * max(1.0, np.abs(d).max()))
        t1, p1 = paired_t_test(a, b)
        t2, p2 = paired_t_test(b, a)
        assert t1 == -t2
        assert p1 == p2
        assert 0.0 <= p1 <= 1.0

    @given(st.floats(-50, 50), st.integers(1, 60))
    def test_p_value_matches_mpmath(self, t, df):
        ref = float(mpmath.betainc(df / 2, 0.5, 0, df / (df + mpmath.mpf(t) ** 2),
                                   regularized=True)) if t else 1.0
        assert t_two_sided_p(t, df) == pytest.approx(ref, rel=1e-9, abs=1e-300)


class TestPearson:
    def test_linear(self):
        x = np.arange(10.0)
        assert pearson_r2(x, 2 * x + 1) == pytest.approx(1.0, abs=1e-15)

    def test_constant_input(self):
        with pytest.raises(ZeroVarianceError):
            pearson_r2([1, 2, 3], [5, 5, 5])

    @pytest.mark.parametrize("x,y", [
        ([0.62, 0.71, 0.55, 0.80, 0.68], [0.70, 0.77, 0.59, 0.86, 0.71]),
        ([1, 2, 3, 4, 5], [2, 1, 4, 3, 5]),
        ([1e6 + 1, 1e6 + 2, 1e6 + 4, 1e6 + 3, 1e6 + 7], [3.0, 1.0, 4.0, 1.0, 5.0]),
    ])
    def test_fixed_vectors(self, x, y):
        assert pearson_r2(x, y) == pytest.approx(mp_pearson_r2(x, y), abs=1e-12)

    @given(hnp.arrays(np.float64, 12, elements=st.floats(-100, 100)),
           hnp.arrays(np.float64, 12, elements=st.floats(-100, 100)))
    def test_symmetric_and_bounded(self, x, y):
        assume(np.ptp(x) > 1e-6 and np.ptp(y) > 1e-6)
        r2 = pearson_r2(x, y)
        assert 0.0 <= r2 <= 1.0
        assert r2 == pytest.approx(pearson_r2(y, x), abs=1e-12)
        assert r2 == pytest.approx(mp_pearson_r2(x, y), abs=1e-9)
