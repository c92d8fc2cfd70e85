import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from exobench import analysis
from exobench.analysis import UncertaintyInterval
from exobench.errors import AnalysisError

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_range_stats():
    r = analysis.range_stats([0.1, -0.3, 0.25], "N.m")
    assert (r.min, r.max) == (-0.3, 0.25) and r.range == pytest.approx(0.55)
    with pytest.raises(AnalysisError):
        analysis.range_stats([])
    with pytest.raises(AnalysisError):
        analysis.range_stats([1.0, math.nan])


def test_aggregate_uses_sample_sd():
    a = analysis.aggregate([1.0, 2.0, 3.0, 4.0])
    assert a.mean == 2.5 and a.sd == pytest.approx(math.sqrt(5 / 3)) and a.n == 4
    with pytest.raises(AnalysisError, match="at least 2"):
        analysis.aggregate([1.0])


@pytest.mark.parametrize("alpha, label", [
    (0.0, "fair"), (0.5999, "fair"), (0.60, "moderate"), (0.69, "moderate"), (0.70, "acceptable"),
    (0.80, "good"), (0.84, "good"), (0.90, "excellent"), (0.93, "excellent"), (1.0, "excellent"),
    (-0.4, "fair"),
])
def test_bands(alpha, label):
    assert analysis.band(alpha) == label


def test_band_rejects_nan():
    with pytest.raises(AnalysisError):
        analysis.band(math.nan)


@given(st.lists(finite, min_size=3, max_size=20))
def test_identical_trials_give_one(values):
    assume(np.var(values) > 1e-6)
    assert analysis.reliability_alpha(values, values).alpha == 1.0


@given(st.lists(st.tuples(finite, finite), min_size=3, max_size=20),
       st.floats(0.1, 10), st.floats(-50, 50))
def test_affine_co_transform_invariance(pairs, scale, shift):
    a, b = map(np.array, zip(*pairs))
    assume(np.var(a + b, ddof=1) > 1e-3)
    base = analysis.reliability_alpha(a, b).alpha
    moved = analysis.reliability_alpha(scale * a + shift, scale * b + shift).alpha
    assert abs(moved - base) <= 1e-9 * max(1.0, abs(base))


@given(st.lists(st.tuples(finite, finite), min_size=3, max_size=20))
def test_alpha_never_exceeds_one(pairs):
    a, b = map(np.array, zip(*pairs))
    assume(np.var(a + b, ddof=1) > 1e-6)
    assert analysis.reliability_alpha(a, b).alpha <= 1.0 + 1e-12


def test_alpha_known_value():
    # two items: alpha = 4 cov / (var_a + var_b + 2 cov)
    a, b = np.array([1.0, 2.0, 4.0, 7.0]), np.array([2.0, 2.0, 5.0, 6.0])
    c = np.cov(a, b)
    expected = 4 * c[0, 1] / (c[0, 0] + c[1, 1] + 2 * c[0, 1])
    r = analysis.reliability_alpha(a, b, ("x", "y"))
    assert r.alpha == pytest.approx(expected, abs=1e-14) and r.trial_pair == ("x", "y")


def test_alpha_preconditions():
    with pytest.raises(AnalysisError, match="differ"):
        analysis.reliability_alpha([1, 2, 3], [1, 2])
    with pytest.raises(AnalysisError, match="at least 3"):
        analysis.reliability_alpha([1, 2], [1, 3])
    with pytest.raises(AnalysisError, match="variance"):
        analysis.reliability_alpha([1, 1, 1], [1, 1, 1])


def test_percent_difference():
    assert analysis.percent_difference(0.20, 0.28) == pytest.approx(40.0)
    assert analysis.percent_difference(-2.0, -1.0) == pytest.approx(50.0)
    with pytest.raises(AnalysisError):
        analysis.percent_difference(0.0, 1.0)


@given(finite, st.floats(0, 100), finite, st.floats(0, 100))
def test_overlap_is_symmetric_and_contained(m1, s1, m2, s2):
    a, b = UncertaintyInterval.from_mean_sd(m1, s1), UncertaintyInterval.from_mean_sd(m2, s2)
    o1, o2 = analysis.interval_overlap(a, b), analysis.interval_overlap(b, a)
    assert o1 == o2
    if o1 is not None:
        assert a.lo <= o1.lo <= o1.hi <= a.hi and b.lo <= o1.lo <= o1.hi <= b.hi


def test_disjoint_intervals():
    assert analysis.interval_overlap(UncertaintyInterval(0, 1), UncertaintyInterval(2, 3)) is None
    with pytest.raises(AnalysisError):
        UncertaintyInterval(2, 1)


def test_aggregate_interval():
    assert analysis.AggregateStats(1.0, None, None, "transcribed").as_dict()["sd"] is None
    with pytest.raises(AnalysisError):
        analysis.AggregateStats(1.0, None, None).interval()
    assert analysis.aggregate([1.0, 3.0]).interval() == UncertaintyInterval(2 - math.sqrt(2), 2 + math.sqrt(2))
