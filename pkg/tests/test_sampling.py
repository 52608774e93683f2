import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from pathmc.errors import InvalidParameter
from pathmc.sampling import (
    CumulativeTable,
    RngStream,
    StreamingMoments,
    coin,
    sample_count,
    sample_discrete,
    sample_poisson,
    streaming_mean,
)


def test_rng_stream_replay_is_bit_identical():
    a = RngStream(123, 4)
    b = RngStream(123, 4)
    assert [a.random() for _ in range(100)] == [b.random() for _ in range(100)]


def test_rng_stream_ids_decorrelate():
    a = RngStream(123, 0)
    b = RngStream(123, 1)
    c = RngStream(124, 0)
    xs = [a.random() for _ in range(50)]
    assert xs != [b.random() for _ in range(50)]
    assert xs != [c.random() for _ in range(50)]
    assert RngStream(7).stream_id == 0


def test_sample_count_reference_values():
    assert sample_count(0.05, 0.01, 1.0) == 9587
    assert sample_count(1.0, 4.0 / math.e, 1.0) == 4
    assert sample_count(0.1, 0.05, 0.0) == 1
    # scale invariance: doubling b quadruples the count up to rounding
    k1 = sample_count(0.01, 0.05, 1.0)
    k2 = sample_count(0.01, 0.05, 2.0)
    assert abs(k2 - 4 * k1) <= 4


def test_sample_count_monotonicity():
    assert sample_count(0.01, 0.05, 1.0) > sample_count(0.02, 0.05, 1.0)
    assert sample_count(0.05, 0.001, 1.0) > sample_count(0.05, 0.01, 1.0)
    assert sample_count(0.05, 0.01, 3.0) > sample_count(0.05, 0.01, 1.0)


def test_sample_count_validation():
    with pytest.raises(InvalidParameter):
        sample_count(0.0, 0.05, 1.0)
    with pytest.raises(InvalidParameter):
        sample_count(-0.1, 0.05, 1.0)
    with pytest.raises(InvalidParameter):
        sample_count(0.1, 0.0, 1.0)
    with pytest.raises(InvalidParameter):
        sample_count(0.1, 4.0, 1.0)
    with pytest.raises(InvalidParameter):
        sample_count(0.1, 0.05, math.inf)


def test_sample_discrete_frequencies():
    weights = [0.5, 0.1, 0.0, 0.4]
    rng = RngStream(42)
    n = 200_000
    counts = Counter(sample_discrete(weights, rng) for _ in range(n))
    assert counts[2] == 0
    observed = [counts[i] for i in (0, 1, 3)]
    expected = [w * n for w in (0.5, 0.1, 0.4)]
    assert stats.chisquare(observed, expected).pvalue > 1e-3


def test_cumulative_table_matches_linear_search():
    weights = [0.2, 1.3, 0.0, 0.7, 0.1]
    table = CumulativeTable(weights)
    a = RngStream(9, 1)
    b = RngStream(9, 1)
    for _ in range(5000):
        assert table.draw(a) == sample_discrete(weights, b)


def test_cumulative_table_rejects_no_mass():
    with pytest.raises(InvalidParameter):
        CumulativeTable([0.0, 0.0])
    with pytest.raises(InvalidParameter):
        CumulativeTable([])


def test_coin_probability():
    rng = RngStream(77)
    n = 100_000
    heads = sum(coin(0.3, rng) for _ in range(n))
    assert abs(heads / n - 0.3) < 5 * math.sqrt(0.3 * 0.7 / n)
    assert coin(1.0, rng)
    assert not coin(0.0, rng)


@pytest.mark.parametrize("rate", [0.5, 1.0, 2.0])
def test_sample_poisson_distribution(rate):
    rng = RngStream(1234, int(rate * 10))
    n = 200_000
    counts = Counter(sample_poisson(rate, rng) for _ in range(n))
    top = max(counts)
    empirical = np.array([counts.get(k, 0) / n for k in range(top + 1)])
    reference = stats.poisson.pmf(np.arange(top + 1), rate)
    tv = 0.5 * float(np.abs(empirical - reference).sum())
    assert tv <= 0.005


def test_sample_poisson_degenerate_rate():
    rng = RngStream(5)
    assert all(sample_poisson(0.0, rng) == 0 for _ in range(20))
    with pytest.raises(InvalidParameter):
        sample_poisson(-1.0, rng)


def test_streaming_moments_match_numpy():
    rng = np.random.default_rng(31)
    values = rng.normal(size=400) + 1j * rng.normal(size=400)
    acc = StreamingMoments()
    for v in values:
        acc.add(complex(v))
    assert acc.mean == pytest.approx(values.mean(), rel=1e-12)
    assert acc.std == pytest.approx(values.std(ddof=1), rel=1e-12)
    mean, std = streaming_mean(complex(v) for v in values)
    assert mean == pytest.approx(acc.mean, rel=1e-12)
    assert std == pytest.approx(acc.std, rel=1e-12)


def test_streaming_moments_small_counts():
    acc = StreamingMoments()
    assert acc.std == 0.0
    acc.add(3.0)
    assert acc.mean == 3.0
    assert acc.std == 0.0


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-50, 50), min_size=0, max_size=40),
    st.lists(st.floats(-50, 50), min_size=0, max_size=40),
)
def test_streaming_moments_merge_is_consistent(left, right):
    combined = StreamingMoments()
    for v in left + right:
        combined.add(v)
    a = StreamingMoments()
    for v in left:
        a.add(v)
    b = StreamingMoments()
    for v in right:
        b.add(v)
    a.merge(b)
    assert a.count == combined.count
    assert a.mean == pytest.approx(combined.mean, rel=1e-9, abs=1e-9)
    assert a.std == pytest.approx(combined.std, rel=1e-9, abs=1e-9)
