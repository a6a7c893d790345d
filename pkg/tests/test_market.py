import io
import math
from datetime import date

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import direct_pearson
from interlock.ingest import DataWarning, PriceSeries
from interlock.market import (
    benchmark_return,
    beta,
    log_returns,
    mean_log_price,
    performance_records,
    similarity_matrix,
    standardize,
    write_performance_table,
    yearly_return,
)


def test_similarity_equals_pairwise_pearson(rng):
    z = rng.standard_normal((12, 40))
    s = similarity_matrix(standardize(z, [f"s{i}" for i in range(12)])).values
    for i in range(12):
        for j in range(12):
            expected = 1.0 if i == j else direct_pearson(z[i], z[j])
            assert abs(s[i, j] - expected) < 1e-10
    np.testing.assert_allclose(s, np.corrcoef(z), atol=1e-12)


def test_standardize_drops_constant_rows(rng):
    z = rng.standard_normal((3, 10))
    z[1] = 0.5
    with pytest.warns(DataWarning, match="b"):
        panel = standardize(z, ["a", "b", "c"])
    assert panel.labels == ("a", "c")
    assert panel.excluded == ("b",)
    np.testing.assert_allclose(panel.standardized.std(axis=1, ddof=1), 1.0)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(1e-3, 1e4, allow_nan=False), min_size=2, max_size=60))
def test_yearly_return_telescopes(closes):
    assert abs(yearly_return(closes) - math.fsum(log_returns(closes))) < 1e-10


def test_beta_identities(rng):
    zb = rng.standard_normal(250) * 0.01
    assert abs(beta(zb, zb) - 1.0) < 1e-12
    assert abs(beta(2 * zb, zb) - 2.0) < 1e-12
    assert abs(beta(np.full(250, 0.003), zb)) < 1e-12
    with pytest.raises(ValueError):
        beta(zb, np.zeros(250))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-5, 5), st.floats(-1, 1))
def test_beta_affine(seed, k, c):
    rng = np.random.default_rng(seed)
    zb = rng.standard_normal(50)
    zi = rng.standard_normal(50)
    assert beta(k * zi + c, zb) == pytest.approx(k * beta(zi, zb), abs=1e-9)


def test_benchmark_is_mean(rng):
    z = rng.standard_normal((4, 7))
    np.testing.assert_allclose(benchmark_return(z), z.mean(axis=0))
    # the equal-weight betas average to one
    assert np.mean([beta(row, benchmark_return(z)) for row in z]) == pytest.approx(1.0)


def _series(ticker, closes):
    days = tuple(date.fromordinal(date(2007, 1, 1).toordinal() + i) for i in range(len(closes)))
    return PriceSeries(ticker, 2007, days, tuple(closes))


def test_performance_records(rng):
    closes = {c: 100 * np.exp(np.cumsum(np.r_[0, rng.normal(0, 0.01, 30)])) for c in "abcd"}
    prices = {c: _series(c.upper(), v) for c, v in closes.items()}
    z = np.array([log_returns(prices[c]) for c in "abcd"])
    panel = standardize(z, list("abcd"))
    recs = performance_records(panel, prices)
    assert recs["a"].yearly_return == pytest.approx(math.log(closes["a"][-1] / 100))
    assert recs["a"].mean_log_price == pytest.approx(np.mean(np.log(closes["a"])))
    assert recs["a"].beta == pytest.approx(beta(z[0], z.mean(axis=0)))
    by_sector = performance_records(panel, prices, {"a": "x", "b": "x", "c": "y", "d": "y"})
    assert by_sector["a"].beta == pytest.approx(beta(z[0], z[:2].mean(axis=0)))
    buf = io.StringIO()
    write_performance_table(recs, {c: c.upper() for c in "abcd"}, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "ticker,beta,yearly_return,mean_log_price"
    assert lines[1].startswith("A,")


def test_log_returns_need_two_closes():
    with pytest.raises(ValueError):
        log_returns([1.0])
    with pytest.raises(ValueError):
        standardize(np.zeros((2, 1)), ["a", "b"])
