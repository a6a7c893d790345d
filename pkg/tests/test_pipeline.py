import json
import math

import numpy as np
import pytest
from scipy import stats as sps

from conftest import direct_pearson
from interlock.dyadstats import dyad_values, partial_mantel
from interlock.graph import DyadMatrix
from interlock.pipeline import (
    InsufficientDataError,
    PipelineConfig,
    cross_year_summary,
    delta_analysis,
    derive_seed,
    prepare_year,
    robustness_distance_cutoff,
    robustness_random_null,
    run_year,
    trader_analysis,
)
from interlock.report import write_reports
from interlock.synth import SynthConfig, generate_bundle


@pytest.fixture(scope="module")
def bundle():
    b, _ = generate_bundle(SynthConfig(n_corporations=80, trading_days=60, n_years=2, seed=4))
    return b


@pytest.fixture(scope="module")
def config():
    return PipelineConfig(replicates=100, null_replicates=50, cutoffs=(2,), seed=1)


@pytest.fixture(scope="module")
def preps(bundle, config):
    return {y: prepare_year(bundle.year(y), config) for y in bundle.years()}


def test_prepare_year_aligns_labels(preps):
    p = preps[2007]
    assert p.labels == p.proximity.labels == p.similarity.labels == p.network.nodes
    np.testing.assert_allclose(p.attribute("centrality"), (p.proximity.values.sum(1) - 1) / (len(p.labels) - 1))
    assert set(p.controls().matrices) == {"F", "T", "B", "E", "G"}


def test_prepare_year_needs_three(bundle):
    ds = bundle.year(2007)
    small = type(ds)(ds.year, ds.boards, ds.meta, dict(list(ds.prices.items())[:2]), ds.calendar)
    with pytest.raises(InsufficientDataError):
        prepare_year(small)


def test_derive_seed_stable():
    assert derive_seed(0, 2007, "pearson") == derive_seed(0, 2007, "pearson")
    assert derive_seed(0, 2007, "pearson") != derive_seed(0, 2007, "spearman")
    assert derive_seed(0, 2007, "pearson") != derive_seed(1, 2007, "pearson")


def test_run_year_report(preps, config):
    rep = run_year(preps[2008], preps[2007], config)
    d = rep.to_dict()
    json.dumps(d, allow_nan=False)
    assert [r.method for r in rep.market] == ["pearson", "spearman"]
    assert len(rep.delta) == 2 and rep.delta_error is None
    assert {r.label for r in rep.trader} == {"mentions~centrality", "mentions~volume", "centrality~volume|mentions"}
    assert len(rep.null) == 2
    assert set(rep.cutoffs) == {"pearson", "spearman"}
    # sectors under the size floor are listed with a reason
    for sector, reason in rep.omitted.items():
        if not sector.startswith("regression/"):
            assert "fewer than" in reason or "undefined" in reason
    for sector, results in rep.sectors.items():
        assert len(preps[2008].members(sector)) >= config.min_sector
        assert rep.controls_dropped[f"{sector}/pearson"]["F"] == "no variation across dyads"


def test_sector_result_matches_direct_computation(preps, config):
    rep = run_year(preps[2007], None, PipelineConfig(replicates=100, null_replicates=0, methods=("pearson",)))
    p = preps[2007]
    sector, (res,) = next(iter(rep.sectors.items()))
    members = p.members(sector)
    expected = partial_mantel(
        p.proximity.restrict(members), p.similarity.restrict(members), p.controls(members).usable(), "pearson"
    )
    assert res.r == pytest.approx(expected, abs=1e-12)


def test_delta_identical_years_surfaces_error():
    b, _ = generate_bundle(SynthConfig(n_corporations=40, trading_days=30, n_years=2, rewire_probability=0.0, seed=2))
    cfg = PipelineConfig(replicates=100, null_replicates=0)
    p1, p2 = (prepare_year(b.year(y), cfg) for y in (2007, 2008))
    rep = run_year(p2, p1, cfg)
    assert rep.delta == []
    assert "zero" in rep.delta_error and "variance" in rep.delta_error


def test_delta_needs_overlap(preps, config):
    p = preps[2007]
    other = prepare_year(
        generate_bundle(SynthConfig(n_corporations=5, trading_days=20, seed=1, year=2006))[0].year(2006), config
    )
    # synthetic IDs overlap, so restrict to a disjoint set by renaming
    object.__setattr__(other, "labels", tuple("Z" + c for c in other.labels))
    with pytest.raises(InsufficientDataError):
        delta_analysis(p, other, config)


def test_random_null_matches_explicit_redraws(preps):
    p = preps[2007]
    ctrl = [p.controls().matrices["F"]]
    for method in ("pearson", "spearman"):
        res = robustness_random_null(p.proximity, p.similarity, ctrl, method, 30, seed=8)
        x, y, z = (dyad_values(m) for m in (p.proximity, p.similarity, ctrl[0]))
        expected = []
        for s in np.random.SeedSequence(8).spawn(30):
            xs = x[np.random.default_rng(s).integers(0, x.size, x.size)]
            vs = [xs, y, z] if method == "pearson" else [sps.rankdata(v) for v in (xs, y, z)]
            design = np.column_stack([np.ones(x.size), vs[2]])
            rx, ry = (v - design @ np.linalg.lstsq(design, v, rcond=None)[0] for v in vs[:2])
            expected.append(direct_pearson(rx, ry))
        assert res.quantiles["q50"] == pytest.approx(float(np.percentile(expected, 50)), abs=1e-9)
        assert res.quantiles["q975"] == pytest.approx(float(np.percentile(expected, 97.5)), abs=1e-9)
        assert res.observed == pytest.approx(partial_mantel(p.proximity, p.similarity, ctrl, method))


def test_distance_cutoff(preps):
    p = preps[2007]
    out = robustness_distance_cutoff(p.distances, p.similarity, [], [1, 50], "pearson", 100, 3)
    assert [c for c, _ in out] == [1, 50]
    # a cutoff beyond the diameter changes nothing
    assert out[1][1].r == pytest.approx(partial_mantel(p.proximity, p.similarity, [], "pearson"))


def test_trader_analysis_requires_activity(preps, config):
    p = preps[2007]
    results = trader_analysis(p, config)
    assert all(-1 <= r.rho <= 1 for r in results)
    ds = p.dataset
    stripped = type(p)(**{**p.__dict__, "dataset": type(ds)(ds.year, ds.boards, ds.meta, ds.prices, ds.calendar, {})})
    with pytest.raises(InsufficientDataError):
        trader_analysis(stripped, config)


def test_cross_year_summary_counts(preps, config):
    reps = [run_year(preps[y], None, PipelineConfig(replicates=100, null_replicates=0)) for y in (2007, 2008)]
    s = cross_year_summary(reps, "spearman")
    results = [r for rep in reps for rs in rep.sectors.values() for r in rs if r.method == "spearman"]
    assert s.total == len(results)
    assert s.significant_positive == sum(r.ci[0] > 0 for r in results)


def test_write_reports(tmp_path, preps, config):
    rep = run_year(preps[2008], preps[2007], config)
    paths = write_reports([rep], tmp_path, [cross_year_summary([rep], "pearson")], {"seed": 1})
    names = {p.name for p in paths}
    assert names == {
        "report_2008.json",
        "mantel_by_sector.csv",
        "performance_effects.csv",
        "trader_corr.csv",
        "robustness_cutoffs.csv",
        "summary.json",
        "run.json",
    }
    mantel_csv = (tmp_path / "mantel_by_sector.csv").read_text().splitlines()
    assert mantel_csv[0] == "year,sector,method,r,lo,hi,n"
    assert mantel_csv[1].startswith("2008,all,pearson,")
    assert any(line.startswith("2008,delta,") for line in mantel_csv)
    loaded = json.loads((tmp_path / "report_2008.json").read_text())
    assert loaded["year"] == 2008
    assert not math.isnan(loaded["market"][0]["r"])
