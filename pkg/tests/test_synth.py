import numpy as np
import pytest
from scipy import stats as sps

from interlock.graph import all_pairs_distances, build_network, network_summary
from interlock.ingest import load_bundle, write_bundle
from interlock.synth import (
    SynthConfig,
    correlated_normals,
    generate_boards,
    generate_bundle,
    generate_trader_activity,
    planted_covariance,
    trading_days,
    with_overrides,
)


def test_boards_shape():
    cfg = SynthConfig(n_corporations=200, seed=3)
    records, meta = generate_boards(cfg, np.random.default_rng(3))
    sizes = [r.size for r in records]
    assert np.median(sizes) == 9
    assert min(sizes) >= 5 and max(sizes) <= 13
    assert set(meta) == {r.corporation for r in records}
    assert len({m.ticker for m in meta.values()}) == 200


def test_network_statistics_are_plausible():
    bundle, _ = generate_bundle(SynthConfig(n_corporations=600, trading_days=30, seed=1))
    ds = bundle.year(2007)
    net = build_network(ds)
    s = network_summary(net, ds, all_pairs_distances(net))
    assert s.single_director_link_fraction > 0.9
    assert 0.1 < s.isolated_fraction < 0.3
    assert 3.5 < s.mean_finite_distance < 6.0


def test_planted_covariance_is_positive_definite():
    d = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 1.0], [0.0, 1.0, 1.0]])
    f = np.eye(3)
    sigma = planted_covariance(d, f, a=5.0, b=0.0, c=0.01)
    assert np.linalg.eigvalsh(sigma)[0] > 0
    np.testing.assert_array_equal(planted_covariance(d, f, 0.0, 0.0, 2.0), 2 * np.eye(3))


def test_correlated_normals_recover_covariance():
    sigma = np.array([[1.0, 0.6], [0.6, 2.0]])
    x = correlated_normals(sigma, 200_000, np.random.default_rng(0))
    np.testing.assert_allclose(np.cov(x), sigma, atol=0.02)


def test_trading_days_are_business_days():
    days = trading_days(2007, 10)
    assert len(days) == 10 and all(d.weekday() < 5 for d in days)
    with pytest.raises(ValueError):
        trading_days(2007, 400)


def test_trader_activity_monotone_without_noise():
    cent = {f"c{i}": v for i, v in enumerate(np.linspace(0, 1, 20))}
    acts = generate_trader_activity(cent, {k: k.upper() for k in cent}, 2007, 0.0, 0.0, np.random.default_rng(1))
    mentions = {a.ticker.lower(): a.mentions for a in acts}
    assert sps.spearmanr([mentions[k] for k in cent], list(cent.values()))[0] == pytest.approx(1.0)
    assert max(a.volume for a in acts) == 1.0


def test_bundle_is_deterministic_and_round_trips(tmp_path):
    cfg = SynthConfig(n_corporations=40, trading_days=25, n_years=2, churn=0.1, seed=9)
    a, truth = generate_bundle(cfg)
    b, _ = generate_bundle(cfg)
    assert a.boards == b.boards and a.prices == b.prices
    assert sorted(truth.proximity) == [2007, 2008]
    paths = write_bundle(a, tmp_path)
    again = load_bundle(paths["boards"], paths["prices"], paths["meta"], paths["traders"])
    assert again.boards == a.boards
    assert again.prices == a.prices
    assert again.meta == a.meta
    assert again.traders == a.traders


def test_rewire_changes_some_boards():
    bundle, truth = generate_bundle(SynthConfig(n_corporations=100, trading_days=10, n_years=2, seed=2))
    y1 = {r.corporation: r.directors for r in bundle.boards if r.year == 2007}
    y2 = {r.corporation: r.directors for r in bundle.boards if r.year == 2008}
    assert y1 != y2
    same = with_overrides(SynthConfig(n_corporations=100, trading_days=10, n_years=2, seed=2), rewire_probability=0.0)
    b2, _ = generate_bundle(same)
    assert {r.corporation: r.directors for r in b2.boards if r.year == 2007} == {
        r.corporation: r.directors for r in b2.boards if r.year == 2008
    }


@pytest.mark.parametrize(
    "changes",
    [
        {"n_corporations": 0},
        {"network_coupling": -1.0},
        {"idiosyncratic": 0.0},
        {"trading_days": 1},
        {"interlock_probability": 1.5},
        {"n_sectors": 9},
    ],
)
def test_config_validation(changes):
    with pytest.raises(ValueError):
        SynthConfig(**changes)
