"""Synthetic datasets with a planted network-to-market coupling.

Returns are drawn from a multivariate normal whose covariance is
``a * D + b * F + c * I``: ``D`` the network proximity, ``F`` the
same-sector indicator.  With ``a = 0`` market similarity is unrelated to
the network once sector is accounted for.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from datetime import date
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .graph import DyadMatrix, all_pairs_distances, build_network, centrality, proximity_matrix
from .ingest import (
    SECTORS,
    BoardRecord,
    Bundle,
    CorporationMeta,
    PriceSeries,
    TraderActivity,
)


@dataclass(frozen=True)
class SynthConfig:
    n_corporations: int = 300
    director_pool: int | None = None
    board_size_median: int = 9
    board_size_spread: int = 4
    interlock_probability: float = 0.18
    n_sectors: int = 7
    network_coupling: float = 0.3
    sector_coupling: float = 0.2
    idiosyncratic: float = 1.0
    trading_days: int = 252
    daily_volatility: float = 0.01
    expert_probability: float = 0.25
    year: int = 2007
    n_years: int = 1
    rewire_probability: float = 0.3
    churn: float = 0.0
    mention_noise: float = 1.0
    volume_noise: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_corporations < 1:
            raise ValueError("n_corporations must be positive")
        if self.network_coupling < 0 or self.sector_coupling < 0:
            raise ValueError("coupling strengths must be non-negative")
        if self.idiosyncratic <= 0:
            raise ValueError("idiosyncratic variance must be positive")
        if not 1 <= self.n_sectors <= len(SECTORS):
            raise ValueError(f"n_sectors must lie in 1..{len(SECTORS)}")
        if not 2 <= self.trading_days <= 261:
            raise ValueError("trading_days must lie in 2..261")
        for name in ("interlock_probability", "expert_probability", "rewire_probability", "churn"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    @property
    def pool_size(self) -> int:
        if self.director_pool is not None:
            return self.director_pool
        shared = self.n_corporations * self.board_size_median * self.interlock_probability
        return max(self.board_size_median + self.board_size_spread, int(round(shared / 3)))

    def to_dict(self) -> dict:
        return asdict(self)


def _corp_id(i: int) -> str:
    return f"C{i:05d}"


def _pool_expert_flags(config: SynthConfig) -> np.ndarray:
    # one flag per pooled director, so flags agree across boards
    return np.random.default_rng([config.seed, 1]).random(config.pool_size) < config.expert_probability


def _expert(director: str, pool_flags: np.ndarray, fallback: bool) -> bool:
    return bool(pool_flags[int(director[1:])]) if director.startswith("P") else fallback


def generate_boards(config: SynthConfig, rng: np.random.Generator | None = None):
    """Random boards drawing each seat from a shared director pool with the
    interlock probability, otherwise from a director unique to the board.

    Returns ``(records, meta)`` for ``config.year``.
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    lo = config.board_size_median - config.board_size_spread
    if lo < 1:
        raise ValueError("board_size_median - board_size_spread must be at least 1")
    pool = config.pool_size
    if config.interlock_probability > 0 and pool < lo + 2 * config.board_size_spread:
        raise ValueError(f"director pool of {pool} cannot fill boards of up to {lo + 2 * config.board_size_spread} seats")
    pool_flags = _pool_expert_flags(config)
    records, meta = [], {}
    for i in range(config.n_corporations):
        corp = _corp_id(i)
        size = lo + int(rng.binomial(2 * config.board_size_spread, 0.5))
        shared = rng.random(size) < config.interlock_probability
        pool_ids = rng.choice(pool, size=int(shared.sum()), replace=False)
        directors = [f"P{j:06d}" for j in pool_ids] + [f"U{i:05d}_{s:02d}" for s in range(size - len(pool_ids))]
        experts = rng.random(size) < config.expert_probability
        flags = [_expert(d, pool_flags, bool(e)) for d, e in zip(directors, experts)]
        order = np.argsort(directors)
        records.append(
            BoardRecord(config.year, corp, tuple(directors[k] for k in order), tuple(flags[k] for k in order))
        )
        meta[corp] = CorporationMeta(
            corp,
            f"TK{i:05d}",
            SECTORS[int(rng.integers(config.n_sectors))],
            round(float(rng.uniform(25.0, 49.0)), 4),
            round(float(rng.uniform(-124.0, -67.0)), 4),
        )
    return records, meta


def rewire_boards(
    records: Sequence[BoardRecord], config: SynthConfig, year: int, rng: np.random.Generator
) -> list[BoardRecord]:
    """Next year's boards: each pooled seat is reassigned with the rewire probability."""
    pool = config.pool_size
    pool_flags = _pool_expert_flags(config)
    out = []
    for r in records:
        directors = list(r.directors)
        own = dict(zip(r.directors, r.expert_flags))
        taken = set(directors)
        for k, d in enumerate(directors):
            if d.startswith("P") and rng.random() < config.rewire_probability:
                while True:
                    new = f"P{int(rng.integers(pool)):06d}"
                    if new not in taken:
                        break
                taken.discard(d)
                taken.add(new)
                directors[k] = new
        order = np.argsort(directors)
        out.append(
            BoardRecord(
                year,
                r.corporation,
                tuple(directors[k] for k in order),
                tuple(_expert(directors[k], pool_flags, own.get(directors[k], False)) for k in order),
            )
        )
    return out


def planted_covariance(proximity: np.ndarray, same_sector: np.ndarray, a: float, b: float, c: float) -> np.ndarray:
    """``a D + b F + c I``, shifted along the diagonal until positive definite."""
    sigma = a * np.asarray(proximity, dtype=float) + b * np.asarray(same_sector, dtype=float)
    sigma = (sigma + sigma.T) / 2 + c * np.eye(sigma.shape[0])
    lam_min = np.linalg.eigvalsh(sigma)[0] if sigma.size else 1.0
    if lam_min <= 0:
        sigma = sigma + (abs(lam_min) + 1e-6) * np.eye(sigma.shape[0])
    return sigma


def correlated_normals(sigma: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """``m`` independent columns drawn from N(0, sigma)."""
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise ValueError("planted covariance is not positive definite") from None
    return chol @ rng.standard_normal((sigma.shape[0], m))


def trading_days(year: int, n: int) -> list[date]:
    days = np.arange(f"{year}-01-01", f"{year + 1}-01-01", dtype="datetime64[D]")
    business = days[np.is_busday(days)][:n]
    if len(business) < n:
        raise ValueError(f"{year} has only {len(business)} business days")
    return [d.astype(date) for d in business]


def generate_returns(
    proximity: DyadMatrix,
    sectors: Sequence[str],
    tickers: Sequence[str],
    config: SynthConfig,
    year: int | None = None,
    rng: np.random.Generator | None = None,
) -> list[PriceSeries]:
    """Price paths starting at 100 whose log returns carry the planted covariance."""
    rng = np.random.default_rng(config.seed) if rng is None else rng
    year = config.year if year is None else year
    s = np.asarray(sectors, dtype=object)
    sigma = planted_covariance(
        proximity.values, s[:, None] == s[None, :], config.network_coupling, config.sector_coupling, config.idiosyncratic
    )
    z = config.daily_volatility * correlated_normals(sigma, config.trading_days - 1, rng)
    log_prices = np.log(100.0) + np.concatenate([np.zeros((len(tickers), 1)), np.cumsum(z, axis=1)], axis=1)
    closes = np.exp(log_prices)
    closes[:, 0] = 100.0
    days = tuple(trading_days(year, config.trading_days))
    return [PriceSeries(t, year, days, tuple(float(p) for p in row)) for t, row in zip(tickers, closes)]


def generate_trader_activity(
    centrality_values: Mapping[str, float],
    tickers: Mapping[str, str],
    year: int,
    mention_noise: float = 1.0,
    volume_noise: float = 0.5,
    rng: np.random.Generator | None = None,
) -> list[TraderActivity]:
    """Mentions rise with centrality, traded volume rises with mentions.

    Mentions are the dense rank of a noisy latent centrality score, so with
    zero noise they are an exact monotone function of centrality.  An
    infinite noise level makes the latent score pure noise.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    corps = sorted(centrality_values)
    c = np.array([centrality_values[k] for k in corps], dtype=float)
    sd = c.std()
    signal = (c - c.mean()) / sd if sd > 0 else np.zeros_like(c)
    eps1 = rng.standard_normal(len(c))
    eps2 = rng.standard_normal(len(c))
    latent = eps1 if np.isinf(mention_noise) else signal + mention_noise * eps1
    mentions = rankdata(latent, method="dense").astype(int) - 1
    log_volume = eps2 if np.isinf(volume_noise) else np.log1p(mentions) + volume_noise * eps2
    volume = np.exp(log_volume - log_volume.max())
    return [TraderActivity(tickers[k], year, int(m), float(v)) for k, m, v in zip(corps, mentions, volume)]


@dataclass
class SynthTruth:
    """Generator-side quantities kept for checking recovery."""

    proximity: dict[int, DyadMatrix]
    centrality: dict[int, dict[str, float]]


def generate_bundle(config: SynthConfig) -> tuple[Bundle, SynthTruth]:
    """Boards, prices, metadata and trader activity for ``config.n_years`` years."""
    rng = np.random.default_rng(config.seed)
    records, meta = generate_boards(config, rng)
    all_boards: list[BoardRecord] = []
    prices: list[PriceSeries] = []
    traders: list[TraderActivity] = []
    truth = SynthTruth({}, {})
    current = records
    for k in range(config.n_years):
        year = config.year + k
        if k:
            current = rewire_boards(current, config, year, rng)
        present = current
        if config.churn > 0:
            present = [r for r in current if rng.random() >= config.churn]
        boards = {r.corporation: r for r in present}
        net = build_network(boards, year=year)
        prox = proximity_matrix(all_pairs_distances(net))
        labels = net.nodes
        prices.extend(
            generate_returns(
                prox, [meta[c].sector for c in labels], [meta[c].ticker for c in labels], config, year, rng
            )
        )
        cent = dict(zip(labels, centrality(prox))) if len(labels) >= 2 else {labels[0]: 0.0}
        traders.extend(
            generate_trader_activity(
                cent, {c: meta[c].ticker for c in labels}, year, config.mention_noise, config.volume_noise, rng
            )
        )
        all_boards.extend(boards[c] for c in labels)
        truth.proximity[year] = prox
        truth.centrality[year] = cent
    # same canonical order the parsers produce
    bundle = Bundle(
        sorted(all_boards, key=lambda r: (r.year, r.corporation)),
        sorted(prices, key=lambda s: (s.ticker, s.year)),
        meta,
        sorted(traders, key=lambda t: (t.ticker, t.year)),
    )
    return bundle, truth


def with_overrides(config: SynthConfig, **changes) -> SynthConfig:
    return replace(config, **{k: v for k, v in changes.items() if v is not None})
