"""Daily log returns, market similarity, betas and yearly returns."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence, TextIO

import numpy as np

from .graph import DyadMatrix
from .ingest import DataWarning, PriceSeries


@dataclass(frozen=True, eq=False)
class ReturnPanel:
    """Row-standardized daily log returns for the retained stocks.

    ``raw`` keeps the unstandardized log returns; ``standardized`` rows have
    sample mean 0 and sample standard deviation 1.
    """

    labels: tuple[str, ...]
    raw: np.ndarray
    standardized: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    excluded: tuple[str, ...] = ()

    @property
    def n_days(self) -> int:
        return self.raw.shape[1]

    def rows(self, labels: Sequence[str]) -> np.ndarray:
        pos = {c: i for i, c in enumerate(self.labels)}
        return self.raw[[pos[c] for c in labels]]


@dataclass(frozen=True)
class PerformanceRecord:
    corporation: str
    beta: float
    yearly_return: float
    mean_log_price: float


def log_returns(series: PriceSeries | Sequence[float]) -> np.ndarray:
    closes = np.asarray(series.closes if isinstance(series, PriceSeries) else series, dtype=float)
    if closes.size < 2:
        raise ValueError("log returns need at least two closes")
    return np.diff(np.log(closes))


def standardize(z: np.ndarray, labels: Sequence[str]) -> ReturnPanel:
    """Standardize each row of ``z``; constant rows are dropped with a warning."""
    z = np.asarray(z, dtype=float)
    if z.ndim != 2 or z.shape[1] < 2:
        raise ValueError("need a 2-D panel with at least two return days")
    mean = z.mean(axis=1)
    std = z.std(axis=1, ddof=1)
    keep = std > 0
    excluded = tuple(c for c, k in zip(labels, keep) if not k)
    if excluded:
        warnings.warn(f"dropping {len(excluded)} stock(s) with constant returns: {', '.join(excluded)}", DataWarning, stacklevel=2)
    mean, std, z = mean[keep], std[keep], z[keep]
    standardized = (z - mean[:, None]) / std[:, None]
    return ReturnPanel(
        labels=tuple(c for c, k in zip(labels, keep) if k),
        raw=z,
        standardized=standardized,
        mean=mean,
        std=std,
        excluded=excluded,
    )


def similarity_matrix(panel: ReturnPanel) -> DyadMatrix:
    """Correlation of daily returns, ``R R^T / (M - 1)`` over standardized rows."""
    r = panel.standardized
    m = r.shape[1]
    s = (r @ r.T) / (m - 1)
    s = np.clip((s + s.T) / 2, -1.0, 1.0)
    np.fill_diagonal(s, 1.0)
    return DyadMatrix(s, panel.labels, "similarity")


def benchmark_return(z: np.ndarray) -> np.ndarray:
    """Equal-weight cross-sectional mean of daily log returns."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if z.shape[0] == 0:
        raise ValueError("benchmark needs at least one stock")
    return z.mean(axis=0)


def beta(z_i: np.ndarray, z_b: np.ndarray) -> float:
    z_i = np.asarray(z_i, dtype=float)
    z_b = np.asarray(z_b, dtype=float)
    db = z_b - z_b.mean()
    var = db @ db
    if var <= 0:
        raise ValueError("benchmark return has zero variance")
    return float(((z_i - z_i.mean()) @ db) / var)


def yearly_return(series: PriceSeries | Sequence[float]) -> float:
    closes = series.closes if isinstance(series, PriceSeries) else series
    if len(closes) < 2:
        raise ValueError("yearly return needs at least two closes")
    return float(np.log(closes[-1] / closes[0]))


def mean_log_price(series: PriceSeries | Sequence[float]) -> float:
    closes = series.closes if isinstance(series, PriceSeries) else series
    return float(np.mean(np.log(np.asarray(closes, dtype=float))))


def performance_records(
    panel: ReturnPanel,
    prices: Mapping[str, PriceSeries],
    sectors: Mapping[str, str] | None = None,
) -> dict[str, PerformanceRecord]:
    """Beta, yearly return and mean log price per retained stock.

    With ``sectors`` given, each beta is taken against the mean return of
    the stock's own sector instead of the whole market.
    """
    z = panel.raw
    benchmarks: dict[str | None, np.ndarray] = {None: benchmark_return(z)}
    if sectors is not None:
        for s in sorted({sectors[c] for c in panel.labels}):
            rows = [i for i, c in enumerate(panel.labels) if sectors[c] == s]
            benchmarks[s] = benchmark_return(z[rows])
    out = {}
    for i, corp in enumerate(panel.labels):
        zb = benchmarks[sectors[corp] if sectors is not None else None]
        out[corp] = PerformanceRecord(
            corporation=corp,
            beta=beta(z[i], zb),
            yearly_return=yearly_return(prices[corp]),
            mean_log_price=mean_log_price(prices[corp]),
        )
    return out


def write_performance_table(records: Mapping[str, PerformanceRecord], tickers: Mapping[str, str], stream: TextIO) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["ticker", "beta", "yearly_return", "mean_log_price"])
    for corp in sorted(records):
        r = records[corp]
        w.writerow([tickers.get(corp, corp), repr(r.beta), repr(r.yearly_return), repr(r.mean_log_price)])
