"""Parsing, validation and serialization of the four input tables.

Board composition, daily closes, corporation metadata and trader activity
arrive as small comma-separated files.  Every parser accepts an open text
stream, skips ``#`` comment lines and blank lines, and raises
:class:`IngestError` naming the offending line.  Passing a list as
``errors`` switches a parser to collecting mode: bad rows are recorded and
skipped instead of aborting the parse (used by ``interlock validate``).
"""

from __future__ import annotations

import csv
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence, TextIO

SECTORS = (
    "basic_materials",
    "consumer_goods",
    "financial",
    "healthcare",
    "industrial",
    "services",
    "technology",
)
OTHER_SECTOR = "other"

BOARDS_HEADER = ("year", "corp_id", "director_id", "is_financial_expert")
PRICES_HEADER = ("ticker", "date", "close")
META_HEADER = ("corp_id", "ticker", "sector", "latitude", "longitude")
TRADERS_HEADER = ("ticker", "year", "mentions", "volume")


class IngestError(ValueError):
    """A row or file that violates its table schema."""

    def __init__(self, message: str, source: str | None = None, line: int | None = None):
        self.message = message
        self.source = source
        self.line = line
        super().__init__(str(self))

    def __str__(self) -> str:
        where = self.source or "<input>"
        if self.line is not None:
            where = f"{where}:{self.line}"
        return f"{where}: {self.message}"


class DataWarning(UserWarning):
    """Recoverable data problem (duplicate rows, unknown sector, ...)."""


@dataclass(frozen=True)
class BoardRecord:
    year: int
    corporation: str
    directors: tuple[str, ...]
    expert_flags: tuple[bool, ...]

    def __post_init__(self):
        if not self.directors:
            raise ValueError(f"board of {self.corporation} ({self.year}) is empty")
        if len(set(self.directors)) != len(self.directors):
            raise ValueError(f"duplicate director in board of {self.corporation} ({self.year})")
        if len(self.expert_flags) != len(self.directors):
            raise ValueError("expert_flags must have one entry per director")

    @property
    def size(self) -> int:
        return len(self.directors)

    @property
    def expert_fraction(self) -> float:
        return sum(self.expert_flags) / len(self.directors)


@dataclass(frozen=True)
class CorporationMeta:
    corporation: str
    ticker: str
    sector: str
    latitude: float | None = None
    longitude: float | None = None

    def __post_init__(self):
        if (self.latitude is None) != (self.longitude is None):
            raise ValueError(f"{self.corporation}: latitude and longitude must be given together")
        if self.latitude is not None and not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"{self.corporation}: latitude {self.latitude} out of range")
        if self.longitude is not None and not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"{self.corporation}: longitude {self.longitude} out of range")

    @property
    def has_coordinates(self) -> bool:
        return self.latitude is not None


@dataclass(frozen=True)
class PriceSeries:
    ticker: str
    year: int
    dates: tuple[date, ...]
    closes: tuple[float, ...]

    def __post_init__(self):
        if len(self.dates) != len(self.closes):
            raise ValueError("dates and closes differ in length")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValueError(f"{self.ticker} {self.year}: dates not strictly increasing")
        if any(not (c > 0.0 and math.isfinite(c)) for c in self.closes):
            raise ValueError(f"{self.ticker} {self.year}: non-positive close")

    def __len__(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class TraderActivity:
    ticker: str
    year: int
    mentions: int
    volume: float

    def __post_init__(self):
        if self.mentions < 0 or self.volume < 0:
            raise ValueError(f"{self.ticker} {self.year}: negative trader activity")


@dataclass(frozen=True)
class YearDataset:
    """Everything known about one year, keyed by corporation ID.

    ``prices`` holds completeness-filtered series already aligned to
    ``calendar``; corporations dropped on the way in are listed in
    ``exclusions`` with a reason.
    """

    year: int
    boards: Mapping[str, BoardRecord]
    meta: Mapping[str, CorporationMeta]
    prices: Mapping[str, PriceSeries]
    calendar: tuple[date, ...]
    traders: Mapping[str, TraderActivity] | None = None
    exclusions: Mapping[str, str] = field(default_factory=dict)

    @property
    def corporations(self) -> list[str]:
        return sorted(self.prices)


@dataclass
class Bundle:
    """Parsed contents of one set of input files, all years together."""

    boards: list[BoardRecord]
    prices: list[PriceSeries]
    meta: dict[str, CorporationMeta]
    traders: list[TraderActivity] | None = None

    def years(self) -> list[int]:
        return sorted({r.year for r in self.boards})

    def year(self, year: int, max_missing: float = 0.05) -> YearDataset:
        return assemble_year(year, self.boards, self.meta, self.prices, self.traders, max_missing)


def _report(err: IngestError, errors: list | None) -> None:
    if errors is None:
        raise err
    errors.append(err)


def _rows(source: TextIO, header: Sequence[str], errors: list | None) -> Iterator[tuple[int, list[str]]]:
    name = getattr(source, "name", None)
    seen_header = False
    for lineno, line in enumerate(source, start=1):
        if line.startswith("#") or not line.strip():
            continue
        fields = [f.strip() for f in next(csv.reader([line]))]
        if not seen_header:
            seen_header = True
            if tuple(fields) != tuple(header):
                _report(IngestError(f"expected header {','.join(header)!r}, got {line.strip()!r}", name, lineno), errors)
                return
            continue
        if len(fields) != len(header):
            _report(IngestError(f"expected {len(header)} fields, got {len(fields)}", name, lineno), errors)
            continue
        yield lineno, fields


def _int(text: str, what: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ValueError(f"bad {what} {text!r}") from None


def _float(text: str, what: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ValueError(f"bad {what} {text!r}") from None
    if not math.isfinite(value):
        raise ValueError(f"non-finite {what} {text!r}")
    return value


def parse_boards(source: TextIO, errors: list | None = None) -> list[BoardRecord]:
    """Group board rows into one record per (year, corporation).

    A director flagged as a financial expert on any board in a year is
    flagged on every board they sit on that year.
    """
    name = getattr(source, "name", None)
    seats: dict[tuple[int, str], list[str]] = defaultdict(list)
    experts: set[tuple[int, str]] = set()
    seen: set[tuple[int, str, str]] = set()
    for lineno, (year_s, corp, director, flag) in _rows(source, BOARDS_HEADER, errors):
        try:
            year = _int(year_s, "year")
            if not corp or not director:
                raise ValueError("empty corp_id or director_id")
            if flag not in ("0", "1"):
                raise ValueError(f"is_financial_expert must be 0 or 1, got {flag!r}")
        except ValueError as exc:
            _report(IngestError(str(exc), name, lineno), errors)
            continue
        key = (year, corp, director)
        if key in seen:
            _report(IngestError(f"duplicate director {director} for {corp} in {year}", name, lineno), errors)
            continue
        seen.add(key)
        seats[(year, corp)].append(director)
        if flag == "1":
            experts.add((year, director))

    records = []
    for (year, corp) in sorted(seats):
        directors = tuple(sorted(seats[(year, corp)]))
        flags = tuple((year, d) in experts for d in directors)
        records.append(BoardRecord(year, corp, directors, flags))
    return records


def parse_prices(source: TextIO, errors: list | None = None) -> list[PriceSeries]:
    """Read daily closes into date-sorted series, one per ticker and year."""
    name = getattr(source, "name", None)
    closes: dict[tuple[str, date], float] = {}
    for lineno, (ticker, date_s, close_s) in _rows(source, PRICES_HEADER, errors):
        try:
            if not ticker:
                raise ValueError("empty ticker")
            try:
                day = date.fromisoformat(date_s)
            except ValueError:
                raise ValueError(f"unparseable date {date_s!r} for {ticker}") from None
            close = _float(close_s, "close")
            if close <= 0.0:
                raise ValueError(f"non-positive close {close_s} for {ticker} on {day.isoformat()}")
        except ValueError as exc:
            _report(IngestError(str(exc), name, lineno), errors)
            continue
        if (ticker, day) in closes:
            warnings.warn(
                f"{name or '<input>'}:{lineno}: duplicate close for {ticker} on {day.isoformat()}, keeping the last",
                DataWarning,
                stacklevel=2,
            )
        closes[(ticker, day)] = close

    grouped: dict[tuple[str, int], list[tuple[date, float]]] = defaultdict(list)
    for (ticker, day), close in closes.items():
        grouped[(ticker, day.year)].append((day, close))
    series = []
    for (ticker, year) in sorted(grouped):
        obs = sorted(grouped[(ticker, year)])
        series.append(PriceSeries(ticker, year, tuple(d for d, _ in obs), tuple(c for _, c in obs)))
    return series


def normalize_sector(text: str) -> str:
    key = text.strip().lower().replace(" ", "_").replace("-", "_")
    aliases = {"health_care": "healthcare", "industrial_goods": "industrial", "basic_material": "basic_materials"}
    key = aliases.get(key, key)
    return key if key in SECTORS else OTHER_SECTOR


def parse_meta(source: TextIO, errors: list | None = None) -> dict[str, CorporationMeta]:
    name = getattr(source, "name", None)
    meta: dict[str, CorporationMeta] = {}
    tickers: set[str] = set()
    for lineno, (corp, ticker, sector, lat_s, lon_s) in _rows(source, META_HEADER, errors):
        try:
            if not corp or not ticker:
                raise ValueError("empty corp_id or ticker")
            if corp in meta:
                raise ValueError(f"duplicate corp_id {corp}")
            if ticker in tickers:
                raise ValueError(f"duplicate ticker {ticker}")
            lat = _float(lat_s, "latitude") if lat_s else None
            lon = _float(lon_s, "longitude") if lon_s else None
            sector_key = normalize_sector(sector)
            if sector_key == OTHER_SECTOR and sector.strip().lower() != OTHER_SECTOR:
                warnings.warn(f"{name or '<input>'}:{lineno}: sector {sector!r} grouped as 'other'", DataWarning, stacklevel=2)
            record = CorporationMeta(corp, ticker, sector_key, lat, lon)
        except ValueError as exc:
            _report(IngestError(str(exc), name, lineno), errors)
            continue
        meta[corp] = record
        tickers.add(ticker)
    return meta


def parse_traders(source: TextIO, errors: list | None = None) -> list[TraderActivity]:
    name = getattr(source, "name", None)
    out: dict[tuple[str, int], TraderActivity] = {}
    for lineno, (ticker, year_s, mentions_s, volume_s) in _rows(source, TRADERS_HEADER, errors):
        try:
            year = _int(year_s, "year")
            mentions = _int(mentions_s, "mentions")
            volume = _float(volume_s, "volume")
            if (ticker, year) in out:
                raise ValueError(f"duplicate activity row for {ticker} in {year}")
            record = TraderActivity(ticker, year, mentions, volume)
        except ValueError as exc:
            _report(IngestError(str(exc), name, lineno), errors)
            continue
        out[(ticker, year)] = record
    return [out[k] for k in sorted(out)]


def trading_calendar(series: Iterable[PriceSeries], year: int) -> tuple[date, ...]:
    """Union of all observed trading days in ``year``."""
    days: set[date] = set()
    for s in series:
        if s.year == year:
            days.update(s.dates)
    return tuple(sorted(days))


def apply_completeness_filter(
    series: PriceSeries, calendar: Sequence[date], max_missing: float = 0.05
) -> PriceSeries | None:
    """Align ``series`` to ``calendar`` or return None if too sparse.

    Missing days are filled with the previous close (the next close for a
    leading gap), so filled days carry a zero log return.
    """
    if not calendar:
        return None
    observed = dict(zip(series.dates, series.closes))
    n_missing = sum(1 for d in calendar if d not in observed)
    if n_missing > max_missing * len(calendar) or len(observed) == 0:
        return None
    if n_missing == 0 and len(series.dates) == len(calendar):
        return series
    first = next(observed[d] for d in calendar if d in observed)
    filled = []
    last = first
    for d in calendar:
        last = observed.get(d, last)
        filled.append(last)
    return PriceSeries(series.ticker, series.year, tuple(calendar), tuple(filled))


def assemble_year(
    year: int,
    boards: Iterable[BoardRecord],
    meta: Mapping[str, CorporationMeta],
    prices: Sequence[PriceSeries],
    traders: Iterable[TraderActivity] | None = None,
    max_missing: float = 0.05,
) -> YearDataset:
    """Join the tables for one year, dropping corporations that cannot be analyzed."""
    year_boards = {r.corporation: r for r in boards if r.year == year}
    calendar = trading_calendar(prices, year)
    by_ticker = {s.ticker: s for s in prices if s.year == year}
    exclusions: dict[str, str] = {}
    kept_prices: dict[str, PriceSeries] = {}
    for corp in sorted(year_boards):
        info = meta.get(corp)
        if info is None:
            exclusions[corp] = "no metadata"
            continue
        series = by_ticker.get(info.ticker)
        if series is None:
            exclusions[corp] = "no price series"
            continue
        filled = apply_completeness_filter(series, calendar, max_missing)
        if filled is None:
            exclusions[corp] = f"more than {max_missing:.0%} of trading days missing"
            continue
        if len(filled) < 2:
            exclusions[corp] = "fewer than 2 price observations"
            continue
        kept_prices[corp] = filled

    kept = set(kept_prices)
    activity = None
    if traders is not None:
        ticker_to_corp = {meta[c].ticker: c for c in kept}
        activity = {
            ticker_to_corp[t.ticker]: t for t in traders if t.year == year and t.ticker in ticker_to_corp
        }
    return YearDataset(
        year=year,
        boards={c: year_boards[c] for c in sorted(kept)},
        meta={c: meta[c] for c in sorted(kept)},
        prices=kept_prices,
        calendar=calendar,
        traders=activity,
        exclusions=exclusions,
    )


# -- writers -----------------------------------------------------------------


def _writer(stream: TextIO, header: Sequence[str]):
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(header)
    return w


def write_boards(records: Iterable[BoardRecord], stream: TextIO) -> None:
    w = _writer(stream, BOARDS_HEADER)
    for r in records:
        for d, flag in zip(r.directors, r.expert_flags):
            w.writerow([r.year, r.corporation, d, int(flag)])


def write_prices(series: Iterable[PriceSeries], stream: TextIO) -> None:
    w = _writer(stream, PRICES_HEADER)
    for s in series:
        for d, c in zip(s.dates, s.closes):
            w.writerow([s.ticker, d.isoformat(), repr(float(c))])


def write_meta(meta: Iterable[CorporationMeta], stream: TextIO) -> None:
    w = _writer(stream, META_HEADER)
    for m in meta:
        lat = "" if m.latitude is None else repr(float(m.latitude))
        lon = "" if m.longitude is None else repr(float(m.longitude))
        w.writerow([m.corporation, m.ticker, m.sector, lat, lon])


def write_traders(activity: Iterable[TraderActivity], stream: TextIO) -> None:
    w = _writer(stream, TRADERS_HEADER)
    for a in activity:
        w.writerow([a.ticker, a.year, a.mentions, repr(float(a.volume))])


def load_bundle(
    boards: str | Path,
    prices: str | Path,
    meta: str | Path,
    traders: str | Path | None = None,
) -> Bundle:
    with open(boards, encoding="utf-8", newline="") as fh:
        board_records = parse_boards(fh)
    with open(prices, encoding="utf-8", newline="") as fh:
        price_series = parse_prices(fh)
    with open(meta, encoding="utf-8", newline="") as fh:
        meta_records = parse_meta(fh)
    activity = None
    if traders is not None:
        with open(traders, encoding="utf-8", newline="") as fh:
            activity = parse_traders(fh)
    return Bundle(board_records, price_series, meta_records, activity)


def write_bundle(bundle: Bundle, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / f"{name}.csv" for name in ("boards", "prices", "meta")}
    with open(paths["boards"], "w", encoding="utf-8", newline="") as fh:
        write_boards(bundle.boards, fh)
    with open(paths["prices"], "w", encoding="utf-8", newline="") as fh:
        write_prices(bundle.prices, fh)
    with open(paths["meta"], "w", encoding="utf-8", newline="") as fh:
        write_meta(bundle.meta.values(), fh)
    if bundle.traders is not None:
        paths["traders"] = out / "traders.csv"
        with open(paths["traders"], "w", encoding="utf-8", newline="") as fh:
            write_traders(bundle.traders, fh)
    return paths
