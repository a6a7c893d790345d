"""Report serialization: one JSON document per year plus flat CSV tables."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

from .pipeline import CrossYearSummary, YearReport

MANTEL_COLUMNS = ("year", "sector", "method", "r", "lo", "hi", "n")
PERFORMANCE_COLUMNS = ("year", "sector", "response", "predictor", "coef", "lo", "hi")
TRADER_COLUMNS = ("year", "association", "rho", "lo", "hi", "n")
CUTOFF_COLUMNS = ("year", "method", "cutoff", "r", "lo", "hi", "n")


def _clean(obj):
    """Replace non-finite floats with None so the JSON stays strict."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else ""
    return str(x)


def mantel_rows(report: YearReport) -> list[tuple]:
    rows = []

    def add(sector, r):
        lo, hi = r.ci if r.ci is not None else (None, None)
        rows.append((report.year, sector, r.method, r.r, lo, hi, r.n_nodes))

    for r in report.market:
        add("all", r)
    for sector, results in report.sectors.items():
        for r in results:
            add(sector, r)
    for r in report.delta:
        add("delta", r)
    return rows


def performance_rows(report: YearReport) -> list[tuple]:
    rows = []
    for group, results in report.regressions.items():
        for res in results:
            for name, c in res.coefficients.items():
                rows.append((report.year, group, res.response, name, c.estimate, c.low, c.high))
    return rows


def trader_rows(report: YearReport) -> list[tuple]:
    if not report.trader:
        return []
    return [
        (report.year, r.label, r.rho, r.ci[0] if r.ci else None, r.ci[1] if r.ci else None, r.n)
        for r in report.trader
    ]


def cutoff_rows(report: YearReport) -> list[tuple]:
    rows = []
    for method, results in report.cutoffs.items():
        for cutoff, r in results:
            lo, hi = r.ci if r.ci is not None else (None, None)
            rows.append((report.year, method, cutoff, r.r, lo, hi, r.n_nodes))
    return rows


def write_table(path: Path, columns: Sequence[str], rows: Iterable[tuple]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def write_reports(
    reports: Sequence[YearReport],
    out_dir: str | Path,
    summaries: Sequence[CrossYearSummary] = (),
    run_metadata: dict | None = None,
    include_trader: bool = True,
) -> list[Path]:
    """Write every report file under ``out_dir`` and return their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for rep in reports:
        path = out / f"report_{rep.year}.json"
        path.write_text(dumps(rep.to_dict()), encoding="utf-8")
        written.append(path)
    tables = [
        ("mantel_by_sector.csv", MANTEL_COLUMNS, mantel_rows),
        ("performance_effects.csv", PERFORMANCE_COLUMNS, performance_rows),
    ]
    if include_trader:
        tables.append(("trader_corr.csv", TRADER_COLUMNS, trader_rows))
    if any(rep.cutoffs for rep in reports):
        tables.append(("robustness_cutoffs.csv", CUTOFF_COLUMNS, cutoff_rows))
    for name, columns, fn in tables:
        path = out / name
        write_table(path, columns, (row for rep in reports for row in fn(rep)))
        written.append(path)
    path = out / "summary.json"
    path.write_text(
        dumps({"years": [rep.year for rep in reports], "significant_positive_sector_correlations": [s.to_dict() for s in summaries]}),
        encoding="utf-8",
    )
    written.append(path)
    if run_metadata is not None:
        path = out / "run.json"
        path.write_text(dumps(run_metadata), encoding="utf-8")
        written.append(path)
    return written
