"""Command-line entry point: ``interlock {analyze,synth,validate,network-summary}``.

Options resolve in increasing priority: built-in defaults, a ``--config``
file of ``key = value`` lines, ``INTERLOCK_<OPTION>`` environment
variables, and command-line flags.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import platform
import sys
import warnings
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import scipy

from . import __version__
from .graph import network_summary, write_edge_list
from .ingest import (
    DataWarning,
    IngestError,
    load_bundle,
    parse_boards,
    parse_meta,
    parse_prices,
    parse_traders,
    write_bundle,
)
from .market import write_performance_table
from .pipeline import PipelineConfig, cross_year_summary, prepare_year, run_year
from .report import dumps, write_reports
from .synth import SynthConfig, generate_bundle

log = logging.getLogger("interlock")

ENV_PREFIX = "INTERLOCK_"


class ConfigError(ValueError):
    pass


def read_config_file(path: str | Path) -> dict[str, str]:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


def _int_list(text: str) -> tuple[int, ...]:
    if not text:
        return ()
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if "-" in part[1:]:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    return tuple(out)


def _bool(text: str | bool) -> bool:
    if isinstance(text, bool):
        return text
    return str(text).strip().lower() in ("1", "true", "yes", "on")


class Resolver:
    """Look up an option in flags, then environment, then config file."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.file = read_config_file(args.config) if getattr(args, "config", None) else {}

    def get(self, name: str, default: Any, convert: Callable[[Any], Any] = str) -> Any:
        value = getattr(self.args, name, None)
        if value is not None:
            return convert(value)
        env = os.environ.get(ENV_PREFIX + name.upper())
        if env is not None:
            return convert(env)
        if name in self.file:
            return convert(self.file[name])
        return default


@dataclass
class RunConfig:
    boards: Path
    prices: Path
    meta: Path
    traders: Path | None
    out: Path
    years: tuple[int, ...] = ()
    replicates: int = 1000
    seed: int = 0
    max_missing: float = 0.05
    min_sector: int = 10
    method: str = "both"
    cutoffs: tuple[int, ...] = ()
    null_replicates: int = 200
    jobs: int = field(default_factory=lambda: os.cpu_count() or 1)
    sector_benchmark: bool = False
    export: bool = False

    def validate(self) -> None:
        if self.replicates < 100:
            raise ConfigError("replicates must be at least 100")
        if not 0.0 < self.max_missing < 0.5:
            raise ConfigError("max-missing must lie in (0, 0.5)")
        if self.method not in ("pearson", "spearman", "both"):
            raise ConfigError("method must be pearson, spearman or both")
        if self.jobs < 1:
            raise ConfigError("jobs must be positive")
        for p in (self.boards, self.prices, self.meta, self.traders):
            if p is not None and not os.access(p, os.R_OK):
                raise ConfigError(f"cannot read {p}")

    def pipeline(self) -> PipelineConfig:
        methods = ("pearson", "spearman") if self.method == "both" else (self.method,)
        return PipelineConfig(
            replicates=self.replicates,
            seed=self.seed,
            methods=methods,
            min_sector=self.min_sector,
            max_missing=self.max_missing,
            cutoffs=self.cutoffs,
            null_replicates=self.null_replicates,
            jobs=self.jobs,
            sector_benchmark=self.sector_benchmark,
        )

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        for k, v in d.items():
            if isinstance(v, Path):
                d[k] = str(v)
            elif isinstance(v, tuple):
                d[k] = list(v)
        # neither jobs nor the output location changes results; keep them out
        # of the metadata so reruns are byte-identical
        d.pop("jobs")
        d.pop("out")
        return d


def _input_paths(r: Resolver) -> dict[str, Path | None]:
    paths = {}
    for name in ("boards", "prices", "meta", "traders"):
        value = r.get(name, None)
        paths[name] = Path(value) if value else None
    missing = [k for k in ("boards", "prices", "meta") if paths[k] is None]
    if missing:
        raise ConfigError("missing input path(s): " + ", ".join("--" + m for m in missing))
    return paths


def resolve_run_config(args: argparse.Namespace) -> RunConfig:
    r = Resolver(args)
    paths = _input_paths(r)
    out = r.get("out", None)
    cfg = RunConfig(
        boards=paths["boards"],
        prices=paths["prices"],
        meta=paths["meta"],
        traders=paths["traders"],
        out=Path(out) if out else Path("runs") / datetime.now().strftime("%Y%m%d-%H%M%S"),
        years=r.get("years", (), _int_list),
        replicates=r.get("replicates", 1000, int),
        seed=r.get("seed", 0, int),
        max_missing=r.get("max_missing", 0.05, float),
        min_sector=r.get("min_sector", 10, int),
        method=r.get("method", "both"),
        cutoffs=r.get("cutoffs", (), _int_list),
        null_replicates=r.get("null_replicates", 200, int),
        jobs=r.get("jobs", os.cpu_count() or 1, int),
        sector_benchmark=r.get("sector_benchmark", False, _bool),
        export=r.get("export", False, _bool),
    )
    cfg.validate()
    return cfg


def run_metadata(command: str, effective: dict) -> dict:
    return {
        "command": command,
        "versions": {
            "interlock": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "config": effective,
    }


def _export_year(prep, out: Path) -> None:
    year_dir = out / str(prep.year)
    year_dir.mkdir(parents=True, exist_ok=True)
    with open(year_dir / "edges.csv", "w", encoding="utf-8", newline="") as fh:
        write_edge_list(prep.network, fh)
    for name, matrix in (("distance", prep.distances), ("proximity", prep.proximity), ("similarity", prep.similarity)):
        with open(year_dir / f"{name}.csv", "w", encoding="utf-8", newline="") as fh:
            matrix.to_csv(fh)
    for name, matrix in prep.controls().matrices.items():
        with open(year_dir / f"control_{name}.csv", "w", encoding="utf-8", newline="") as fh:
            matrix.to_csv(fh)
    tickers = {c: prep.dataset.meta[c].ticker for c in prep.labels}
    with open(year_dir / "performance.csv", "w", encoding="utf-8", newline="") as fh:
        write_performance_table(prep.performance, tickers, fh)


def cmd_analyze(args: argparse.Namespace) -> int:
    cfg = resolve_run_config(args)
    pipeline_cfg = cfg.pipeline()
    bundle = load_bundle(cfg.boards, cfg.prices, cfg.meta, cfg.traders)
    available = bundle.years()
    years = list(cfg.years) or available
    unknown = sorted(set(years) - set(available))
    if unknown:
        raise ConfigError(f"no board data for year(s) {', '.join(map(str, unknown))}")

    prepared = {}

    def prep(year):
        if year not in prepared:
            prepared[year] = prepare_year(bundle.year(year, cfg.max_missing), pipeline_cfg)
        return prepared[year]

    reports = []
    for year in sorted(years):
        previous = prep(year - 1) if (year - 1) in available else None
        reports.append(run_year(prep(year), previous, pipeline_cfg))
        if cfg.export:
            _export_year(prep(year), cfg.out)
        log.info("finished %d", year)
    summaries = [cross_year_summary(reports, m) for m in pipeline_cfg.methods]
    written = write_reports(
        reports, cfg.out, summaries, run_metadata("analyze", cfg.to_dict()), include_trader=bundle.traders is not None
    )
    for path in written:
        print(path)
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    r = Resolver(args)
    out = r.get("out", None)
    if not out:
        raise ConfigError("--out is required")
    config = SynthConfig(
        n_corporations=r.get("n", 300, int),
        trading_days=r.get("days", 252, int),
        n_years=r.get("years", 1, int),
        year=r.get("start_year", 2007, int),
        network_coupling=r.get("a", 0.3, float),
        sector_coupling=r.get("b", 0.2, float),
        idiosyncratic=r.get("c", 1.0, float),
        interlock_probability=r.get("interlock", 0.18, float),
        rewire_probability=r.get("rewire", 0.3, float),
        churn=r.get("churn", 0.0, float),
        seed=r.get("seed", 0, int),
    )
    bundle, _ = generate_bundle(config)
    paths = write_bundle(bundle, out)
    (Path(out) / "synth.json").write_text(dumps(run_metadata("synth", config.to_dict())), encoding="utf-8")
    for path in paths.values():
        print(path)
    return 0


@dataclass
class Finding:
    level: str
    message: str

    def __str__(self) -> str:
        return f"{self.level}: {self.message}"


def validate_bundle(paths: dict[str, Path | None]) -> list[Finding]:
    """Schema and cross-file consistency findings, without running any analysis."""
    findings: list[Finding] = []
    parsers = {"boards": parse_boards, "prices": parse_prices, "meta": parse_meta, "traders": parse_traders}
    parsed: dict[str, Any] = {}
    for name, parser in parsers.items():
        path = paths.get(name)
        if path is None:
            continue
        errors: list[IngestError] = []
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", DataWarning)
                with open(path, encoding="utf-8", newline="") as fh:
                    parsed[name] = parser(fh, errors=errors)
        except OSError as exc:
            findings.append(Finding("error", f"{path}: {exc.strerror}"))
            continue
        except UnicodeDecodeError:
            findings.append(Finding("error", f"{path}: not valid UTF-8"))
            continue
        findings.extend(Finding("error", str(e)) for e in errors)
        findings.extend(Finding("warning", str(w.message)) for w in caught if issubclass(w.category, DataWarning))

    meta = parsed.get("meta")
    if meta is not None:
        tickers = {m.ticker for m in meta.values()}
        if "prices" in parsed:
            priced = {s.ticker for s in parsed["prices"]}
            for t in sorted(priced - tickers):
                findings.append(Finding("warning", f"{paths['prices']}: ticker {t} has prices but no metadata"))
            for t in sorted(tickers - priced):
                findings.append(Finding("warning", f"{paths['meta']}: ticker {t} has no prices"))
        if "boards" in parsed:
            corps = {r.corporation for r in parsed["boards"]}
            for c in sorted(corps - set(meta)):
                findings.append(Finding("warning", f"{paths['boards']}: corporation {c} has no metadata"))
        if "traders" in parsed:
            for t in sorted({a.ticker for a in parsed["traders"]} - tickers):
                findings.append(Finding("warning", f"{paths['traders']}: ticker {t} has no metadata"))
        if any(not m.has_coordinates for m in meta.values()):
            n = sum(1 for m in meta.values() if not m.has_coordinates)
            findings.append(Finding("warning", f"{paths['meta']}: {n} corporation(s) lack coordinates; geography control unavailable"))
    return findings


def cmd_validate(args: argparse.Namespace) -> int:
    r = Resolver(args)
    paths = {name: (Path(v) if (v := r.get(name, None)) else None) for name in ("boards", "prices", "meta", "traders")}
    findings = validate_bundle(paths)
    for f in findings:
        print(f)
    print(f"{len(findings)} issues")
    return 1 if any(f.level == "error" for f in findings) else 0


def cmd_network_summary(args: argparse.Namespace) -> int:
    r = Resolver(args)
    paths = _input_paths(r)
    max_missing = r.get("max_missing", 0.05, float)
    bundle = load_bundle(paths["boards"], paths["prices"], paths["meta"])
    years = list(r.get("years", (), _int_list)) or bundle.years()
    config = PipelineConfig(max_missing=max_missing)
    out = r.get("out", None)
    fh = open(out, "w", encoding="utf-8", newline="") if out else sys.stdout
    try:
        w = None
        for year in sorted(years):
            prep = prepare_year(bundle.year(year, max_missing), config)
            yearly = {c: p.yearly_return for c, p in prep.performance.items()}
            row = network_summary(prep.network, prep.dataset, prep.distances, yearly).to_dict()
            if w is None:
                w = csv.DictWriter(fh, fieldnames=list(row), lineterminator="\n")
                w.writeheader()
            w.writerow({k: "" if v is None else v for k, v in row.items()})
    finally:
        if out:
            fh.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="interlock", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def inputs(p, traders=True):
        p.add_argument("--boards")
        p.add_argument("--prices")
        p.add_argument("--meta")
        if traders:
            p.add_argument("--traders")
        p.add_argument("--config", help="file of key = value lines")

    p = sub.add_parser("analyze", help="run the yearly analyses and write reports")
    inputs(p)
    p.add_argument("--years", help="comma-separated years or ranges, e.g. 2007-2009")
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--method", choices=("pearson", "spearman", "both"))
    p.add_argument("--min-sector", dest="min_sector", type=int)
    p.add_argument("--cutoffs", help="comma-separated distance cutoffs for the truncation check")
    p.add_argument("--jobs", type=int)
    p.add_argument("--max-missing", dest="max_missing", type=float)
    p.add_argument("--null-replicates", dest="null_replicates", type=int)
    p.add_argument("--sector-benchmark", dest="sector_benchmark", action="store_const", const=True)
    p.add_argument("--export", action="store_const", const=True, help="also write matrices and tables per year")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth", help="write a synthetic input bundle")
    p.add_argument("--out")
    p.add_argument("--n", type=int)
    p.add_argument("--days", type=int)
    p.add_argument("--years", type=int)
    p.add_argument("--start-year", dest="start_year", type=int)
    p.add_argument("--a", type=float, help="network coupling")
    p.add_argument("--b", type=float, help="sector coupling")
    p.add_argument("--c", type=float, help="idiosyncratic variance")
    p.add_argument("--interlock", type=float)
    p.add_argument("--rewire", type=float)
    p.add_argument("--churn", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("validate", help="check input files without analyzing them")
    inputs(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("network-summary", help="print descriptive network statistics per year")
    inputs(p, traders=False)
    p.add_argument("--years")
    p.add_argument("--max-missing", dest="max_missing", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_network_summary)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, IngestError, OSError) as exc:
        print(f"interlock {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"interlock {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
