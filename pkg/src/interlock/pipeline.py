"""Per-year analyses: proximity vs. similarity, changes between years,
centrality vs. trader attention, centrality vs. stock performance, and the
two robustness checks.
"""

from __future__ import annotations

import logging
import math
import warnings
import zlib
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .controls import ControlSet, build_controls
from .dyadstats import (
    METHODS,
    CorrelationResult,
    DegenerateWarning,
    MantelResult,
    RegressionResult,
    UndefinedStatisticError,
    _control_basis,
    _names,
    average_ranks,
    binomial_tail,
    binomial_two_sided,
    dyad_values,
    mantel_test,
    partial_mantel_detail,
    rank_corr_test,
    regress_performance,
)
from .graph import (
    DyadMatrix,
    NetworkSummary,
    YearNetwork,
    all_pairs_distances,
    build_network,
    centrality,
    network_summary,
    proximity_matrix,
    truncate_distances,
)
from .ingest import SECTORS, YearDataset
from .market import PerformanceRecord, ReturnPanel, log_returns, performance_records, similarity_matrix, standardize

log = logging.getLogger(__name__)

PREDICTORS = ("centrality", "mean_log_price", "board_size", "expert_fraction")
RESPONSES = ("beta", "yearly_return")


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    replicates: int = 1000
    seed: int = 0
    methods: tuple[str, ...] = METHODS
    min_sector: int = 10
    max_missing: float = 0.05
    cutoffs: tuple[int, ...] = ()
    null_replicates: int = 200
    jobs: int = 1
    sector_benchmark: bool = False

    def __post_init__(self):
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")
        if any(c < 1 for c in self.cutoffs):
            raise ValueError("cutoffs must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        d["cutoffs"] = list(self.cutoffs)
        # results never depend on jobs; leaving it out keeps reports byte-identical across it
        d.pop("jobs")
        return d


def derive_seed(master: int, *keys) -> int:
    """Stable sub-seed for one analysis, independent of execution order."""
    tag = zlib.crc32("/".join(str(k) for k in keys).encode())
    return int(np.random.SeedSequence([master, tag]).generate_state(1)[0])


@dataclass(eq=False)
class PreparedYear:
    """All matrices and per-corporation quantities for one year's retained node set."""

    year: int
    dataset: YearDataset
    labels: tuple[str, ...]
    network: YearNetwork
    distances: DyadMatrix
    proximity: DyadMatrix
    similarity: DyadMatrix
    panel: ReturnPanel
    performance: dict[str, PerformanceRecord]
    centrality: dict[str, float]
    exclusions: dict[str, str]

    def sector(self, corp: str) -> str:
        return self.dataset.meta[corp].sector

    def members(self, sector: str) -> list[str]:
        return [c for c in self.labels if self.sector(c) == sector]

    def attribute(self, name: str, labels: Sequence[str] | None = None) -> np.ndarray:
        labels = self.labels if labels is None else labels
        if name == "centrality":
            return np.array([self.centrality[c] for c in labels])
        if name == "board_size":
            return np.array([self.dataset.boards[c].size for c in labels], dtype=float)
        if name == "expert_fraction":
            return np.array([self.dataset.boards[c].expert_fraction for c in labels])
        if name in ("beta", "yearly_return", "mean_log_price"):
            return np.array([getattr(self.performance[c], name) for c in labels])
        raise KeyError(name)

    def controls(self, labels: Sequence[str] | None = None) -> ControlSet:
        """Control matrices on ``labels``, with normalization bounds taken over that set."""
        labels = list(self.labels if labels is None else labels)
        meta = self.dataset.meta
        coords = [(meta[c].latitude, meta[c].longitude) if meta[c].has_coordinates else None for c in labels]
        return build_controls(
            labels,
            [meta[c].sector for c in labels],
            self.attribute("mean_log_price", labels),
            self.attribute("board_size", labels),
            self.attribute("expert_fraction", labels),
            coords,
        )


def prepare_year(dataset: YearDataset, config: PipelineConfig | None = None) -> PreparedYear:
    config = config or PipelineConfig()
    candidates = dataset.corporations
    if len(candidates) < 3:
        raise InsufficientDataError(f"{dataset.year}: only {len(candidates)} analyzable corporations")
    z = np.vstack([log_returns(dataset.prices[c]) for c in candidates])
    panel = standardize(z, candidates)
    labels = panel.labels
    exclusions = dict(dataset.exclusions)
    exclusions.update({c: "constant returns" for c in panel.excluded})
    net = build_network(dataset.boards, labels, dataset.year)
    distances = all_pairs_distances(net)
    prox = proximity_matrix(distances)
    sim = similarity_matrix(panel)
    sectors = {c: dataset.meta[c].sector for c in labels} if config.sector_benchmark else None
    perf = performance_records(panel, dataset.prices, sectors)
    cent = dict(zip(labels, centrality(prox)))
    return PreparedYear(dataset.year, dataset, labels, net, distances, prox, sim, panel, perf, cent, exclusions)


# -- individual analyses -------------------------------------------------------------


def proximity_similarity(
    prep: PreparedYear,
    labels: Sequence[str] | None,
    method: str,
    config: PipelineConfig,
    seed: int,
) -> tuple[MantelResult, dict[str, str]]:
    """Partial Mantel of proximity vs. similarity on ``labels`` (all when None)."""
    labels = list(prep.labels if labels is None else labels)
    d = prep.proximity if len(labels) == len(prep.labels) else prep.proximity.restrict(labels)
    s = prep.similarity if len(labels) == len(prep.labels) else prep.similarity.restrict(labels)
    cs = prep.controls(labels)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateWarning)
        result = mantel_test(d, s, cs.usable(), method, config.replicates, seed, config.jobs)
    dropped = cs.dropped()
    dropped.update({name: "collinear with other controls" for name in result.dropped_controls})
    return result, dropped


def delta_analysis(
    current: PreparedYear,
    previous: PreparedYear,
    config: PipelineConfig | None = None,
    method: str = "spearman",
    seed: int | None = None,
) -> MantelResult:
    """Partial Mantel between year-over-year changes in proximity and in similarity.

    Uses corporations present in both years and the current year's controls
    rebuilt on that intersection.
    """
    config = config or PipelineConfig()
    common = sorted(set(current.labels) & set(previous.labels))
    if len(common) < 3:
        raise InsufficientDataError(f"only {len(common)} corporations present in both {previous.year} and {current.year}")
    d = current.proximity.restrict(common).values - previous.proximity.restrict(common).values
    s = current.similarity.restrict(common).values - previous.similarity.restrict(common).values
    delta_d = DyadMatrix(d, common, "delta_proximity")
    delta_s = DyadMatrix(s, common, "delta_similarity")
    seed = derive_seed(config.seed, current.year, method, "delta") if seed is None else seed
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateWarning)
        return mantel_test(delta_d, delta_s, current.controls(common).usable(), method, config.replicates, seed, config.jobs)


@dataclass(frozen=True)
class NullSummary:
    method: str
    observed: float
    replicates: int
    quantiles: dict[str, float]
    exceed_fraction: float
    seed: int

    @property
    def observed_above_95(self) -> bool:
        return self.observed > self.quantiles["q95"]

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def robustness_random_null(
    proximity: DyadMatrix,
    similarity: DyadMatrix,
    controls: Sequence[DyadMatrix] = (),
    method: str = "spearman",
    replicates: int = 200,
    seed: int = 0,
) -> NullSummary:
    """Compare the observed coefficient with proximity matrices whose dyads
    are redrawn with replacement from the observed proximity values."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateWarning)
        observed, kept, _ = partial_mantel_detail(proximity, similarity, controls, method)
    x = dyad_values(proximity)
    y = dyad_values(similarity)
    zs = [dyad_values(c) for c, name in zip(controls, _names(controls)) if name in kept]
    if method == "spearman":
        y = average_ranks(y)
        zs = [average_ranks(z) for z in zs]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateWarning)
        q, _, _ = _control_basis(zs, kept, x.size)
    ry = y - q @ (q.T @ y)
    ry -= ry.mean()
    ryy = math.sqrt(ry @ ry)
    values, inverse = np.unique(x, return_inverse=True)
    gens = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(replicates)]
    stats = np.full(replicates, np.nan)
    for k, g in enumerate(gens):
        for _ in range(11):
            gi = inverse[g.integers(0, x.size, x.size)]
            if method == "spearman":
                counts = np.bincount(gi, minlength=values.size).astype(float)
                xs = (np.cumsum(counts) - (counts - 1) / 2)[gi]
            else:
                xs = values[gi]
            rx = xs - q @ (q.T @ xs)
            rx -= rx.mean()
            rxx = math.sqrt(rx @ rx)
            if rxx > 0:
                stats[k] = (rx @ ry) / (rxx * ryy)
                break
    stats = stats[~np.isnan(stats)]
    qs = np.percentile(stats, [2.5, 50, 95, 97.5]) if stats.size else [math.nan] * 4
    return NullSummary(
        method=method,
        observed=observed,
        replicates=int(stats.size),
        quantiles=dict(zip(("q025", "q50", "q95", "q975"), (float(v) for v in qs))),
        exceed_fraction=float(np.mean(stats >= observed)) if stats.size else math.nan,
        seed=seed,
    )


def robustness_distance_cutoff(
    distances: DyadMatrix,
    similarity: DyadMatrix,
    controls: Sequence[DyadMatrix],
    cutoffs: Sequence[int],
    method: str = "spearman",
    replicates: int = 1000,
    seed: int = 0,
    jobs: int = 1,
) -> list[tuple[int, MantelResult]]:
    """Partial Mantel after disconnecting every pair beyond each cutoff."""
    out = []
    for c in cutoffs:
        prox = proximity_matrix(truncate_distances(distances, c))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateWarning)
            out.append((c, mantel_test(prox, similarity, controls, method, replicates, seed, jobs)))
    return out


TRADER_ASSOCIATIONS = ("mentions~centrality", "mentions~volume", "centrality~volume|mentions")


def trader_analysis(prep: PreparedYear, config: PipelineConfig | None = None) -> list[CorrelationResult]:
    """Partial rank correlations among centrality, ticker mentions and traded volume.

    All three control for mean log price, board size and expert fraction;
    the centrality-volume association also controls for mentions.
    """
    config = config or PipelineConfig()
    activity = prep.dataset.traders or {}
    corps = [c for c in prep.labels if c in activity]
    if len(corps) < 10:
        raise InsufficientDataError(f"only {len(corps)} corporations have trader activity")
    mentions = np.array([activity[c].mentions for c in corps], dtype=float)
    volume = np.array([activity[c].volume for c in corps])
    cent = prep.attribute("centrality", corps)
    base = {name: prep.attribute(name, corps) for name in ("mean_log_price", "board_size", "expert_fraction")}
    pairs = [
        (TRADER_ASSOCIATIONS[0], mentions, cent, base),
        (TRADER_ASSOCIATIONS[1], mentions, volume, base),
        (TRADER_ASSOCIATIONS[2], cent, volume, {"mentions": mentions, **base}),
    ]
    return [
        rank_corr_test(x, y, ctrl, label, config.replicates, derive_seed(config.seed, prep.year, "trader", label))
        for label, x, y, ctrl in pairs
    ]


def performance_regressions(
    prep: PreparedYear, labels: Sequence[str] | None, config: PipelineConfig, group: str
) -> list[RegressionResult]:
    labels = list(prep.labels if labels is None else labels)
    predictors = {name: prep.attribute(name, labels) for name in PREDICTORS}
    out = []
    for response in RESPONSES:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateWarning)
            out.append(
                regress_performance(
                    prep.attribute(response, labels),
                    predictors,
                    response,
                    config.replicates,
                    derive_seed(config.seed, prep.year, group, response),
                )
            )
    return out


# -- yearly report -----------------------------------------------------------------------


@dataclass
class YearReport:
    year: int
    n_corporations: int
    summary: NetworkSummary
    market: list[MantelResult] = field(default_factory=list)
    sectors: dict[str, list[MantelResult]] = field(default_factory=dict)
    omitted: dict[str, str] = field(default_factory=dict)
    controls_dropped: dict[str, dict[str, str]] = field(default_factory=dict)
    delta: list[MantelResult] = field(default_factory=list)
    delta_error: str | None = None
    regressions: dict[str, list[RegressionResult]] = field(default_factory=dict)
    trader: list[CorrelationResult] | None = None
    trader_error: str | None = None
    null: list[NullSummary] = field(default_factory=list)
    cutoffs: dict[str, list[tuple[int, MantelResult]]] = field(default_factory=dict)
    exclusions: dict[str, str] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "year": self.year,
            "n_corporations": self.n_corporations,
            "network_summary": self.summary.to_dict(),
            "market": [r.to_dict() for r in self.market],
            "sectors": {s: [r.to_dict() for r in rs] for s, rs in self.sectors.items()},
            "omitted": dict(self.omitted),
            "controls_dropped": self.controls_dropped,
            "delta": [r.to_dict() for r in self.delta],
            "delta_error": self.delta_error,
            "regressions": {g: [r.to_dict() for r in rs] for g, rs in self.regressions.items()},
            "trader": [r.to_dict() for r in self.trader] if self.trader is not None else None,
            "trader_error": self.trader_error,
            "robustness": {
                "random_null": [n.to_dict() for n in self.null],
                "distance_cutoff": {
                    m: [{"cutoff": c, **r.to_dict()} for c, r in rs] for m, rs in self.cutoffs.items()
                },
            },
            "exclusions": dict(sorted(self.exclusions.items())),
            "metadata": self.metadata,
        }


def run_year(
    dataset: YearDataset | PreparedYear,
    previous: YearDataset | PreparedYear | None = None,
    config: PipelineConfig | None = None,
) -> YearReport:
    config = config or PipelineConfig()
    prep = dataset if isinstance(dataset, PreparedYear) else prepare_year(dataset, config)
    prev = previous
    if previous is not None and not isinstance(previous, PreparedYear):
        prev = prepare_year(previous, config)
    year = prep.year
    log.info("year %d: %d corporations", year, len(prep.labels))

    yearly = {c: r.yearly_return for c, r in prep.performance.items()}
    report = YearReport(
        year=year,
        n_corporations=len(prep.labels),
        summary=network_summary(prep.network, prep.dataset, prep.distances, yearly),
        exclusions=prep.exclusions,
        metadata={
            "config": config.to_dict(),
            "control_bounds": "recomputed within each analyzed node set",
            "completeness_rule": f"stocks missing more than {config.max_missing:.0%} of trading days excluded; gaps carry the previous close",
            "mean_finite_distance": "averaged over connected pairs only",
        },
    )

    for method in config.methods:
        seed = derive_seed(config.seed, year, method)
        result, dropped = proximity_similarity(prep, None, method, config, seed)
        report.market.append(result)
        report.controls_dropped[f"all/{method}"] = dropped

    for sector in SECTORS:
        members = prep.members(sector)
        if len(members) < config.min_sector:
            report.omitted[sector] = f"{len(members)} corporations, fewer than {config.min_sector}"
            continue
        results = []
        try:
            for method in config.methods:
                result, dropped = proximity_similarity(prep, members, method, config, derive_seed(config.seed, year, method))
                results.append(result)
                report.controls_dropped[f"{sector}/{method}"] = dropped
        except UndefinedStatisticError as exc:
            report.omitted[sector] = str(exc)
            continue
        report.sectors[sector] = results

    if prev is not None:
        try:
            report.delta = [delta_analysis(prep, prev, config, m) for m in config.methods]
        except (UndefinedStatisticError, InsufficientDataError) as exc:
            report.delta_error = str(exc)

    groups: list[tuple[str, list[str] | None]] = [("all", None)]
    groups += [(s, prep.members(s)) for s in SECTORS if s in report.sectors or len(prep.members(s)) >= config.min_sector]
    for group, members in groups:
        try:
            report.regressions[group] = performance_regressions(prep, members, config, group)
        except ValueError as exc:
            report.omitted.setdefault(f"regression/{group}", str(exc))

    if prep.dataset.traders is not None:
        try:
            report.trader = trader_analysis(prep, config)
        except (InsufficientDataError, UndefinedStatisticError) as exc:
            report.trader_error = str(exc)

    usable = prep.controls().usable()
    for method in config.methods:
        if config.null_replicates:
            report.null.append(
                robustness_random_null(
                    prep.proximity, prep.similarity, usable, method, config.null_replicates,
                    derive_seed(config.seed, year, method, "null"),
                )
            )
        if config.cutoffs:
            report.cutoffs[method] = robustness_distance_cutoff(
                prep.distances, prep.similarity, usable, config.cutoffs, method, config.replicates,
                derive_seed(config.seed, year, method, "cutoff"), config.jobs,
            )
    return report


@dataclass(frozen=True)
class CrossYearSummary:
    method: str
    significant_positive: int
    total: int
    one_sided_p: float | None
    two_sided_p: float | None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def cross_year_summary(reports: Sequence[YearReport], method: str) -> CrossYearSummary:
    """Count sector-level correlations whose interval lies above zero."""
    results = [r for rep in reports for rs in rep.sectors.values() for r in rs if r.method == method]
    k = sum(1 for r in results if r.ci is not None and r.ci[0] > 0)
    n = len(results)
    if n == 0:
        return CrossYearSummary(method, 0, 0, None, None)
    return CrossYearSummary(method, k, n, binomial_tail(k, n, 0.5), binomial_two_sided(k, n, 0.5))
