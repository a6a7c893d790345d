"""Interlocking-directorate network, degrees of separation and proximity."""

from __future__ import annotations

import csv
from collections import Counter, defaultdict
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np
import scipy.sparse as sp

from .ingest import BoardRecord, YearDataset

UNREACHABLE = np.inf


@dataclass(frozen=True)
class YearNetwork:
    """Corporations linked by shared directors.

    ``edges`` holds ``(i, j, weight)`` with ``i < j`` in node-index space;
    ``weight`` is the number of directors the two boards share.
    """

    year: int
    nodes: tuple[str, ...]
    edges: tuple[tuple[int, int, int], ...]
    boards: tuple[frozenset[str], ...]

    @property
    def n(self) -> int:
        return len(self.nodes)

    @cached_property
    def index(self) -> dict[str, int]:
        return {c: i for i, c in enumerate(self.nodes)}

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        n = self.n
        if not self.edges:
            return sp.csr_matrix((n, n), dtype=np.float32)
        i, j, _ = np.array(self.edges, dtype=np.int64).T
        data = np.ones(2 * len(i), dtype=np.float32)
        return sp.csr_matrix((data, (np.r_[i, j], np.r_[j, i])), shape=(n, n))

    @cached_property
    def seat_counts(self) -> Counter:
        return Counter(d for b in self.boards for d in b)

    def degree(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)


@dataclass(eq=False)
class DyadMatrix:
    """Symmetric N x N matrix over a labelled node set.

    Only the strict upper triangle is ever read by a statistic; the
    diagonal holds a display convention (1 for proximities and similarities,
    0 for distances).
    """

    values: np.ndarray
    labels: tuple[str, ...]
    name: str = ""

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"{self.name or 'matrix'}: expected a square matrix, got shape {v.shape}")
        if v.shape[0] != len(self.labels):
            raise ValueError(f"{self.name or 'matrix'}: {v.shape[0]} rows but {len(self.labels)} labels")
        if not np.array_equal(v, v.T):
            raise ValueError(f"{self.name or 'matrix'}: not symmetric")
        v.flags.writeable = False
        self.values = v
        self.labels = tuple(self.labels)

    @property
    def n(self) -> int:
        return len(self.labels)

    def upper(self) -> np.ndarray:
        return self.values[np.triu_indices(self.n, 1)]

    def restrict(self, labels: Sequence[str]) -> "DyadMatrix":
        pos = {c: i for i, c in enumerate(self.labels)}
        idx = np.array([pos[c] for c in labels], dtype=np.intp)
        return DyadMatrix(self.values[np.ix_(idx, idx)], tuple(labels), self.name)

    def to_csv(self, stream: TextIO) -> None:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow([""] + list(self.labels))
        for label, row in zip(self.labels, self.values):
            w.writerow([label] + [repr(float(x)) for x in row])


@dataclass(frozen=True)
class DyadVector:
    """Strict-upper-triangle view: ``values[k]`` belongs to ``(rows[k], cols[k])``."""

    values: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    n: int

    @classmethod
    def from_matrix(cls, m: DyadMatrix | np.ndarray) -> "DyadVector":
        values = m.values if isinstance(m, DyadMatrix) else np.asarray(m, dtype=float)
        n = values.shape[0]
        rows, cols = np.triu_indices(n, 1)
        return cls(values[rows, cols], rows, cols, n)


def build_network(
    source: YearDataset | Mapping[str, BoardRecord],
    corporations: Iterable[str] | None = None,
    year: int | None = None,
) -> YearNetwork:
    """Link every pair of corporations that share at least one director."""
    boards = source.boards if isinstance(source, YearDataset) else source
    if year is None:
        year = source.year if isinstance(source, YearDataset) else next(iter(boards.values())).year
    nodes = tuple(sorted(corporations if corporations is not None else boards))
    members: dict[str, list[int]] = defaultdict(list)
    for i, corp in enumerate(nodes):
        for d in boards[corp].directors:
            members[d].append(i)
    shared: Counter[tuple[int, int]] = Counter()
    for idx in members.values():
        for pair in combinations(idx, 2):
            shared[pair] += 1
    edges = tuple((i, j, w) for (i, j), w in sorted(shared.items()))
    return YearNetwork(year, nodes, edges, tuple(frozenset(boards[c].directors) for c in nodes))


def all_pairs_distances(net: YearNetwork, block: int = 2048) -> DyadMatrix:
    """Hop-count distance between every pair of corporations.

    Breadth-first search from every node, run level-synchronously over a
    block of sources at a time: one sparse product advances all frontiers
    by one hop.  Unreachable pairs hold ``UNREACHABLE`` (``inf``).
    """
    n = net.n
    dist = np.full((n, n), UNREACHABLE)
    adj = net.adjacency
    for start in range(0, n, block):
        sources = np.arange(start, min(start + block, n))
        b = len(sources)
        cols = np.arange(b)
        frontier = np.zeros((n, b), dtype=np.float32)
        frontier[sources, cols] = 1.0
        visited = frontier > 0
        d = np.full((n, b), UNREACHABLE)
        d[sources, cols] = 0.0
        level = 0
        while True:
            reached = (adj @ frontier) > 0
            reached &= ~visited
            if not reached.any():
                break
            level += 1
            d[reached] = level
            visited |= reached
            frontier = reached.astype(np.float32)
        dist[start : start + b, :] = d.T
    return DyadMatrix(dist, net.nodes, "distance")


def proximity_matrix(distances: DyadMatrix) -> DyadMatrix:
    """``1/d`` off the diagonal, 0 for unreachable pairs, 1 on the diagonal."""
    d = distances.values
    with np.errstate(divide="ignore"):
        prox = np.where(np.isinf(d), 0.0, 1.0 / d)
    np.fill_diagonal(prox, 1.0)
    return DyadMatrix(prox, distances.labels, "proximity")


def truncate_distances(distances: DyadMatrix, cutoff: int) -> DyadMatrix:
    """Disconnect every pair farther apart than ``cutoff`` hops."""
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    d = np.where(distances.values > cutoff, UNREACHABLE, distances.values)
    return DyadMatrix(d, distances.labels, distances.name)


def centrality(proximity: DyadMatrix) -> np.ndarray:
    """Mean proximity of each corporation to all others."""
    n = proximity.n
    if n < 2:
        raise ValueError("centrality needs at least two corporations")
    v = proximity.values
    return (v.sum(axis=1) - np.diag(v)) / (n - 1)


def interlocker_count(net: YearNetwork, i: int | str) -> int:
    """Number of ``i``'s directors who also sit on another board."""
    if isinstance(i, str):
        i = net.index[i]
    seats = net.seat_counts
    return sum(1 for d in net.boards[i] if seats[d] > 1)


@dataclass(frozen=True)
class NetworkSummary:
    year: int
    n_corporations: int
    n_links: int
    median_board_size: float
    single_director_link_fraction: float | None
    isolated_fraction: float
    mean_finite_distance: float | None
    cross_sector_link_fraction: float | None
    positive_return_fraction: float | None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def network_summary(
    net: YearNetwork,
    dataset: YearDataset,
    distances: DyadMatrix | None = None,
    yearly_returns: Mapping[str, float] | None = None,
) -> NetworkSummary:
    """Descriptive statistics of one year's network and market.

    ``mean_finite_distance`` averages over connected pairs only.
    """
    if distances is None:
        distances = all_pairs_distances(net)
    n = net.n
    sizes = [dataset.boards[c].size for c in net.nodes]
    weights = [w for _, _, w in net.edges]
    n_links = len(weights)
    isolated = int(np.sum(net.degree() == 0)) if n else 0
    d = distances.upper()
    finite = d[np.isfinite(d)]
    sectors = [dataset.meta[c].sector for c in net.nodes]
    cross = sum(1 for i, j, _ in net.edges if sectors[i] != sectors[j])
    positive = None
    if yearly_returns:
        vals = [yearly_returns[c] for c in net.nodes if c in yearly_returns]
        positive = sum(1 for r in vals if r > 0) / len(vals) if vals else None
    return NetworkSummary(
        year=net.year,
        n_corporations=n,
        n_links=n_links,
        median_board_size=float(np.median(sizes)) if sizes else float("nan"),
        single_director_link_fraction=(sum(1 for w in weights if w == 1) / n_links) if n_links else None,
        isolated_fraction=isolated / n if n else float("nan"),
        mean_finite_distance=float(finite.mean()) if finite.size else None,
        cross_sector_link_fraction=cross / n_links if n_links else None,
        positive_return_fraction=positive,
    )


def write_edge_list(net: YearNetwork, stream: TextIO) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["corp_a", "corp_b", "shared_directors"])
    for i, j, weight in net.edges:
        w.writerow([net.nodes[i], net.nodes[j], weight])
