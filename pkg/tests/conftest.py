"""Shared helpers and independent oracles for the test suite."""

from __future__ import annotations

import io
import math
import sys
from itertools import combinations

import numpy as np
import pytest

from interlock.graph import DyadMatrix
from interlock.ingest import BoardRecord


def floyd_warshall(n: int, edges) -> np.ndarray:
    d = np.full((n, n), math.inf)
    np.fill_diagonal(d, 0.0)
    for i, j in edges:
        d[i, j] = d[j, i] = 1.0
    for k in range(n):
        d = np.minimum(d, d[:, k : k + 1] + d[k : k + 1, :])
    return d


def random_boards(rng: np.random.Generator, n: int, pool: int, max_seats: int = 4, year: int = 2007):
    """Boards drawing seats from a small shared pool; returns records keyed by corporation."""
    boards = {}
    for i in range(n):
        size = int(rng.integers(1, max_seats + 1))
        directors = sorted({f"d{int(k)}" for k in rng.integers(0, pool, size)})
        corp = f"c{i:03d}"
        boards[corp] = BoardRecord(year, corp, tuple(directors), tuple(False for _ in directors))
    return boards


def shared_director_edges(boards, nodes):
    out = set()
    for a, b in combinations(range(len(nodes)), 2):
        if set(boards[nodes[a]].directors) & set(boards[nodes[b]].directors):
            out.add((a, b))
    return out


def random_symmetric(rng: np.random.Generator, n: int, name: str = "") -> DyadMatrix:
    a = rng.standard_normal((n, n))
    a = (a + a.T) / 2
    np.fill_diagonal(a, 0.0)
    return DyadMatrix(a, tuple(f"n{i}" for i in range(n)), name)


def upper(a) -> np.ndarray:
    v = a.values if isinstance(a, DyadMatrix) else np.asarray(a)
    return v[np.triu_indices(v.shape[0], 1)]


def direct_pearson(x, y) -> float:
    """Textbook sample correlation written out term by term."""
    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = math.fsum((a - mx) ** 2 for a in x)
    syy = math.fsum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def text(s: str) -> io.StringIO:
    return io.StringIO(s)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
