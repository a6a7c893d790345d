"""Dyadic correlation statistics and their bootstrap confidence intervals.

Mantel correlations compare two symmetric matrices through their strict
upper triangles.  Partial Mantel correlations residualize both sides on a
set of control matrices (plus intercept) by least squares and correlate the
residuals; the Spearman variant rank-transforms every vector first, with
average ranks for ties.

The node bootstrap resamples rows and columns together.  A resampled dyad
whose two positions carry the same original node is discarded, so a
replicate that draws node ``i`` ``c_i`` times contains original dyad
``(i, j)`` exactly ``c_i * c_j`` times.  :class:`DyadBootstrap` uses that
identity to evaluate replicates as weighted statistics on the original
dyads instead of materializing resampled matrices.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .graph import DyadMatrix

METHODS = ("pearson", "spearman")
MAX_REDRAWS = 10
_RESIDUAL_TOL = 1e-12
_PEARSON_BATCH = 256


class UndefinedStatisticError(ValueError):
    """A correlation whose denominator vanishes (zero variance)."""


class RankDeficientError(ValueError):
    pass


class DegenerateWarning(UserWarning):
    """A control or predictor was dropped because it carries no information."""


def _check_method(method: str) -> str:
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    return method


def dyad_values(m: DyadMatrix | np.ndarray) -> np.ndarray:
    v = m.values if isinstance(m, DyadMatrix) else np.asarray(m, dtype=float)
    if v.ndim != 2 or v.shape[0] != v.shape[1]:
        raise ValueError("expected a square matrix")
    return v[np.triu_indices(v.shape[0], 1)]


def average_ranks(x: np.ndarray) -> np.ndarray:
    return rankdata(x, method="average")


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = xc @ xc
    syy = yc @ yc
    if sxx <= 0 or syy <= 0:
        raise UndefinedStatisticError("correlation undefined: zero variance")
    r = (xc @ yc) / math.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def _control_basis(columns: Sequence[np.ndarray], names: Sequence[str], length: int):
    """Orthonormal basis of [1, controls], dropping controls already spanned."""
    basis = [np.full(length, 1.0 / math.sqrt(length))]
    kept, dropped = [], []
    for z, name in zip(columns, names):
        zc = z - z.mean()
        scale = math.sqrt(zc @ zc)
        r = z.astype(float)
        for _ in range(2):
            for q in basis:
                r = r - (q @ r) * q
        norm = math.sqrt(r @ r)
        if scale == 0 or norm <= 1e-10 * scale:
            warnings.warn(f"control {name!r} is collinear with the others and was dropped", DegenerateWarning, stacklevel=3)
            dropped.append(name)
            continue
        basis.append(r / norm)
        kept.append(name)
    return np.column_stack(basis), kept, dropped


def _residual_corr(x: np.ndarray, y: np.ndarray, q: np.ndarray) -> float:
    rx = x - q @ (q.T @ x)
    ry = y - q @ (q.T @ y)
    for v, r in ((x, rx), (y, ry)):
        vc = v - v.mean()
        if r @ r <= (_RESIDUAL_TOL**2) * (vc @ vc) or vc @ vc == 0:
            raise UndefinedStatisticError("partial correlation undefined: zero residual variance")
    return _pearson(rx, ry)


def _names(controls: Sequence[DyadMatrix | np.ndarray]) -> list[str]:
    return [getattr(c, "name", "") or f"control{i}" for i, c in enumerate(controls)]


def mantel(X: DyadMatrix | np.ndarray, Y: DyadMatrix | np.ndarray, method: str = "pearson") -> float:
    """Correlation between the upper triangles of two symmetric matrices."""
    _check_method(method)
    x, y = dyad_values(X), dyad_values(Y)
    if x.shape != y.shape:
        raise ValueError("matrices differ in size")
    if x.size < 3:
        raise ValueError("Mantel correlation needs at least 3 nodes")
    if method == "spearman":
        x, y = average_ranks(x), average_ranks(y)
    return _pearson(x, y)


def partial_mantel_detail(
    X: DyadMatrix | np.ndarray,
    Y: DyadMatrix | np.ndarray,
    controls: Sequence[DyadMatrix | np.ndarray] = (),
    method: str = "pearson",
) -> tuple[float, list[str], list[str]]:
    """Partial Mantel correlation plus the names of kept and dropped controls."""
    _check_method(method)
    if not controls:
        return mantel(X, Y, method), [], []
    x, y = dyad_values(X), dyad_values(Y)
    zs = [dyad_values(c) for c in controls]
    if any(z.shape != x.shape for z in zs) or x.shape != y.shape:
        raise ValueError("matrices differ in size")
    if method == "spearman":
        x, y = average_ranks(x), average_ranks(y)
        zs = [average_ranks(z) for z in zs]
    q, kept, dropped = _control_basis(zs, _names(controls), x.size)
    if x.size - q.shape[1] < 2:
        raise UndefinedStatisticError("too few dyads for the number of controls")
    return _residual_corr(x, y, q), kept, dropped


def partial_mantel(
    X: DyadMatrix | np.ndarray,
    Y: DyadMatrix | np.ndarray,
    controls: Sequence[DyadMatrix | np.ndarray] = (),
    method: str = "pearson",
) -> float:
    return partial_mantel_detail(X, Y, controls, method)[0]


def _partial_from_cov(cov: np.ndarray) -> float:
    """Correlation of the first two variables given the rest, or NaN if undefined.

    Uses the Schur complement of the control block, which equals the
    covariance of least-squares residuals.  A residual variance below
    ``1e-12`` of the raw variance counts as zero.
    """
    c = cov[:2, :2]
    if cov.shape[0] > 2:
        cxz = cov[:2, 2:]
        c = c - cxz @ np.linalg.pinv(cov[2:, 2:], hermitian=True) @ cxz.T
    sxx, syy, sxy = c[0, 0], c[1, 1], c[0, 1]
    if not (sxx > 1e-12 * cov[0, 0] and syy > 1e-12 * cov[1, 1]):
        return math.nan
    return float(min(1.0, max(-1.0, sxy / math.sqrt(sxx * syy))))


class DyadBootstrap:
    """Evaluate node-bootstrap replicates of a (partial) Mantel correlation.

    Parameters
    ----------
    X, Y : DyadMatrix or array_like
        The two matrices being correlated.
    controls : sequence of DyadMatrix
        Control matrices, already screened for collinearity.
    method : {'pearson', 'spearman'}

    A replicate is described by ``counts``, the number of times each node
    was drawn.  ``statistic(counts)`` equals the partial Mantel correlation
    of the explicitly resampled matrices with self-pairs removed, or NaN when
    that is undefined.
    """

    def __init__(self, X, Y, controls=(), method: str = "pearson"):
        self.method = _check_method(method)
        mats = [X, Y, *controls]
        first = mats[0].values if isinstance(mats[0], DyadMatrix) else np.asarray(mats[0], dtype=float)
        self.n = first.shape[0]
        self.rows, self.cols = np.triu_indices(self.n, 1)
        self.vectors = np.vstack([dyad_values(m) for m in mats])
        self.m = self.vectors.shape[0]
        if method == "spearman":
            self._groups = []
            for v in self.vectors:
                _, inverse = np.unique(v, return_inverse=True)
                self._groups.append((inverse, int(inverse.max()) + 1))
        else:
            self._pearson_mats = None

    def weights(self, counts: np.ndarray) -> np.ndarray:
        c = np.asarray(counts, dtype=float)
        return c[self.rows] * c[self.cols]

    def weighted_cov(self, counts: np.ndarray) -> tuple[np.ndarray, float]:
        """Weighted covariance of the (ranked) dyad vectors for one replicate."""
        w = self.weights(counts)
        total = w.sum()
        if total < 3:
            return np.full((self.m, self.m), np.nan), total
        if self.method == "spearman":
            # only dyads between drawn nodes carry weight
            nz = np.flatnonzero(w)
            w = w[nz]
            x = np.empty((self.m, nz.size))
            for k, (inverse, n_groups) in enumerate(self._groups):
                inv = inverse[nz]
                gw = np.bincount(inv, weights=w, minlength=n_groups)
                # average rank of each tie group, centred on the weighted mean rank
                grank = np.cumsum(gw) - gw / 2 - total / 2
                x[k] = grank[inv]
        else:
            mu = self.vectors @ w / total
            x = self.vectors - mu[:, None]
        cov = (x * w) @ x.T / total
        return cov, total

    def statistic(self, counts: np.ndarray) -> float:
        cov, total = self.weighted_cov(counts)
        if total < 3:
            return math.nan
        return _partial_from_cov(cov)

    def _pearson_batch(self, counts: np.ndarray) -> np.ndarray:
        """Pearson replicates for a batch via quadratic forms ``c^T H c / 2``."""
        if self._pearson_mats is None:
            mats = []
            for v in self.vectors:
                p = np.zeros((self.n, self.n))
                p[self.rows, self.cols] = v - v.mean()
                mats.append(p + p.T)
            self._pearson_mats = mats
        c = np.asarray(counts, dtype=float).T
        total = 0.5 * (c.sum(axis=0) ** 2 - (c * c).sum(axis=0))
        first = np.array([0.5 * np.einsum("ib,ib->b", c, p @ c) for p in self._pearson_mats])
        b = c.shape[1]
        second = np.empty((b, self.m, self.m))
        for i in range(self.m):
            for j in range(i, self.m):
                h = self._pearson_mats[i] * self._pearson_mats[j]
                val = 0.5 * np.einsum("ib,ib->b", c, h @ c)
                second[:, i, j] = val
                second[:, j, i] = val
        out = np.full(b, np.nan)
        for k in range(b):
            if total[k] < 3:
                continue
            mu = first[:, k] / total[k]
            cov = second[k] / total[k] - np.outer(mu, mu)
            out[k] = _partial_from_cov(cov)
        return out

    def statistics(self, counts: np.ndarray, jobs: int = 1) -> np.ndarray:
        counts = np.atleast_2d(counts)
        if self.method == "pearson" and self.n >= 60:
            chunks = [counts[i : i + _PEARSON_BATCH] for i in range(0, len(counts), _PEARSON_BATCH)]
            return np.concatenate([self._pearson_batch(ch) for ch in chunks]) if chunks else np.empty(0)
        if jobs > 1 and len(counts) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                return np.array(list(pool.map(self.statistic, counts)), dtype=float)
        return np.array([self.statistic(c) for c in counts], dtype=float)


def _draw_counts(rng: np.random.Generator, n: int) -> np.ndarray:
    return np.bincount(rng.integers(0, n, n), minlength=n)


def bootstrap_replicates(
    X, Y, controls=(), method: str = "pearson", replicates: int = 1000, seed: int = 0, jobs: int = 1
) -> np.ndarray:
    """Replicate coefficients of the node bootstrap, deterministic in ``seed``.

    Replicate ``k`` draws from its own generator spawned from ``seed``, so
    the values do not depend on ``jobs`` or on batching.  A replicate that is
    undefined (fewer than three dyads or a zero variance) is redrawn from the
    same generator, at most ``MAX_REDRAWS`` times.
    """
    kernel = DyadBootstrap(X, Y, controls, method)
    n = kernel.n
    gens = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(replicates)]
    if replicates == 0:
        return np.empty(0)
    stats = kernel.statistics(np.stack([_draw_counts(g, n) for g in gens]), jobs)
    for _ in range(MAX_REDRAWS):
        bad = np.flatnonzero(np.isnan(stats))
        if bad.size == 0:
            return stats
        stats[bad] = kernel.statistics(np.stack([_draw_counts(gens[i], n) for i in bad]), jobs)
    if np.isnan(stats).any():
        raise UndefinedStatisticError(
            f"{int(np.isnan(stats).sum())} bootstrap replicate(s) stayed undefined after {MAX_REDRAWS} redraws"
        )
    return stats


def percentile_ci(stats: np.ndarray, level: float = 0.95) -> tuple[float, float]:
    alpha = (1 - level) / 2
    lo, hi = np.percentile(stats, [100 * alpha, 100 * (1 - alpha)])
    return float(lo), float(hi)


def bootstrap_ci(
    X, Y, controls=(), method: str = "pearson", replicates: int = 1000, seed: int = 0, jobs: int = 1
) -> tuple[float, float]:
    """95% percentile interval of the node bootstrap."""
    if replicates < 100:
        raise ValueError("bootstrap_ci needs at least 100 replicates")
    return percentile_ci(bootstrap_replicates(X, Y, controls, method, replicates, seed, jobs))


@dataclass(frozen=True)
class MantelResult:
    method: str
    r: float
    ci: tuple[float, float] | None
    replicates: int
    n_dyads: int
    n_nodes: int
    controls: tuple[str, ...] = ()
    dropped_controls: tuple[str, ...] = ()
    seed: int | None = None

    @property
    def significant(self) -> bool:
        """Both interval bounds share a sign."""
        return self.ci is not None and (self.ci[0] > 0 or self.ci[1] < 0)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "r": self.r,
            "ci": list(self.ci) if self.ci is not None else None,
            "replicates": self.replicates,
            "n_dyads": self.n_dyads,
            "n_nodes": self.n_nodes,
            "controls": list(self.controls),
            "dropped_controls": list(self.dropped_controls),
            "seed": self.seed,
        }


def mantel_test(
    X: DyadMatrix,
    Y: DyadMatrix,
    controls: Sequence[DyadMatrix] = (),
    method: str = "pearson",
    replicates: int = 1000,
    seed: int = 0,
    jobs: int = 1,
) -> MantelResult:
    """Partial Mantel coefficient with its node-bootstrap interval."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DegenerateWarning)
        r, kept, dropped = partial_mantel_detail(X, Y, controls, method)
    for w in caught:
        warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    kept_mats = [c for c, name in zip(controls, _names(controls)) if name in kept]
    ci = None
    if replicates:
        ci = percentile_ci(bootstrap_replicates(X, Y, kept_mats, method, replicates, seed, jobs))
    n = X.n if isinstance(X, DyadMatrix) else np.asarray(X).shape[0]
    return MantelResult(method, r, ci, replicates, n * (n - 1) // 2, n, tuple(kept), tuple(dropped), seed)


# -- binomial test -------------------------------------------------------------


def _log_pmf(k: int, n: int, p: float) -> float:
    return (
        math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1) + k * math.log(p) + (n - k) * math.log1p(-p)
    )


def _log_sum_exp(values: Sequence[float]) -> float:
    top = max(values)
    return top + math.log(math.fsum(math.exp(v - top) for v in values))


def binomial_tail(successes: int, n: int, p: float = 0.5) -> float:
    """One-sided P(X >= successes) for X ~ Binomial(n, p), summed in log space."""
    if not 0 <= successes <= n:
        raise ValueError("need 0 <= successes <= n")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if successes == 0 or p == 1.0:
        return 1.0
    if p == 0.0:
        return 0.0
    terms = [_log_pmf(k, n, p) for k in range(successes, n + 1)]
    return min(1.0, math.exp(_log_sum_exp(terms)))


def binomial_lower_tail(successes: int, n: int, p: float = 0.5) -> float:
    """P(X <= successes)."""
    return binomial_tail(n - successes, n, 1.0 - p)


def binomial_two_sided(successes: int, n: int, p: float = 0.5) -> float:
    """Sum of the probabilities of all outcomes no more likely than ``successes``."""
    if not 0 <= successes <= n:
        raise ValueError("need 0 <= successes <= n")
    if p in (0.0, 1.0):
        return 1.0 if successes == round(n * p) else 0.0
    logs = [_log_pmf(k, n, p) for k in range(n + 1)]
    cutoff = logs[successes] + math.log1p(1e-7)
    return min(1.0, math.exp(_log_sum_exp([v for v in logs if v <= cutoff])))


# -- per-corporation rank correlation --------------------------------------------


def partial_rank_corr(x, y, controls: Sequence = ()) -> float:
    """Partial Spearman correlation: Pearson on rank residuals."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be vectors of equal length")
    if x.size < 4:
        raise ValueError("partial rank correlation needs at least 4 observations")
    zs = [average_ranks(np.asarray(z, dtype=float)) for z in controls]
    q, _, _ = _control_basis(zs, [f"control{i}" for i in range(len(zs))], x.size)
    return _residual_corr(average_ranks(x), average_ranks(y), q)


@dataclass(frozen=True)
class CorrelationResult:
    label: str
    rho: float
    ci: tuple[float, float] | None
    n: int
    controls: tuple[str, ...] = ()
    replicates: int = 0
    seed: int | None = None

    @property
    def significant(self) -> bool:
        return self.ci is not None and (self.ci[0] > 0 or self.ci[1] < 0)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["ci"] = list(self.ci) if self.ci is not None else None
        d["controls"] = list(self.controls)
        return d


def rank_corr_test(
    x, y, controls: Mapping[str, np.ndarray] | None = None, label: str = "", replicates: int = 1000, seed: int = 0
) -> CorrelationResult:
    """Partial rank correlation with a case-resampling bootstrap interval."""
    controls = dict(controls or {})
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    zs = [np.asarray(v, dtype=float) for v in controls.values()]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateWarning)
        rho = partial_rank_corr(x, y, zs)
        ci = None
        if replicates:
            n = x.size
            stats = np.empty(replicates)
            gens = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(replicates)]
            for k, g in enumerate(gens):
                for _ in range(MAX_REDRAWS + 1):
                    idx = g.integers(0, n, n)
                    try:
                        stats[k] = partial_rank_corr(x[idx], y[idx], [z[idx] for z in zs])
                        break
                    except UndefinedStatisticError:
                        continue
                else:
                    raise UndefinedStatisticError("rank-correlation replicate undefined after redraws")
            ci = percentile_ci(stats)
    return CorrelationResult(label, rho, ci, int(x.size), tuple(controls), replicates, seed)


# -- regression -------------------------------------------------------------------


@dataclass(frozen=True)
class Coefficient:
    estimate: float
    low: float | None
    high: float | None

    @property
    def significant(self) -> bool:
        return self.low is not None and (self.low > 0 or self.high < 0)


@dataclass(frozen=True)
class RegressionResult:
    response: str
    coefficients: dict[str, Coefficient]
    intercept: float
    r2: float
    n: int
    dropped: tuple[str, ...] = ()
    replicates: int = 0
    seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "response": self.response,
            "coefficients": {
                k: {"coef": c.estimate, "ci": [c.low, c.high] if c.low is not None else None}
                for k, c in self.coefficients.items()
            },
            "intercept": self.intercept,
            "r2": self.r2,
            "n": self.n,
            "dropped": list(self.dropped),
            "replicates": self.replicates,
            "seed": self.seed,
        }


def _scaled_ols(y: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, float]:
    sd = x.std(axis=0, ddof=1)
    if np.any(sd == 0):
        raise RankDeficientError("constant predictor")
    z = (x - x.mean(axis=0)) / sd
    design = np.column_stack([np.ones(len(y)), z])
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise RankDeficientError("design matrix is rank deficient")
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    sst = float(((y - y.mean()) ** 2).sum())
    r2 = 0.0 if sst == 0 else float(min(1.0, max(0.0, 1.0 - (resid @ resid) / sst)))
    return coef, r2


def regress_performance(
    response,
    predictors: Mapping[str, Sequence[float]],
    response_name: str = "performance",
    replicates: int = 1000,
    seed: int = 0,
) -> RegressionResult:
    """OLS of ``response`` on z-scored predictors with bootstrap intervals.

    Predictors are standardized (sample sd) inside every fit, including
    every case-resampling replicate, so each coefficient is the effect of
    one standard deviation of its predictor.
    """
    y = np.asarray(response, dtype=float)
    names = list(predictors)
    cols = [np.asarray(predictors[k], dtype=float) for k in names]
    if any(c.shape != y.shape for c in cols):
        raise ValueError("predictors and response differ in length")
    dropped = []
    keep_names, keep_cols = [], []
    for name, col in zip(names, cols):
        if col.size and np.all(col == col[0]):
            warnings.warn(f"predictor {name!r} is constant and was dropped", DegenerateWarning, stacklevel=2)
            dropped.append(name)
        else:
            keep_names.append(name)
            keep_cols.append(col)
    n = y.size
    if n < 10:
        raise ValueError("regression needs at least 10 observations")
    if n <= len(keep_cols) + 1:
        raise ValueError("regression needs more observations than predictors")
    x = np.column_stack(keep_cols) if keep_cols else np.empty((n, 0))
    coef, r2 = _scaled_ols(y, x)

    lows = highs = [None] * len(keep_names)
    if replicates:
        stats = np.empty((replicates, len(keep_names)))
        gens = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(replicates)]
        for k, g in enumerate(gens):
            for _ in range(MAX_REDRAWS + 1):
                idx = g.integers(0, n, n)
                try:
                    stats[k] = _scaled_ols(y[idx], x[idx])[0][1:]
                    break
                except RankDeficientError:
                    continue
            else:
                raise RankDeficientError("regression replicate rank deficient after redraws")
        bounds = np.percentile(stats, [2.5, 97.5], axis=0) if keep_names else np.empty((2, 0))
        lows, highs = [float(v) for v in bounds[0]], [float(v) for v in bounds[1]]
    coefficients = {
        name: Coefficient(float(coef[i + 1]), lows[i], highs[i]) for i, name in enumerate(keep_names)
    }
    return RegressionResult(response_name, coefficients, float(coef[0]), r2, n, tuple(dropped), replicates, seed)
