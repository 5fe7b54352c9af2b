"""Empirical lens depth: lens membership, the pairwise-count estimator,
batch evaluation, and population oracles.

The depth of a query point is the fraction of unordered sample pairs
whose lens (intersection of the two closed balls centred at the pair
with radius equal to their distance) contains it.  `empirical_lens_depth`
is the direct double loop over pairs; `batch_depth` is the cached,
vectorized evaluator and matches the double loop bit for bit.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .metrics import MetricSpace, pairwise_matrix


class DepthError(ValueError):
    """Invalid input to a depth computation."""


def _pair_count(n: int) -> int:
    return n * (n - 1) // 2


class Sample:
    """An indexed point set in a metric space with a cached distance matrix.

    The matrix is computed on first use via `pairwise_matrix`, so the
    cache always agrees with per-pair recomputation exactly.
    """

    def __init__(self, points, space: MetricSpace, cache: np.ndarray | None = None):
        self.points = space.coerce_points(points)
        self.space = space
        if cache is not None:
            cache = np.asarray(cache, dtype=float)
            n = len(self.points)
            if cache.shape != (n, n):
                raise DepthError(f"cache shape {cache.shape} does not match {n} points")
        self._cache = cache

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def distance_matrix(self) -> np.ndarray:
        if self._cache is None:
            self._cache = pairwise_matrix(self.points, self.space)
        return self._cache

    def with_cache(self) -> "Sample":
        _ = self.distance_matrix
        return self

    def subset(self, indices) -> "Sample":
        idx = np.asarray(indices, dtype=int)
        if isinstance(self.points, list):
            pts = [self.points[i] for i in idx]
        else:
            pts = self.points[idx]
        cache = None
        if self._cache is not None:
            cache = self._cache[np.ix_(idx, idx)]
        return Sample(pts, self.space, cache=cache)

    def __repr__(self):
        return f"Sample(n={self.n}, space={self.space!r})"


@dataclass(frozen=True)
class DepthField:
    """Depth values over an evaluation point set.

    `values` = `counts / pair_count` where counts are the exact numbers
    of covering pairs, so every value is a multiple of 1/pair_count.
    """

    points: object
    values: np.ndarray
    n: int
    space: MetricSpace
    counts: np.ndarray | None = None
    pair_count: int | None = None

    def __len__(self):
        return len(self.values)

    @property
    def max_value(self) -> float:
        return float(self.values.max())


def in_lens(x, y1, y2, space: MetricSpace) -> bool:
    """True iff `x` lies in the lens of (`y1`, `y2`): both closed balls of
    radius d(y1, y2) centred at y1 and y2 contain it.

    A degenerate pair y1 == y2 has the singleton lens {y1}.
    """
    x = space.coerce_point(x)
    y1 = space.coerce_point(y1)
    y2 = space.coerce_point(y2)
    r = space.distance(y1, y2)
    return space.distance(x, y1) <= r and space.distance(x, y2) <= r


def empirical_lens_depth(x, sample: Sample, exclude: int | None = None) -> float:
    """Depth of `x` by the direct double loop over all sample pairs.

    Ties on ball boundaries count as inside (closed balls, no tolerance).
    `exclude` drops every pair involving that sample index, for
    leave-one-out evaluation; the denominator shrinks accordingly.
    """
    n = sample.n
    eff = n if exclude is None else n - 1
    if eff < 2:
        raise DepthError(f"need at least 2 sample points, have {eff}")
    space = sample.space
    x = space.coerce_point(x)
    pts = sample.points
    count = 0
    for i in range(n):
        if i == exclude:
            continue
        pi = pts[i]
        dxi = space.distance(x, pi)
        for j in range(i + 1, n):
            if j == exclude:
                continue
            r = space.distance(pi, pts[j])
            if dxi <= r and space.distance(x, pts[j]) <= r:
                count += 1
    return count / _pair_count(eff)


def _count_block(dq: np.ndarray, dmat: np.ndarray) -> np.ndarray:
    """Covering-pair counts for a block of queries.

    dq: (m, n) query-to-sample distances; dmat: (n, n) sample matrix.
    Comparisons reuse the exact floats the scalar path would produce, so
    the counts equal the double loop's.
    """
    m, n = dq.shape
    counts = np.zeros(m, dtype=np.int64)
    for i in range(n - 1):
        row = dmat[i, i + 1:]
        worst = np.maximum(dq[:, i, None], dq[:, i + 1:])
        counts += (worst <= row).sum(axis=1)
    return counts


def _query_distances(queries, sample: Sample) -> np.ndarray:
    return sample.space.cross_matrix(queries, sample.points)


def batch_depth(queries, sample: Sample, threads: int = 1) -> DepthField:
    """Empirical lens depth of every query point against `sample`.

    Equals `empirical_lens_depth` per point exactly; the result is
    independent of `threads` (queries are partitioned, each computed in
    isolation).
    """
    if sample.n < 2:
        raise DepthError(f"need at least 2 sample points, have {sample.n}")
    queries = sample.space.coerce_points(queries)
    m = len(queries)
    if m == 0:
        raise DepthError("empty query set")
    dmat = sample.distance_matrix
    dq = _query_distances(queries, sample)
    counts = np.zeros(m, dtype=np.int64)
    if threads > 1 and m > 1:
        bounds = np.linspace(0, m, min(threads, m) + 1).astype(int)
        blocks = [(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]

        def work(block):
            lo, hi = block
            counts[lo:hi] = _count_block(dq[lo:hi], dmat)

        with ThreadPoolExecutor(len(blocks)) as ex:
            list(ex.map(work, blocks))
    else:
        counts[:] = _count_block(dq, dmat)
    pc = _pair_count(sample.n)
    return DepthField(points=queries, values=counts / pc, n=sample.n,
                      space=sample.space, counts=counts, pair_count=pc)


def self_depth_field(sample: Sample, threads: int = 1) -> DepthField:
    """Leave-one-out depth of each sample point within its own sample.

    Pairs involving the point itself are excluded (they would always
    cover it); the denominator is (n-1 choose 2).
    """
    n = sample.n
    if n < 3:
        raise DepthError(f"leave-one-out depth needs n >= 3, have {n}")
    dmat = sample.distance_matrix
    counts = np.zeros(n, dtype=np.int64)
    if threads > 1:
        bounds = np.linspace(0, n, min(threads, n) + 1).astype(int)
        blocks = [(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]

        def work(block):
            lo, hi = block
            counts[lo:hi] = _count_block(dmat[lo:hi], dmat)

        with ThreadPoolExecutor(len(blocks)) as ex:
            list(ex.map(work, blocks))
    else:
        counts[:] = _count_block(dmat, dmat)
    # Every pair containing index e covers x_e, so drop those n-1 pairs.
    counts -= n - 1
    pc = _pair_count(n - 1)
    return DepthField(points=sample.points, values=counts / pc, n=n,
                      space=sample.space, counts=counts, pair_count=pc)


def population_ld_1d(x, cdf):
    """Closed-form population depth on the line: 2 F(x) (1 - F(x)).

    Valid for distributions with a continuous CDF; the result lies in
    [0, 1/2].  Accepts scalars or arrays if `cdf` is vectorized.
    """
    f = cdf(x)
    return 2.0 * f * (1.0 - f)


def population_level_interval_1d(lam: float, ppf) -> tuple[float, float]:
    """Endpoints of the population depth level set on the line.

    The set of points with depth >= lam is the interval whose CDF values
    span [(1 - sqrt(1-2*lam))/2, (1 + sqrt(1-2*lam))/2].
    """
    if lam < 0:
        raise DepthError(f"level must be nonnegative, got {lam}")
    if lam > 0.5:
        raise DepthError(
            f"level {lam} exceeds the maximal 1-d population depth 0.5")
    s = math.sqrt(1.0 - 2.0 * lam)
    return float(ppf((1.0 - s) / 2.0)), float(ppf((1.0 + s) / 2.0))


def population_ld_mc(x, sampler, pairs: int, seed: int = 0,
                     batch: int = 200_000) -> float:
    """Monte Carlo population depth: the fraction of independent sample
    pairs whose lens contains `x`.

    `sampler` provides `.space` and `.draw(rng, k)`; the estimate is
    deterministic given `seed` with standard error <= (4*pairs)^{-1/2}.
    """
    if pairs < 1:
        raise DepthError(f"need at least one pair, got {pairs}")
    space = sampler.space
    x = space.coerce_point(x)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    hits = 0
    done = 0
    while done < pairs:
        k = min(batch, pairs - done)
        y1 = sampler.draw(rng, k)
        y2 = sampler.draw(rng, k)
        r = space.paired_distances(y1, y2)
        d1 = space.dists_to(y1, x)
        d2 = space.dists_to(y2, x)
        hits += int(((d1 <= r) & (d2 <= r)).sum())
        done += k
    return hits / pairs
