"""Monte Carlo validation harness: uniform-convergence experiments,
level-set and boundary convergence, and the limit-law covariance check.

Experiments are reproducible: replication r of sample size index k uses
an independent generator seeded by (seed, k, r), so results are
bit-identical at any parallelism level.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dataclass_field

import numpy as np
from scipy.stats import norm, t as student_t, vonmises_fisher

from . import treespace
from .depth import (
    DepthError,
    Sample,
    batch_depth,
    population_ld_1d,
    population_level_interval_1d,
)
from .levelsets import LatticeGrid, boundary_points, hausdorff, level_set
from .metrics import BHVSpace, EuclideanSpace, SphereSpace


class ExperimentError(ValueError):
    """Invalid experiment configuration."""


class DegenerateExperimentError(ExperimentError):
    """The requested level exceeds the population depth range."""


@dataclass(frozen=True)
class Sampler:
    """A seeded point-generating distribution over a metric space.

    `cdf`/`ppf` are present for one-dimensional distributions with a
    closed-form population depth.
    """

    space: object
    draw: object                 # draw(rng, k) -> points container
    label: str
    cdf: object = None
    ppf: object = None


def make_sampler(spec: dict) -> Sampler:
    """Build a sampler from its JSON spec, e.g. {"dist": "normal",
    "mu": 0, "sigma": 1}."""
    spec = dict(spec)
    dist = spec.pop("dist", None)
    if dist == "normal":
        mu = float(spec.pop("mu", 0.0))
        sigma = float(spec.pop("sigma", 1.0))
        dim = int(spec.pop("dim", 1))
        _reject_extra(dist, spec)
        if sigma <= 0:
            raise ExperimentError("normal sampler needs sigma > 0")
        space = EuclideanSpace(dim)

        def draw(rng, k):
            return mu + sigma * rng.standard_normal((k, dim))

        kw = dict(cdf=None, ppf=None)
        if dim == 1:
            kw = dict(cdf=lambda x: norm.cdf(x, loc=mu, scale=sigma),
                      ppf=lambda q: norm.ppf(q, loc=mu, scale=sigma))
        return Sampler(space, draw, f"normal(mu={mu},sigma={sigma},dim={dim})", **kw)
    if dist == "student_t":
        v = float(spec.pop("v"))
        _reject_extra(dist, spec)
        if v < 1:
            raise ExperimentError("student_t sampler needs v >= 1")
        space = EuclideanSpace(1)

        def draw(rng, k):
            return rng.standard_t(v, (k, 1))

        return Sampler(space, draw, f"student_t(v={v})",
                       cdf=lambda x: student_t.cdf(x, v),
                       ppf=lambda q: student_t.ppf(q, v))
    if dist == "uniform":
        lo = float(spec.pop("lo", 0.0))
        hi = float(spec.pop("hi", 1.0))
        _reject_extra(dist, spec)
        if hi <= lo:
            raise ExperimentError("uniform sampler needs hi > lo")
        space = EuclideanSpace(1)

        def draw(rng, k):
            return rng.uniform(lo, hi, (k, 1))

        width = hi - lo
        return Sampler(space, draw, f"uniform({lo},{hi})",
                       cdf=lambda x: np.clip((np.asarray(x, dtype=float) - lo)
                                             / width, 0.0, 1.0),
                       ppf=lambda q: lo + width * np.asarray(q, dtype=float))
    if dist == "point_mass":
        value = np.atleast_1d(np.asarray(spec.pop("value"), dtype=float))
        _reject_extra(dist, spec)
        space = EuclideanSpace(len(value))

        def draw(rng, k):
            return np.tile(value, (k, 1))

        return Sampler(space, draw, f"point_mass({value.tolist()})")
    if dist == "sphere_vmf":
        mu = np.asarray(spec.pop("mu"), dtype=float)
        kappa = float(spec.pop("kappa"))
        _reject_extra(dist, spec)
        mu = mu / np.linalg.norm(mu)
        space = SphereSpace(len(mu))
        frozen = vonmises_fisher(mu, kappa)

        def draw(rng, k):
            pts = frozen.rvs(k, random_state=rng)
            # renormalize within float tolerance so validation passes
            return pts / np.linalg.norm(pts, axis=1, keepdims=True)

        return Sampler(space, draw, f"sphere_vmf(kappa={kappa},dim={len(mu)})")
    if dist == "bhv_noise":
        base = spec.pop("base_tree")
        scale = float(spec.pop("scale", 0.1))
        _reject_extra(dist, spec)
        tree = base if isinstance(base, treespace.Tree) else treespace.parse_newick(base)
        space = BHVSpace(tree.labels)
        interior0 = np.array([l for _, l in tree.interior])
        pendant0 = np.array(tree.pendant)

        def draw(rng, k):
            out = []
            for _ in range(k):
                il = np.abs(interior0 + scale * rng.standard_normal(len(interior0)))
                il = np.maximum(il, 1e-9)     # keep splits strictly positive
                pl = np.abs(pendant0 + scale * rng.standard_normal(len(pendant0)))
                out.append(tree.with_lengths(il, pl))
            return out

        return Sampler(space, draw, f"bhv_noise(scale={scale})")
    raise ExperimentError(f"unknown sampler dist {dist!r}")


def _reject_extra(dist, spec):
    if spec:
        raise ExperimentError(f"unknown {dist} sampler fields: {sorted(spec)}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Shared configuration of the Monte Carlo experiments."""

    sampler: dict
    n_schedule: tuple[int, ...]
    replications: int
    seed: int
    grid: tuple[tuple[float, float, float], ...] | None = None
    points: tuple = ()
    pairs: int = 1_000_000
    threads: int = 1

    def __post_init__(self):
        ns = tuple(int(n) for n in self.n_schedule)
        if not ns or any(b <= a for a, b in zip(ns, ns[1:])):
            raise ExperimentError("n schedule must be nonempty and strictly increasing")
        object.__setattr__(self, "n_schedule", ns)
        if self.replications < 1:
            raise ExperimentError("need at least one replication")


@dataclass(frozen=True)
class ConvergenceReport:
    """Per-n error statistics over replications, plus monotonicity flags."""

    kind: str
    n_schedule: tuple[int, ...]
    replications: int
    seed: int
    stats: dict

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n_schedule": list(self.n_schedule),
            "replications": self.replications,
            "seed": self.seed,
            "stats": self.stats,
        }


def _rng_for(seed: int, n_index: int, replication: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(n_index, replication)))


def _run_grid(cfg: ExperimentConfig, task):
    """Evaluate task(n_index, replication) for the full schedule,
    threaded over replications with a fixed aggregation order."""
    results = {}
    jobs = [(k, r) for k in range(len(cfg.n_schedule))
            for r in range(cfg.replications)]
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as ex:
            outs = list(ex.map(lambda job: task(*job), jobs))
    else:
        outs = [task(*job) for job in jobs]
    for (k, r), out in zip(jobs, outs):
        results[(k, r)] = out
    return results


def _summaries(values: np.ndarray) -> dict:
    q1, med, q3 = np.percentile(values, [25, 50, 75])
    return {"median": float(med), "q1": float(q1), "q3": float(q3)}


def _stat_block(per_n: list[np.ndarray], n_schedule) -> dict:
    medians = [float(np.median(v)) for v in per_n]
    return {
        "per_n": {str(n): [float(x) for x in v]
                  for n, v in zip(n_schedule, per_n)},
        "summary": {str(n): _summaries(v) for n, v in zip(n_schedule, per_n)},
        "medians": medians,
        "monotone_nonincreasing": all(b <= a for a, b in zip(medians, medians[1:])),
        "monotone_strict": all(b < a for a, b in zip(medians, medians[1:])),
    }


def _population_depth_on(points, sampler: Sampler, pairs: int, seed: int):
    if sampler.cdf is not None:
        return np.asarray(population_ld_1d(points[:, 0], sampler.cdf))
    from .depth import population_ld_mc
    return np.array([population_ld_mc(p, sampler, pairs, seed=seed)
                     for p in points])


def supnorm_experiment(cfg: ExperimentConfig) -> ConvergenceReport:
    """Distribution of the largest depth error over the evaluation grid,
    per sample size."""
    sampler = make_sampler(cfg.sampler)
    if cfg.grid is None:
        raise ExperimentError("supnorm experiment needs an evaluation grid")
    grid = LatticeGrid(cfg.grid)
    truth = _population_depth_on(grid.points, sampler, cfg.pairs, cfg.seed)

    def task(k, r):
        rng = _rng_for(cfg.seed, k, r)
        pts = sampler.draw(rng, cfg.n_schedule[k])
        field = batch_depth(grid.points, Sample(pts, sampler.space))
        return float(np.max(np.abs(field.values - truth)))

    results = _run_grid(cfg, task)
    per_n = [np.array([results[(k, r)] for r in range(cfg.replications)])
             for k in range(len(cfg.n_schedule))]
    return ConvergenceReport("supnorm", cfg.n_schedule, cfg.replications,
                             cfg.seed, {"sup_error": _stat_block(per_n, cfg.n_schedule)})


def levelset_experiment(cfg: ExperimentConfig, lam: float) -> ConvergenceReport:
    """Hausdorff distance between empirical and population level sets on
    the grid, and between their inner lattice boundaries, per sample size."""
    sampler = make_sampler(cfg.sampler)
    if cfg.grid is None:
        raise ExperimentError("level-set experiment needs an evaluation grid")
    if sampler.ppf is None:
        raise ExperimentError("level-set experiment needs a 1-d closed-form sampler")
    grid = LatticeGrid(cfg.grid)
    space = sampler.space
    try:
        lo, hi = population_level_interval_1d(lam, sampler.ppf)
    except DepthError as exc:
        raise DegenerateExperimentError(str(exc)) from None
    true_members = np.flatnonzero((grid.points[:, 0] >= lo) & (grid.points[:, 0] <= hi))
    if len(true_members) == 0:
        raise DegenerateExperimentError(
            f"population level set at {lam} misses the evaluation grid")
    true_mask = np.zeros(len(grid), dtype=bool)
    true_mask[true_members] = True
    true_boundary = _inner_boundary(true_mask, grid)
    true_pts = grid.points[true_members]
    true_bpts = grid.points[true_boundary]

    def task(k, r):
        rng = _rng_for(cfg.seed, k, r)
        pts = sampler.draw(rng, cfg.n_schedule[k])
        field = batch_depth(grid.points, Sample(pts, space))
        ls = level_set(field, lam)
        if len(ls.members) == 0:
            return math.inf, math.inf
        d_set = hausdorff(grid.points[ls.members], true_pts, space)
        emp_boundary = boundary_points(ls, grid)
        d_bdry = hausdorff(grid.points[emp_boundary], true_bpts, space)
        return d_set, d_bdry

    results = _run_grid(cfg, task)
    blocks = {}
    for name, pick in (("set_hausdorff", 0), ("boundary_hausdorff", 1)):
        per_n = [np.array([results[(k, r)][pick] for r in range(cfg.replications)])
                 for k in range(len(cfg.n_schedule))]
        blocks[name] = _stat_block(per_n, cfg.n_schedule)
    blocks["level"] = lam
    blocks["true_interval"] = [lo, hi]
    return ConvergenceReport("levelset", cfg.n_schedule, cfg.replications,
                             cfg.seed, blocks)


def _inner_boundary(mask: np.ndarray, grid: LatticeGrid) -> np.ndarray:
    out = []
    for i in np.flatnonzero(mask):
        for j in grid.neighbor_indices(int(i)):
            if j is None or not mask[j]:
                out.append(int(i))
                break
    return np.array(out, dtype=np.int64)


# ---------------------------------------------------------------------------
# Limit-law check


@dataclass(frozen=True)
class CltReport:
    """Empirical vs target covariance of the scaled depth errors.

    `target_cov` is the product-moment target 4*(E[f_i f_j] - E f_i E f_j)
    with both indicators evaluated on one shared sample pair;
    `projection_cov`, available for closed-form 1-d samplers, is the
    classical projection (Hajek) covariance of the pairwise-count
    statistic, 4*Cov(g_i(Y), g_j(Y)) with g the conditional coverage.
    """

    n: int
    replications: int
    points: tuple
    empirical_cov: np.ndarray
    target_cov: np.ndarray
    target_se: np.ndarray
    projection_cov: np.ndarray | None
    truth: np.ndarray

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "replications": self.replications,
            "points": [list(np.atleast_1d(p)) for p in self.points],
            "empirical_cov": self.empirical_cov.tolist(),
            "target_cov": self.target_cov.tolist(),
            "target_se": self.target_se.tolist(),
            "projection_cov": None if self.projection_cov is None
            else self.projection_cov.tolist(),
            "population_depth": self.truth.tolist(),
        }


def p2_matrix(points, sampler: Sampler, pairs: int, seed: int = 0,
              batch: int = 200_000):
    """Joint pair-moment estimates from shared draws.

    Returns (p_vec, p_mat): p_vec[i] = P(point i covered by a random
    lens), p_mat[i, j] = P(points i and j covered by the same lens).
    Diagonal entries equal p_vec exactly (indicators are idempotent).
    """
    if pairs < 1:
        raise ExperimentError("need at least one Monte Carlo pair")
    space = sampler.space
    k = len(points)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                       spawn_key=(2,)))
    hit_single = np.zeros(k, dtype=np.int64)
    hit_joint = np.zeros((k, k), dtype=np.int64)
    done = 0
    while done < pairs:
        m = min(batch, pairs - done)
        y1 = sampler.draw(rng, m)
        y2 = sampler.draw(rng, m)
        r = space.paired_distances(y1, y2)
        ind = np.empty((k, m), dtype=bool)
        for i in range(k):
            d1 = space.dists_to(y1, points[i])
            d2 = space.dists_to(y2, points[i])
            ind[i] = (d1 <= r) & (d2 <= r)
        hit_single += ind.sum(axis=1)
        hit_joint += ind.astype(np.int64) @ ind.T
        done += m
    return hit_single / pairs, hit_joint / pairs


def p2_functional(x1, x2, sampler: Sampler, pairs: int, seed: int = 0):
    """Pair moments of two query points from shared draws:
    (P(x1 covered), P(x2 covered), P(both covered))."""
    pts = _points_container(sampler.space, [x1, x2])
    p_vec, p_mat = p2_matrix(pts, sampler, pairs, seed=seed)
    return float(p_vec[0]), float(p_vec[1]), float(p_mat[0, 1])


def _points_container(space, pts):
    return space.coerce_points(pts)


def projection_cov_1d(points, cdf) -> np.ndarray:
    """Closed-form projection covariance matrix on the line.

    The conditional coverage of x given one endpoint y is
    (1-F(x)) for y < x and F(x) for y > x, which makes
    Cov(g_i, g_j) elementary in the CDF values.
    """
    xs = np.asarray(points, dtype=float).reshape(-1)
    F = np.asarray(cdf(xs), dtype=float)
    k = len(xs)
    out = np.empty((k, k))
    for i in range(k):
        for j in range(k):
            a, b = sorted((i, j), key=lambda t: xs[t])
            fa, fb = F[a], F[b]
            e_gg = fa * (1 - fa) * (1 - fb) + (fb - fa) * fa * (1 - fb) \
                + (1 - fb) * fa * fb
            ld_i = 2 * F[i] * (1 - F[i])
            ld_j = 2 * F[j] * (1 - F[j])
            out[i, j] = 4.0 * (e_gg - ld_i * ld_j)
    return out


def clt_experiment(cfg: ExperimentConfig) -> CltReport:
    """Empirical covariance of sqrt(n) * (depth error) at the query
    points across replications, against the pair-moment target."""
    if cfg.replications < 500:
        raise ExperimentError(
            f"the covariance check needs >= 500 replications, got {cfg.replications}")
    if not cfg.points:
        raise ExperimentError("clt experiment needs query points")
    sampler = make_sampler(cfg.sampler)
    n = cfg.n_schedule[-1]
    pts = _points_container(sampler.space, list(cfg.points))
    truth = _population_depth_on(pts, sampler, cfg.pairs, cfg.seed)
    k = len(pts)
    root_n = math.sqrt(n)

    def task(_, r):
        rng = _rng_for(cfg.seed, 0, r)
        sample_pts = sampler.draw(rng, n)
        field = batch_depth(pts, Sample(sample_pts, sampler.space))
        return root_n * (field.values - truth)

    cfg_single = ExperimentConfig(cfg.sampler, (n,), cfg.replications, cfg.seed,
                                  points=cfg.points, pairs=cfg.pairs,
                                  threads=cfg.threads)
    results = _run_grid(cfg_single, task)
    errors = np.stack([results[(0, r)] for r in range(cfg.replications)])
    empirical = np.atleast_2d(np.cov(errors.T, ddof=1))
    p_vec, p_mat = p2_matrix(pts, sampler, cfg.pairs, seed=cfg.seed)
    target = 4.0 * (p_mat - np.outer(p_vec, p_vec))
    se = np.empty((k, k))
    for i in range(k):
        for j in range(k):
            var = p_mat[i, j] * (1 - p_mat[i, j]) \
                + p_vec[j] ** 2 * p_vec[i] * (1 - p_vec[i]) \
                + p_vec[i] ** 2 * p_vec[j] * (1 - p_vec[j])
            se[i, j] = 4.0 * math.sqrt(var / cfg.pairs)
    projection = None
    if sampler.cdf is not None:
        projection = projection_cov_1d(np.asarray(pts)[:, 0], sampler.cdf)
    return CltReport(n, cfg.replications, tuple(map(tuple, np.asarray(pts))),
                     empirical, target, se, projection, np.asarray(truth))


# ---------------------------------------------------------------------------
# JSON entry point


def run_config(config: dict) -> dict:
    """Run the experiment described by a JSON config dict.

    Required keys: experiment (supnorm | levelset | clt), sampler,
    n_schedule, replications, seed; levelset additionally takes lambda,
    supnorm/levelset a grid, clt a points list.
    """
    config = dict(config)
    kind = config.pop("experiment", None)
    lam = config.pop("lambda", None)
    grid = config.pop("grid", None)
    if grid is not None:
        grid = tuple(tuple(map(float, axis)) for axis in grid)
    cfg = ExperimentConfig(
        sampler=config.pop("sampler"),
        n_schedule=tuple(config.pop("n_schedule")),
        replications=int(config.pop("replications")),
        seed=int(config.pop("seed", 0)),
        grid=grid,
        points=tuple(tuple(np.atleast_1d(p).tolist()) for p in config.pop("points", ())),
        pairs=int(config.pop("pairs", 1_000_000)),
        threads=int(config.pop("threads", 1)),
    )
    if config:
        raise ExperimentError(f"unknown config fields: {sorted(config)}")
    if kind == "supnorm":
        return supnorm_experiment(cfg).to_dict()
    if kind == "levelset":
        if lam is None:
            raise ExperimentError("levelset experiment needs a lambda")
        return levelset_experiment(cfg, float(lam)).to_dict()
    if kind == "clt":
        return clt_experiment(cfg).to_dict()
    raise ExperimentError(f"unknown experiment {kind!r}")
