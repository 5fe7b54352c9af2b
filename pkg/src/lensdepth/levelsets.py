"""Depth level sets on evaluation geometries, set distances, and the
set summaries used for dispersion comparison.

Level sets are extensional: membership of the evaluation points, never
an analytic region.  The evaluation geometry is either an axis-aligned
lattice over a box (with spacing-aware neighbor structure and a virtual
exterior one step outside the box) or the sample itself with a
symmetrized k-nearest-neighbor graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .depth import DepthField, Sample
from .metrics import MetricSpace


class LevelSetError(ValueError):
    """Invalid level-set operation."""


@dataclass(frozen=True)
class LevelSet:
    """Indices of evaluation points whose depth reaches the threshold."""

    lam: float
    members: np.ndarray
    field: DepthField

    def __len__(self):
        return len(self.members)

    @property
    def member_mask(self) -> np.ndarray:
        mask = np.zeros(len(self.field.values), dtype=bool)
        mask[self.members] = True
        return mask

    def member_points(self):
        pts = self.field.points
        if isinstance(pts, list):
            return [pts[i] for i in self.members]
        return pts[self.members]


def level_set(field: DepthField, lam: float) -> LevelSet:
    """Evaluation points with depth >= lam (ties included); may be empty."""
    if lam < 0:
        raise LevelSetError(f"level must be nonnegative, got {lam}")
    members = np.flatnonzero(field.values >= lam)
    return LevelSet(float(lam), members, field)


def hausdorff(a, b, space: MetricSpace) -> float:
    """Hausdorff distance between two nonempty finite point sets:
    the larger of the two directed farthest-nearest distances."""
    if len(a) == 0 or len(b) == 0:
        raise LevelSetError("Hausdorff distance is undefined for empty sets")
    cross = space.cross_matrix(a, b)
    return float(max(cross.min(axis=1).max(), cross.min(axis=0).max()))


def nearest_indices(points, targets, space: MetricSpace,
                    chunk: int = 4096) -> np.ndarray:
    """Index of the nearest point of `targets` for each of `points`
    (ties resolved to the lowest index)."""
    out = np.empty(len(points), dtype=np.int64)
    for lo in range(0, len(points), chunk):
        hi = min(lo + chunk, len(points))
        out[lo:hi] = space.cross_matrix(points[lo:hi], targets).argmin(axis=1)
    return out


def contains(ls: LevelSet, points, space: MetricSpace | None = None) -> np.ndarray:
    """Membership of arbitrary points, decided at the nearest evaluation
    point of the level set's field."""
    space = space or ls.field.space
    idx = nearest_indices(points, ls.field.points, space)
    return ls.field.values[idx] >= ls.lam


def measure_distance(a: LevelSet, b: LevelSet, reference: Sample) -> float:
    """Fraction of reference points falling in exactly one of the two sets.

    Both level sets must share the evaluation geometry; membership of a
    reference point is decided by thresholding each field at the
    reference point's nearest evaluation point.
    """
    if reference.n == 0:
        raise LevelSetError("empty reference sample")
    if len(a.field.values) != len(b.field.values):
        raise LevelSetError("level sets live on different evaluation geometries")
    idx = nearest_indices(reference.points, a.field.points, reference.space)
    in_a = a.field.values[idx] >= a.lam
    in_b = b.field.values[idx] >= b.lam
    return float(np.mean(in_a != in_b))


# ---------------------------------------------------------------------------
# Evaluation geometries


@dataclass(frozen=True)
class LatticeGrid:
    """Axis-aligned lattice over a box, points in C order.

    `axes` holds (lo, hi, step) per dimension.  Without `wrap`, lattice
    positions one step outside the box act as non-member virtual
    neighbors, so a full-grid level set still has a boundary.
    """

    axes: tuple[tuple[float, float, float], ...]
    wrap: bool = False
    _axis_values: tuple = field(init=False, repr=False, compare=False, default=())
    _points: np.ndarray = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        values = []
        for lo, hi, step in self.axes:
            if step <= 0 or hi < lo:
                raise LevelSetError(f"bad axis ({lo}, {hi}, {step})")
            count = int(math.floor((hi - lo) / step + 1e-9)) + 1
            values.append(lo + step * np.arange(count))
        object.__setattr__(self, "_axis_values", tuple(values))
        mesh = np.meshgrid(*values, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        object.__setattr__(self, "_points", pts)

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(v) for v in self._axis_values)

    def __len__(self):
        return len(self._points)

    def neighbor_indices(self, i: int):
        """Flat indices of the 2d axis neighbors; None marks a position
        outside the lattice (only without wrap)."""
        shape = self.shape
        coords = np.unravel_index(i, shape)
        out = []
        for d, size in enumerate(shape):
            for delta in (-1, 1):
                c = coords[d] + delta
                if self.wrap:
                    c %= size
                elif c < 0 or c >= size:
                    out.append(None)
                    continue
                nb = list(coords)
                nb[d] = c
                out.append(int(np.ravel_multi_index(nb, shape)))
        return out

    def exterior_distance(self, x) -> float:
        """Distance from `x` to the nearest virtual exterior lattice point."""
        best = math.inf
        for d, (lo, hi, step) in enumerate(self.axes):
            last = self._axis_values[d][-1]
            best = min(best, x[d] - (lo - step), (last + step) - x[d])
        return best

    def describe(self) -> str:
        return "lattice " + ",".join(f"{lo}:{hi}:{step}" for lo, hi, step in self.axes)


@dataclass(frozen=True)
class KnnGrid:
    """Sample-based evaluation geometry with a symmetrized kNN graph."""

    points: object
    space: MetricSpace
    k: int = 8
    _adj: tuple = field(init=False, repr=False, compare=False, default=())

    def __post_init__(self):
        n = len(self.points)
        if n < 2:
            raise LevelSetError("kNN geometry needs at least 2 points")
        k = min(self.k, n - 1)
        cross = self.space.cross_matrix(self.points, self.points)
        np.fill_diagonal(cross, np.inf)
        order = np.argsort(cross, axis=1, kind="stable")[:, :k]
        adj = [set(map(int, row)) for row in order]
        for i, row in enumerate(order):      # symmetrize: union of both directions
            for j in row:
                adj[int(j)].add(i)
        object.__setattr__(self, "_adj", tuple(tuple(sorted(s)) for s in adj))

    def __len__(self):
        return len(self.points)

    def neighbor_indices(self, i: int):
        return list(self._adj[i])

    def describe(self) -> str:
        return f"knn-graph k={self.k} n={len(self.points)}"


def boundary_points(ls: LevelSet, grid) -> np.ndarray:
    """Inner boundary: members with at least one non-member (or
    out-of-lattice) neighbor."""
    if len(ls.field.values) != len(grid):
        raise LevelSetError("level set and grid have different point counts")
    mask = ls.member_mask
    out = []
    for i in ls.members:
        for j in grid.neighbor_indices(int(i)):
            if j is None or not mask[j]:
                out.append(int(i))
                break
    return np.array(sorted(out), dtype=np.int64)


# ---------------------------------------------------------------------------
# Set summaries


class PsiVolume(NamedTuple):
    value: float
    stderr: float


def psi_diameter(points, space: MetricSpace) -> float:
    """Largest pairwise distance; 0 for a singleton."""
    if len(points) == 0:
        raise LevelSetError("diameter of an empty set")
    if len(points) == 1:
        return 0.0
    return float(space.cross_matrix(points, points).max())


def psi_diameter_from_matrix(dmat: np.ndarray, members: np.ndarray) -> float:
    if len(members) == 0:
        raise LevelSetError("diameter of an empty set")
    if len(members) == 1:
        return 0.0
    return float(dmat[np.ix_(members, members)].max())


def psi_inradius(members, complement, space: MetricSpace) -> float:
    """Largest distance from a member to its nearest non-member point.

    On a discrete evaluation set this approximates the inradius with
    bias at most the point spacing.
    """
    if len(members) == 0:
        return 0.0
    if len(complement) == 0:
        raise LevelSetError("inradius needs a nonempty complement")
    cross = space.cross_matrix(members, complement)
    return float(cross.min(axis=1).max())


def psi_volume(ls: LevelSet, reference: Sample, reference_mass: float) -> PsiVolume:
    """Estimated measure of the set: `reference_mass` times the fraction
    of reference points in it, with the binomial standard error."""
    if reference.n == 0:
        raise LevelSetError("empty reference sample")
    inside = contains(ls, reference.points, reference.space)
    frac = float(inside.mean())
    se = reference_mass * math.sqrt(frac * (1.0 - frac) / reference.n)
    return PsiVolume(reference_mass * frac, se)
