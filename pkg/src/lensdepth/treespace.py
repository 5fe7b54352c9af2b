"""Phylogenetic trees as weighted split systems, with geodesic tree-space distance.

A tree on a fixed ordered leaf universe is a set of pairwise-compatible
interior splits (bitmask bipartitions, canonically the side not
containing leaf 0) with positive lengths, plus one nonnegative pendant
length per leaf.  Distances are geodesics in the
Billera-Holmes-Vogtmann orthant complex, computed by successive support
refinement: each support pair is split while its incompatibility graph
admits a vertex cover of weight < 1 (found via max-flow/min-cut).  An
exhaustive support-sequence oracle is provided for trees with at most 7
leaves; it exists to cross-check the solver in tests.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import networkx as nx
import numpy as np

ZERO_LENGTH_TOL = 1e-12
_COVER_SLACK = 1e-12
_EXHAUSTIVE_MAX_LEAVES = 7


class TreeError(ValueError):
    """Structurally invalid tree or invalid tree operation."""


class NewickError(ValueError):
    """Newick syntax or semantic error; `offset` is the failing byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


def canonical_split(mask: int, universe_mask: int) -> int:
    """Canonical encoding of a bipartition: the side not containing leaf 0."""
    return mask ^ universe_mask if mask & 1 else mask


def compatible(s1: int, s2: int, universe_mask: int) -> bool:
    """True iff the two bipartitions can occur together in one tree.

    Holds exactly when at least one of the four pairwise side
    intersections is empty.
    """
    c1 = s1 ^ universe_mask
    c2 = s2 ^ universe_mask
    return (s1 & s2) == 0 or (s1 & c2) == 0 or (c1 & s2) == 0 or (c1 & c2) == 0


@dataclass(frozen=True)
class Tree:
    """Unrooted weighted tree: leaf labels, interior splits, pendant lengths.

    `interior` holds (canonical mask, length) pairs sorted by mask;
    `pendant` is aligned with `labels`.
    """

    labels: tuple[str, ...]
    interior: tuple[tuple[int, float], ...]
    pendant: tuple[float, ...]

    def __post_init__(self):
        L = len(self.labels)
        if L < 1:
            raise TreeError("a tree needs at least one leaf")
        if len(set(self.labels)) != L:
            raise TreeError("duplicate leaf labels")
        if len(self.pendant) != L:
            raise TreeError(f"expected {L} pendant lengths, got {len(self.pendant)}")
        for i, p in enumerate(self.pendant):
            if not (p >= 0.0) or not math.isfinite(p):
                raise TreeError(f"pendant length of {self.labels[i]!r} must be >= 0")
        umask = (1 << L) - 1
        masks = [m for m, _ in self.interior]
        if len(self.interior) > max(L - 3, 0):
            raise TreeError(f"{len(self.interior)} interior splits exceed the "
                            f"maximum {max(L - 3, 0)} for {L} leaves")
        if len(set(masks)) != len(masks):
            raise TreeError("duplicate interior split")
        for m, length in self.interior:
            if m & 1 or m <= 0 or m > umask:
                raise TreeError(f"split {m:#x} is not in canonical form")
            size = m.bit_count()
            if size < 2 or size > L - 2:
                raise TreeError(f"split {m:#x} is not interior (side size {size})")
            if not (length > 0.0) or not math.isfinite(length):
                raise TreeError("interior split lengths must be positive")
        for m1, m2 in itertools.combinations(masks, 2):
            if not compatible(m1, m2, umask):
                raise TreeError(f"incompatible splits {m1:#x} and {m2:#x}")

    @property
    def n_leaves(self) -> int:
        return len(self.labels)

    @property
    def universe_mask(self) -> int:
        return (1 << len(self.labels)) - 1

    @property
    def interior_map(self) -> dict[int, float]:
        return dict(self.interior)

    def is_binary(self) -> bool:
        return len(self.interior) == max(self.n_leaves - 3, 0)

    def sort_key(self):
        return (self.labels, self.interior, self.pendant)

    def with_lengths(self, interior_lengths, pendant_lengths) -> "Tree":
        """Same topology with replaced edge lengths."""
        interior = tuple((m, float(l)) for (m, _), l
                         in zip(self.interior, interior_lengths))
        return Tree(self.labels, interior, tuple(float(p) for p in pendant_lengths))


# ---------------------------------------------------------------------------
# Newick parsing and serialization


def parse_newick(text: str, universe=None) -> Tree:
    """Parse a single Newick expression (terminated by ';') into a Tree.

    Branch lengths are mandatory except on the root.  A degree-2 root is
    suppressed (its two incident edge lengths are added), interior
    splits with length <= 1e-12 are dropped, and the leaf order is the
    sorted label order unless an explicit `universe` fixes it, in which
    case the parsed leaf set must equal the universe.
    """
    s = text
    n = len(s)
    pos = 0
    seen: dict[str, int] = {}
    edges: list[tuple[frozenset, float]] = []   # (leaf set below edge, length)
    universe_set = set(universe) if universe is not None else None

    def skip_ws(i):
        while i < n and s[i].isspace():
            i += 1
        return i

    def read_label(i):
        j = i
        while j < n and s[j] not in "(),:;":
            j += 1
        label = s[i:j].strip()
        if not label:
            raise NewickError("expected a leaf label", i)
        return label, j

    def read_length(i, *, required):
        i = skip_ws(i)
        if i >= n or s[i] != ":":
            if required:
                raise NewickError("missing branch length", i)
            return None, i
        i += 1
        j = i
        while j < n and (s[j].isdigit() or s[j] in "+-.eE"):
            j += 1
        try:
            value = float(s[i:j])
        except ValueError:
            raise NewickError("malformed branch length", i) from None
        if value < 0:
            raise NewickError("negative branch length", i)
        return value, j

    def node(i, *, is_root):
        i = skip_ws(i)
        if i >= n:
            raise NewickError("unexpected end of input", i)
        if s[i] == "(":
            open_at = i
            i += 1
            leafset: frozenset = frozenset()
            while True:
                child_set, i = node(i, is_root=False)
                leafset |= child_set
                i = skip_ws(i)
                if i >= n:
                    raise NewickError("unbalanced parentheses", open_at)
                if s[i] == ",":
                    i += 1
                    continue
                if s[i] == ")":
                    i += 1
                    break
                raise NewickError(f"expected ',' or ')', found {s[i]!r}", i)
            i = skip_ws(i)
            if i < n and s[i] not in "(),:;":
                _, i = read_label(i)          # internal label (e.g. support); ignored
            length, i = read_length(i, required=not is_root)
            if not is_root:
                edges.append((leafset, length))
            return leafset, i
        if s[i] in "),:;":
            raise NewickError(f"expected a subtree, found {s[i]!r}", i)
        at = i
        label, i = read_label(i)
        if label in seen:
            raise NewickError(f"duplicate leaf label {label!r}", at)
        if universe_set is not None and label not in universe_set:
            raise NewickError(f"leaf label {label!r} absent from universe", at)
        seen[label] = at
        length, i = read_length(i, required=not is_root)
        leafset = frozenset([label])
        if not is_root:
            edges.append((leafset, length))
        elif length is not None:
            edges.append((leafset, length))   # single-leaf tree with a length
        return leafset, i

    all_leaves, pos = node(pos, is_root=True)
    pos = skip_ws(pos)
    if pos >= n or s[pos] != ";":
        raise NewickError("missing terminating ';'", pos)
    pos = skip_ws(pos + 1)
    if pos < n:
        raise NewickError(f"trailing characters after ';': {s[pos:pos+10]!r}", pos)

    if universe is not None:
        labels = tuple(universe)
        missing = set(labels) - set(all_leaves)
        if missing:
            raise NewickError(
                f"tree lacks universe leaves {sorted(missing)!r}", n - 1)
    else:
        labels = tuple(sorted(all_leaves))
    index = {lab: k for k, lab in enumerate(labels)}
    L = len(labels)
    umask = (1 << L) - 1
    pendant = [0.0] * L
    interior: dict[int, float] = {}
    for leafset, length in edges:
        mask = 0
        for lab in leafset:
            mask |= 1 << index[lab]
        size = len(leafset)
        if size == 1:
            pendant[mask.bit_length() - 1] += length
        elif size == L - 1:
            # A degree-2 root above a leaf: the edge is that leaf's pendant.
            pendant[(mask ^ umask).bit_length() - 1] += length
        elif size == L:
            continue
        else:
            mask = canonical_split(mask, umask)
            interior[mask] = interior.get(mask, 0.0) + length
    splits = tuple(sorted((m, l) for m, l in interior.items()
                          if l > ZERO_LENGTH_TOL))
    return Tree(labels, splits, tuple(pendant))


def to_newick(tree: Tree) -> str:
    """Serialize a tree; `parse_newick` recovers the identical split system."""
    L = tree.n_leaves
    if L == 1:
        return f"{tree.labels[0]}:{tree.pendant[0]!r};"
    sides = sorted((m for m, _ in tree.interior), key=lambda m: (m.bit_count(), m))
    lengths = tree.interior_map
    # Laminar nesting: parent of a side is its smallest strict superset.
    parent: dict[int, int | None] = {}
    for i, m in enumerate(sides):
        parent[m] = None
        for bigger in sides[i + 1:]:
            if m & bigger == m:
                parent[m] = bigger
                break
    children: dict[int | None, list] = {None: []}
    for m in sides:
        children[m] = []
    for m in sides:
        children[parent[m]].append(("side", m))
    for leaf in range(L):
        bit = 1 << leaf
        host = None
        for m in sides:
            if m & bit:
                host = m
                break
        children.setdefault(host, [])
        children[host].append(("leaf", leaf))

    def sort_bit(item):
        kind, v = item
        mask = (1 << v) if kind == "leaf" else v
        return (mask & -mask).bit_length()

    def render(item):
        kind, v = item
        if kind == "leaf":
            return f"{tree.labels[v]}:{tree.pendant[v]!r}"
        inner = ",".join(render(c) for c in sorted(children[v], key=sort_bit))
        return f"({inner}):{lengths[v]!r}"

    top = ",".join(render(c) for c in sorted(children[None], key=sort_bit))
    return f"({top});"


def parse_newick_lines(lines) -> tuple[list[Tree], list[int]]:
    """Parse one tree per line; '#' lines and blanks are skipped.

    The first tree fixes the leaf universe.  Returns the trees and their
    1-based line numbers.
    """
    trees: list[Tree] = []
    numbers: list[int] = []
    universe = None
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            tree = parse_newick(stripped, universe=universe)
        except NewickError as exc:
            raise NewickError(f"line {lineno}: {exc}", exc.offset) from None
        if universe is None:
            universe = tree.labels
        trees.append(tree)
        numbers.append(lineno)
    return trees, numbers


# ---------------------------------------------------------------------------
# Geodesic distance


@dataclass(frozen=True)
class GeodesicResult:
    """Geodesic length plus the support sequence realizing it.

    `support` is a sequence of ((a splits...), (b splits...)) pairs,
    each split a (mask, length) tuple; empty for same-topology pairs.
    """

    distance: float
    support: tuple
    common_sq: float

    @property
    def ratios(self) -> list[float]:
        return [_norm(a) / _norm(b) for a, b in self.support]


def _norm(part) -> float:
    s = 0.0
    for _, length in part:
        s += length * length
    return math.sqrt(s)


def _decompose(t1: Tree, t2: Tree):
    """Split the coordinate set into shared-Euclidean terms and the
    mutually incompatible split sets of each tree.

    A split present in only one tree but compatible with every split of
    the other is a shared coordinate ending (or starting) at length 0.
    """
    if t1.labels != t2.labels:
        raise TreeError(
            f"leaf universes differ: {t1.labels!r} vs {t2.labels!r}")
    umask = t1.universe_mask
    m1, m2 = t1.interior_map, t2.interior_map
    common_sq = 0.0
    for p, q in zip(t1.pendant, t2.pendant):
        d = p - q
        common_sq += d * d
    a_side: list[tuple[int, float]] = []
    b_side: list[tuple[int, float]] = []
    for mask, length in t1.interior:
        if mask in m2:
            d = length - m2[mask]
            common_sq += d * d
        elif all(compatible(mask, other, umask) for other in m2):
            common_sq += length * length
        else:
            a_side.append((mask, length))
    for mask, length in t2.interior:
        if mask in m1:
            continue
        if all(compatible(mask, other, umask) for other in m1):
            common_sq += length * length
        else:
            b_side.append((mask, length))
    return common_sq, tuple(a_side), tuple(b_side)


def _min_weight_cover(apart, bpart, umask):
    """Minimum-weight vertex cover of the bipartite incompatibility graph.

    Vertex weights are squared lengths normalized per side; by LP
    duality the cover is the min s-t cut of the associated flow network.
    Returns (weight, a_indices, b_indices).
    """
    wa = [l * l for _, l in apart]
    wb = [l * l for _, l in bpart]
    sa, sb = sum(wa), sum(wb)
    g = nx.DiGraph()
    for i, w in enumerate(wa):
        g.add_edge("s", ("a", i), capacity=w / sa)
    for j, w in enumerate(wb):
        g.add_edge(("b", j), "t", capacity=w / sb)
    for i, (ma, _) in enumerate(apart):
        for j, (mb, _) in enumerate(bpart):
            if not compatible(ma, mb, umask):
                g.add_edge(("a", i), ("b", j), capacity=float("inf"))
    cut, (source_side, sink_side) = nx.minimum_cut(g, "s", "t")
    ca = [i for i in range(len(apart)) if ("a", i) in sink_side]
    cb = [j for j in range(len(bpart)) if ("b", j) in source_side]
    return cut, ca, cb


def _gtp_support(a_side, b_side, umask):
    """Refine the cone support until no pair admits a cover of weight < 1."""
    pairs = [(a_side, b_side)]
    idx = 0
    while idx < len(pairs):
        apart, bpart = pairs[idx]
        if len(apart) == 1 or len(bpart) == 1:
            # Every vertex of a support pair is incident to an internal
            # incompatibility, so a 1-by-k pair has min cover weight 1.
            idx += 1
            continue
        weight, ca, cb = _min_weight_cover(apart, bpart, umask)
        if weight >= 1.0 - _COVER_SLACK:
            idx += 1
            continue
        ca_set, cb_set = set(ca), set(cb)
        c1 = tuple(apart[i] for i in ca)
        d2 = tuple(bpart[j] for j in cb)
        c2 = tuple(x for k, x in enumerate(apart) if k not in ca_set)
        d1 = tuple(x for k, x in enumerate(bpart) if k not in cb_set)
        if not (c1 and c2 and d1 and d2):
            idx += 1
            continue
        pairs[idx:idx + 1] = [(c1, d1), (c2, d2)]
    return tuple(pairs)


def bhv_distance(t1: Tree, t2: Tree) -> GeodesicResult:
    """Geodesic distance between two trees on the same leaf universe.

    Equals the Euclidean edge-length distance when the topologies agree.
    """
    common_sq, a_side, b_side = _decompose(t1, t2)
    if not a_side and not b_side:
        return GeodesicResult(math.sqrt(common_sq), (), common_sq)
    assert a_side and b_side, "one-sided incompatible set should be impossible"
    support = _gtp_support(a_side, b_side, t1.universe_mask)
    lsq = 0.0
    for apart, bpart in support:
        term = _norm(apart) + _norm(bpart)
        lsq += term * term
    return GeodesicResult(math.sqrt(common_sq + lsq), support, common_sq)


def _surjections(n, k):
    """All maps {0..n-1} -> {0..k-1} hitting every block."""
    for assignment in itertools.product(range(k), repeat=n):
        if len(set(assignment)) == k:
            yield assignment


def bhv_distance_exhaustive(t1: Tree, t2: Tree) -> float:
    """Exact geodesic length by enumerating every valid support sequence.

    Feasible only for small trees (<= 7 leaves); intended as a test
    oracle for `bhv_distance`.
    """
    if t1.n_leaves > _EXHAUSTIVE_MAX_LEAVES:
        raise TreeError(
            f"exhaustive search is limited to {_EXHAUSTIVE_MAX_LEAVES} leaves, "
            f"got {t1.n_leaves}")
    common_sq, a_side, b_side = _decompose(t1, t2)
    if not a_side and not b_side:
        return math.sqrt(common_sq)
    umask = t1.universe_mask
    na, nb = len(a_side), len(b_side)
    compat = [[compatible(a[0], b[0], umask) for b in b_side] for a in a_side]
    wa = [l * l for _, l in a_side]
    wb = [l * l for _, l in b_side]

    def seq_length_sq(fa, fb, k):
        # Valid supports need blocks A_i compatible with B_j for i > j,
        # and nondecreasing block norm ratios |A_i|/|B_i|; a sequence
        # with an inverted ratio does not realize the closed-form length
        # (its constrained optimum coincides with the merged sequence,
        # which is also enumerated).
        for ai in range(na):
            for bj in range(nb):
                if fa[ai] > fb[bj] and not compat[ai][bj]:
                    return None
        total = 0.0
        prev_ratio = -1.0
        for blk in range(k):
            sa = sum(wa[i] for i in range(na) if fa[i] == blk)
            sb = sum(wb[j] for j in range(nb) if fb[j] == blk)
            ra, rb = math.sqrt(sa), math.sqrt(sb)
            ratio = ra / rb
            if ratio < prev_ratio:
                return None
            prev_ratio = ratio
            term = ra + rb
            total += term * term
        return total

    best = (_norm(a_side) + _norm(b_side)) ** 2          # cone path, k = 1
    for k in range(2, min(na, nb) + 1):
        for fa in _surjections(na, k):
            for fb in _surjections(nb, k):
                val = seq_length_sq(fa, fb, k)
                if val is not None and val < best:
                    best = val
    return math.sqrt(common_sq + best)


def random_tree(labels, rng: np.random.Generator,
                interior_range=(0.1, 1.0), pendant_range=(0.1, 1.0)) -> Tree:
    """Random binary tree via uniform sequential cluster joins."""
    labels = tuple(labels)
    L = len(labels)
    clusters = [1 << i for i in range(L)]
    umask = (1 << L) - 1
    masks = []
    while len(clusters) > 3:
        i, j = sorted(rng.choice(len(clusters), size=2, replace=False))
        merged = clusters[i] | clusters[j]
        masks.append(merged)
        clusters = [c for k, c in enumerate(clusters) if k not in (i, j)]
        clusters.append(merged)
    interior = tuple(sorted(
        (canonical_split(m, umask), float(rng.uniform(*interior_range)))
        for m in masks))
    pendant = tuple(float(rng.uniform(*pendant_range)) for _ in range(L))
    return Tree(labels, interior, pendant)
