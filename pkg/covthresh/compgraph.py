"""
Thresholded covariance graphs and their connected components.

The partition of {0..p-1} induced by the components of the graph with edges
|S_ij| > lam is the same partition the support of the graphical lasso
estimate induces at lam, so everything here works on S alone.
"""
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, List, Optional, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.sparse.csgraph import connected_components as csgraph_components

from covthresh.covmodel import as_array
from covthresh.exceptions import DimensionMismatchError, InputError

logger = logging.getLogger(__name__)


class EdgeSet:
    """Undirected simple graph on p nodes, stored as sorted (i < j) index arrays."""

    __slots__ = ('p', 'rows', 'cols')

    def __init__(self, p: int, rows, cols):
        rows = np.asarray(rows, dtype=np.intp)
        cols = np.asarray(cols, dtype=np.intp)
        if rows.shape != cols.shape:
            raise InputError("edge endpoint arrays differ in length")
        lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
        if np.any(lo == hi):
            raise InputError("self-loops are not allowed")
        if lo.size and (lo.min() < 0 or hi.max() >= p):
            raise InputError(f"edge endpoint outside [0, {p})")
        keys = np.unique(lo * p + hi)
        self.p = p
        self.rows = keys // p
        self.cols = keys % p
        self.rows.flags.writeable = False
        self.cols.flags.writeable = False

    @classmethod
    def from_pairs(cls, p: int, pairs: Iterable[Tuple[int, int]]) -> 'EdgeSet':
        pairs = list(pairs)
        if not pairs:
            return cls(p, [], [])
        rows, cols = zip(*pairs)
        return cls(p, rows, cols)

    def pairs(self) -> set:
        return set(zip(self.rows.tolist(), self.cols.tolist()))

    def __len__(self):
        return int(self.rows.size)

    def __eq__(self, other):
        if not isinstance(other, EdgeSet):
            return NotImplemented
        return self.p == other.p and np.array_equal(self.rows, other.rows) and np.array_equal(self.cols, other.cols)

    def __repr__(self):
        return f"EdgeSet(p={self.p}, edges={len(self)})"


@dataclass(frozen=True)
class VertexPartition:
    """
    Canonical partition of {0..p-1}: members ascending inside each block,
    blocks ordered by their smallest member. Two partitions that differ only
    by how their blocks are labelled compare equal.
    """
    p: int
    blocks: Tuple[Tuple[int, ...], ...]

    @classmethod
    def from_blocks(cls, p: int, blocks: Iterable[Iterable[int]]) -> 'VertexPartition':
        canon = sorted((tuple(sorted(int(v) for v in b)) for b in blocks), key=lambda b: b[0] if b else -1)
        seen = [v for b in canon for v in b]
        if any(not b for b in canon):
            raise InputError("partition blocks must be nonempty")
        if sorted(seen) != list(range(p)):
            raise InputError(f"blocks do not partition range({p})")
        return cls(p, tuple(canon))

    @classmethod
    def from_labels(cls, labels) -> 'VertexPartition':
        labels = np.asarray(labels)
        groups = {}
        for node, label in enumerate(labels.tolist()):
            groups.setdefault(label, []).append(node)
        # nodes are visited in order, so each group is already ascending and
        # dict order is the order of first appearance, i.e. by minimum member
        return cls(int(labels.size), tuple(tuple(g) for g in groups.values()))

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    def sizes(self) -> List[int]:
        return [len(b) for b in self.blocks]

    def max_size(self) -> int:
        return max(self.sizes())

    def singletons(self) -> frozenset:
        return frozenset(b[0] for b in self.blocks if len(b) == 1)

    def labels(self) -> NDArray:
        """Block index of every node."""
        out = np.empty(self.p, dtype=np.intp)
        for k, block in enumerate(self.blocks):
            out[list(block)] = k
        return out

    def to_dict(self) -> dict:
        """1-based components, for reports."""
        return {
            'num_components': self.num_blocks,
            'components': [[v + 1 for v in b] for b in self.blocks],
            'sizes': self.sizes(),
        }


@dataclass(frozen=True)
class ComponentProfile:
    """Component size distribution (largest first) at each lambda of an ascending grid."""
    lambdas: Tuple[float, ...]
    sizes_per_lambda: Tuple[Tuple[int, ...], ...]

    def to_dict(self) -> dict:
        return {'lambdas': list(self.lambdas), 'sizes': [list(s) for s in self.sizes_per_lambda]}


class DisjointSet:
    """Union-find over 0..n-1 with union by size and path halving."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n
        self.count = n
        self.max_size = 1 if n else 0

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, x: int, y: int) -> bool:
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return False
        if self.size[rx] < self.size[ry]:
            rx, ry = ry, rx
        self.parent[ry] = rx
        self.size[rx] += self.size[ry]
        self.count -= 1
        if self.size[rx] > self.max_size:
            self.max_size = self.size[rx]
        return True

    def labels(self) -> List[int]:
        return [self.find(x) for x in range(len(self.parent))]


def _off_diagonal_abs(S) -> Tuple[NDArray, NDArray, NDArray]:
    arr = as_array(S)
    rows, cols = np.triu_indices(arr.shape[0], k=1)
    return rows, cols, np.abs(arr[rows, cols])


def threshold_graph(S, lam: float) -> EdgeSet:
    """Edges (i, j), i < j, with |S_ij| > lam strictly."""
    arr = as_array(S)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionMismatchError("matrix not square")
    rows, cols, weights = _off_diagonal_abs(arr)
    keep = weights > lam
    return EdgeSet(arr.shape[0], rows[keep], cols[keep])


def support_graph(theta, support_tol: float) -> EdgeSet:
    """Edges (i, j), i < j, with |Theta_ij| > support_tol."""
    return threshold_graph(theta, support_tol)


def connected_components(g: EdgeSet) -> VertexPartition:
    ds = DisjointSet(g.p)
    for i, j in zip(g.rows.tolist(), g.cols.tolist()):
        ds.union(i, j)
    return VertexPartition.from_labels(ds.labels())


def threshold_partition(S, lam: float) -> VertexPartition:
    """Components of threshold_graph(S, lam), computed straight from the dense mask."""
    arr = as_array(S)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionMismatchError("matrix not square")
    adjacency = np.abs(arr) > lam
    np.fill_diagonal(adjacency, False)
    _, labels = csgraph_components(adjacency, directed=False)
    return VertexPartition.from_labels(labels)


def _check_same_p(a: VertexPartition, b: VertexPartition):
    if a.p != b.p:
        raise DimensionMismatchError(f"partitions cover {a.p} and {b.p} nodes")


def partition_equal(a: VertexPartition, b: VertexPartition) -> bool:
    _check_same_p(a, b)
    return a.blocks == b.blocks


def partition_refines(fine: VertexPartition, coarse: VertexPartition) -> bool:
    """True iff every block of `fine` lies inside a single block of `coarse`."""
    _check_same_p(fine, coarse)
    coarse_labels = coarse.labels()
    return all(len(set(coarse_labels[list(block)].tolist())) == 1 for block in fine.blocks)


def critical_lambdas(S) -> List[float]:
    """Sorted distinct |S_ij|, i < j: the only values where the threshold partition can change."""
    _, _, weights = _off_diagonal_abs(S)
    return np.unique(weights).tolist()


def critical_lambda_sweep(S) -> Iterator[Tuple[float, DisjointSet, NDArray]]:
    """
    Walk the critical values from the largest down to 0.

    Yields (lam, ds, batch): `ds` holds the components of the graph with
    edges |S_ij| > lam, and `batch` (k x 2) lists the edges of weight exactly
    lam, which are merged into `ds` once the consumer resumes the generator.
    The same DisjointSet is mutated in place between yields.
    """
    rows, cols, weights = _off_diagonal_abs(S)
    order = np.argsort(-weights, kind='stable')
    rows, cols, weights = rows[order], cols[order], weights[order]
    ds = DisjointSet(as_array(S).shape[0])
    # boundaries between runs of equal weight
    starts = np.flatnonzero(np.r_[True, weights[1:] != weights[:-1]]) if weights.size else np.array([], dtype=np.intp)
    ends = np.r_[starts[1:], weights.size]
    for start, end in zip(starts.tolist(), ends.tolist()):
        lam = float(weights[start])
        batch = np.column_stack((rows[start:end], cols[start:end]))
        yield lam, ds, batch
        if lam == 0.0:
            return
        for i, j in batch.tolist():
            ds.union(i, j)
    yield 0.0, ds, np.empty((0, 2), dtype=np.intp)


def lambda_for_max_component(S, p_max: int) -> float:
    """
    Smallest value in critical_lambdas(S) + [0] whose threshold graph has no
    component larger than p_max.
    """
    if p_max < 1:
        raise InputError(f"p_max must be at least 1, got {p_max}")
    p = as_array(S).shape[0]
    if p_max >= p:
        return 0.0
    best = None
    for lam, ds, _ in critical_lambda_sweep(S):
        if ds.max_size > p_max:
            break
        best = lam
    return best


def node_screen(S, lam: float) -> frozenset:
    """Nodes i with |S_ij| <= lam for every j != i: the isolated nodes of threshold_graph(S, lam)."""
    arr = np.abs(as_array(S)).copy()
    np.fill_diagonal(arr, -np.inf)
    return frozenset(np.flatnonzero(arr.max(axis=1) <= lam).tolist())


def component_profile(S, lambdas: Iterable[float]) -> ComponentProfile:
    grid = sorted(set(float(lam) for lam in lambdas))
    if not grid:
        raise InputError("component_profile needs at least one lambda")
    sizes = []
    for lam in grid:
        part = threshold_partition(S, lam)
        sizes.append(tuple(sorted(part.sizes(), reverse=True)))
        logger.debug("lambda=%g: %d components, largest %d", lam, part.num_blocks, sizes[-1][0])
    return ComponentProfile(tuple(grid), tuple(sizes))


def auto_lambda_grid(S, p_max: int, top_fraction: float = 0.02, num: Optional[int] = None) -> List[float]:
    """
    Automatic profiling grid, descending.

    Takes the largest `top_fraction` of all critical values, keeps those at or
    above lambda_for_max_component(S, p_max), and thins them to `num` evenly
    spaced points when requested. Falls back to [lambda_{p_max}] when the
    selection is empty.
    """
    if not 0 < top_fraction <= 1:
        raise InputError(f"top_fraction must lie in (0, 1], got {top_fraction}")
    floor = lambda_for_max_component(S, p_max)
    crit = critical_lambdas(S)
    top = crit[len(crit) - max(1, math.ceil(top_fraction * len(crit))):] if crit else []
    grid = sorted((lam for lam in top if lam >= floor), reverse=True)
    if not grid:
        grid = [floor]
    if num is not None and 0 < num < len(grid):
        picks = np.unique(np.linspace(0, len(grid) - 1, num).round().astype(int))
        grid = [grid[k] for k in picks.tolist()]
    return grid
