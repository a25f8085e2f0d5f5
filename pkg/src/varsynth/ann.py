"""Approximate k-NN search with a forest of random projection trees.

Each tree splits its node's points at the median of their projections on a
random unit direction; every node on the same tree level shares a
direction. A query is routed down all trees and the points found in at
least ``v`` of the reached leaves are rescored exactly by Euclidean
distance.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .embeddings import EmbeddingTable

MAGIC = b"MRPT1"
_HEADER = struct.Struct("<IIIqI")  # dim, T, leaf_size, seed, n_points


class IndexFormatError(ValueError):
    pass


@dataclass
class KnnResult:
    neighbors: list[tuple[str, float]]
    exhausted: bool
    indices: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0, np.int64))

    @property
    def words(self) -> list[str]:
        return [w for w, _ in self.neighbors]

    def __len__(self) -> int:
        return len(self.neighbors)


@dataclass
class RpTree:
    """One random projection tree.

    Internal nodes are numbered from 0; a child reference ``c < 0`` points
    to leaf ``-c - 1``. ``root`` follows the same convention.
    """

    directions: np.ndarray  # (n_levels, dim) unit rows
    thresholds: np.ndarray  # (n_internal,)
    left: np.ndarray  # (n_internal,) int
    right: np.ndarray
    root: int
    leaves: list[np.ndarray]
    leaf_depths: list[int]

    def route(self, projections: np.ndarray) -> int:
        """Leaf id reached by a query whose level projections are given."""
        node = self.root
        depth = 0
        while node >= 0:
            if projections[depth] <= self.thresholds[node]:
                node = self.left[node]
            else:
                node = self.right[node]
            depth += 1
        return -node - 1

    @property
    def depth(self) -> int:
        return max(self.leaf_depths)


def _tree_rng(seed: int, tree_id: int) -> np.random.Generator:
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, tree_id])


def _project(rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    # row-wise sums give a point the same projection whatever batch it is in
    return (rows * u).sum(axis=1)


def _median_split(proj: np.ndarray):
    """Threshold and left mask, or ``None`` if all projections coincide."""
    thr = float(np.median(proj))
    mask = proj <= thr
    if mask.all():
        distinct = np.unique(proj)
        if len(distinct) == 1:
            return None
        thr = float(distinct[-2])
        mask = proj <= thr
    return thr, mask


def _build_tree(points: np.ndarray, leaf_size: int, rng: np.random.Generator) -> RpTree:
    n, dim = points.shape
    directions: list[np.ndarray] = []
    thresholds: list[float] = []
    left: list[int] = []
    right: list[int] = []
    leaves: list[np.ndarray] = []
    leaf_depths: list[int] = []
    root = 0

    def attach(parent, side, ref):
        nonlocal root
        if parent is None:
            root = ref
        elif side == 0:
            left[parent] = ref
        else:
            right[parent] = ref

    level = [(np.arange(n, dtype=np.int64), None, 0)]
    depth = 0
    while level:
        u = None
        if any(len(idx) > leaf_size for idx, _, _ in level):
            u = rng.standard_normal(dim)
            u /= np.linalg.norm(u)
            directions.append(u)
        nxt = []
        for idx, parent, side in level:
            split = None
            if len(idx) > leaf_size:
                split = _median_split(_project(points[idx], u))
            if split is None:
                # identical projections cannot be separated; the leaf may exceed leaf_size
                leaves.append(np.sort(idx))
                leaf_depths.append(depth)
                attach(parent, side, -len(leaves))
                continue
            thr, mask = split
            node = len(thresholds)
            thresholds.append(thr)
            left.append(0)
            right.append(0)
            attach(parent, side, node)
            nxt.append((idx[mask], node, 0))
            nxt.append((idx[~mask], node, 1))
        level = nxt
        depth += 1

    return RpTree(
        directions=np.array(directions, dtype=np.float64).reshape(-1, dim),
        thresholds=np.array(thresholds, dtype=np.float64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        root=root,
        leaves=leaves,
        leaf_depths=leaf_depths,
    )


def _sorted_neighbors(table: EmbeddingTable, idx: np.ndarray, q: np.ndarray, k: int) -> KnnResult:
    """Exact top-k of ``idx`` by Euclidean distance, ties by word order."""
    diff = table.vectors[idx] - q
    dist = np.sqrt((diff * diff).sum(axis=1))
    ranks = table.word_ranks[idx]
    exhausted = len(idx) < k
    if len(idx) > k:
        cutoff = np.partition(dist, k - 1)[k - 1]
        keep = dist <= cutoff
        idx, dist, ranks = idx[keep], dist[keep], ranks[keep]
    order = np.lexsort((ranks, dist))[:k]
    idx = idx[order]
    words = table.words
    neighbors = [(words[i], float(d)) for i, d in zip(idx, dist[order])]
    return KnnResult(neighbors=neighbors, exhausted=exhausted, indices=idx)


def _check_query(table: EmbeddingTable, q, k: int) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (table.dim,):
        raise ValueError(f"query has shape {q.shape}, index dimension is {table.dim}")
    if k < 1:
        raise ValueError("k must be positive")
    return q


def exact_knn(table: EmbeddingTable, q, k: int) -> KnnResult:
    """Brute-force k nearest neighbors by Euclidean distance."""
    if len(table) == 0:
        raise ValueError("cannot search an empty table")
    q = _check_query(table, q, k)
    return _sorted_neighbors(table, np.arange(len(table), dtype=np.int64), q, k)


class MrptIndex:
    """Forest of ``T`` random projection trees over an embedding table."""

    def __init__(self, table: EmbeddingTable, trees: Sequence[RpTree], leaf_size: int, seed: int):
        self.table = table
        self.trees = list(trees)
        self.leaf_size = leaf_size
        self.seed = seed
        self._stack_directions()

    def _stack_directions(self):
        dim = self.table.dim
        blocks = [t.directions for t in self.trees]
        self._all_dirs = np.vstack(blocks) if blocks else np.empty((0, dim))
        self._offsets = np.cumsum([0] + [len(b) for b in blocks])

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @classmethod
    def build(cls, table: EmbeddingTable, n_trees: int = 32, leaf_size: int = 128, seed: int = 0):
        if len(table) == 0:
            raise ValueError("cannot index an empty table")
        if n_trees < 1 or leaf_size < 1:
            raise ValueError("n_trees and leaf_size must be positive")
        trees = [
            _build_tree(table.vectors, leaf_size, _tree_rng(seed, t)) for t in range(n_trees)
        ]
        return cls(table, trees, leaf_size, seed)

    def candidates(self, q, v: int) -> np.ndarray:
        """Point indices reached by at least ``v`` trees, ascending."""
        if not 1 <= v <= self.n_trees:
            raise ValueError(f"vote threshold v={v} must lie in [1, {self.n_trees}]")
        q = np.asarray(q, dtype=np.float64)
        proj = _project(self._all_dirs, q)
        reached = []
        for t, tree in enumerate(self.trees):
            leaf = tree.route(proj[self._offsets[t]:self._offsets[t + 1]])
            reached.append(tree.leaves[leaf])
        if v == 1:
            return np.unique(np.concatenate(reached))
        votes = np.bincount(np.concatenate(reached), minlength=len(self.table))
        return np.flatnonzero(votes >= v)

    def query(self, q, k: int, v: int = 2) -> KnnResult:
        q = _check_query(self.table, q, k)
        cand = self.candidates(q, v)
        return _sorted_neighbors(self.table, cand, q, k)

    def stats(self) -> dict:
        depths = [d for t in self.trees for d in t.leaf_depths]
        sizes = [len(leaf) for t in self.trees for leaf in t.leaves]
        hist: dict[int, int] = {}
        for d in depths:
            hist[d] = hist.get(d, 0) + 1
        return {
            "points": len(self.table),
            "dim": self.table.dim,
            "trees": self.n_trees,
            "leaf_size": self.leaf_size,
            "leaves": len(sizes),
            "max_leaf": max(sizes),
            "depth_histogram": dict(sorted(hist.items())),
        }

    # serialization

    def save(self, path) -> None:
        with Path(path).open("wb") as fh:
            fh.write(MAGIC)
            fh.write(_HEADER.pack(self.table.dim, self.n_trees, self.leaf_size, self.seed,
                                  len(self.table)))
            for tree in self.trees:
                fh.write(struct.pack("<I", len(tree.directions)))
                fh.write(tree.directions.astype("<f8").tobytes())
                fh.write(struct.pack("<Ii", len(tree.thresholds), tree.root))
                fh.write(tree.thresholds.astype("<f8").tobytes())
                fh.write(tree.left.astype("<i4").tobytes())
                fh.write(tree.right.astype("<i4").tobytes())
                fh.write(struct.pack("<I", len(tree.leaves)))
                for leaf, depth in zip(tree.leaves, tree.leaf_depths):
                    fh.write(struct.pack("<II", len(leaf), depth))
                    fh.write(leaf.astype("<i4").tobytes())

    @classmethod
    def load(cls, path, table: EmbeddingTable) -> "MrptIndex":
        data = Path(path).read_bytes()
        if data[: len(MAGIC)] != MAGIC:
            raise IndexFormatError(f"{path}: not an MRPT1 index file")
        pos = len(MAGIC)

        def take(fmt):
            nonlocal pos
            vals = struct.unpack_from(fmt, data, pos)
            pos += struct.calcsize(fmt)
            return vals

        def take_array(dtype, count):
            nonlocal pos
            arr = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
            pos += arr.nbytes
            return arr.astype(dtype.lstrip("<"))

        try:
            dim, n_trees, leaf_size, seed, n_points = take(_HEADER.format)
            if dim != table.dim:
                raise IndexFormatError(
                    f"{path}: index dimension {dim} does not match table dimension {table.dim}"
                )
            if n_points != len(table):
                raise IndexFormatError(
                    f"{path}: index covers {n_points} points, table has {len(table)}"
                )
            trees = []
            for _ in range(n_trees):
                (n_levels,) = take("<I")
                directions = take_array("<f8", n_levels * dim).reshape(n_levels, dim)
                n_internal, root = take("<Ii")
                thresholds = take_array("<f8", n_internal)
                left = take_array("<i4", n_internal).astype(np.int64)
                right = take_array("<i4", n_internal).astype(np.int64)
                (n_leaves,) = take("<I")
                leaves, depths = [], []
                for _ in range(n_leaves):
                    size, depth = take("<II")
                    leaves.append(take_array("<i4", size).astype(np.int64))
                    depths.append(depth)
                trees.append(RpTree(directions, thresholds, left, right, root, leaves, depths))
        except (struct.error, ValueError) as exc:
            if isinstance(exc, IndexFormatError):
                raise
            raise IndexFormatError(f"{path}: truncated or corrupt index ({exc})") from None
        if pos != len(data):
            raise IndexFormatError(f"{path}: {len(data) - pos} trailing bytes")
        return cls(table, trees, leaf_size, seed)


def recall_at_k(index: MrptIndex, queries, k: int, v: int) -> float:
    """Mean fraction of the exact top-k recovered by ``index.query``."""
    queries = list(queries)
    if not queries:
        raise ValueError("need at least one query")
    total = 0.0
    for q in queries:
        approx = set(index.query(q, k, v).words)
        exact = set(exact_knn(index.table, q, k).words)
        total += len(approx & exact) / k
    return total / len(queries)
