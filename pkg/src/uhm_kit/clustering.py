"""Cluster trees via PCA cardinality splits and block cluster trees.

A cluster tree recursively halves an index set along its principal axis and
reorders the indices so every cluster owns a contiguous range in tree order.
A block cluster tree pairs two cluster trees and partitions the index product
into admissible (far-field) and inadmissible (near-field) leaves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import AABB, Geometry, aabb_diam, aabb_dist, bbox

__all__ = [
    "Cluster",
    "ClusterTree",
    "AdmissibilityParams",
    "BlockNode",
    "BlockClusterTree",
    "build_cluster_tree",
    "is_admissible",
    "build_block_tree",
    "sparsity_constant",
    "storage_bounds",
]


@dataclass
class Cluster:
    """A node of a cluster tree owning the tree-order range [lo, hi)."""

    index: int
    lo: int
    hi: int
    level: int
    bbox: AABB
    children: tuple[int, ...] = ()

    @property
    def size(self) -> int:
        return self.hi - self.lo

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass
class ClusterTree:
    """Binary cluster tree plus the permutation into tree order.

    ``permutation[t]`` is the original index stored at tree position ``t``.
    """

    permutation: np.ndarray
    nodes: list[Cluster]
    n_min: int
    root: int = 0

    def __post_init__(self) -> None:
        self.permutation = np.asarray(self.permutation, dtype=np.intp)
        inv = np.empty_like(self.permutation)
        inv[self.permutation] = np.arange(len(self.permutation))
        self._inverse = inv

    @property
    def inverse_permutation(self) -> np.ndarray:
        """Original index -> tree position."""
        return self._inverse

    @property
    def size(self) -> int:
        return len(self.permutation)

    @property
    def depth(self) -> int:
        """Number of levels, max level + 1."""
        return max(c.level for c in self.nodes) + 1

    def leaves(self) -> list[Cluster]:
        return [c for c in self.nodes if c.is_leaf]

    def min_leaf_size(self) -> int:
        return min(c.size for c in self.leaves())

    def dump_text(self) -> str:
        lines = []
        for c in self.nodes:
            lines.append(f"{c.index} [{c.lo},{c.hi}) level={c.level} lo={c.bbox.lo} hi={c.bbox.hi}")
        return "\n".join(lines)


def _principal_projection(pts: np.ndarray) -> np.ndarray:
    """Projection of points onto the dominant covariance eigenvector."""
    center = pts - pts.mean(axis=0)
    cov = center.T @ center
    _, vecs = np.linalg.eigh(cov)
    return center @ vecs[:, -1]


def build_cluster_tree(geometry: Geometry, n_min: int = 30) -> ClusterTree:
    """Recursive PCA median split; a node with more than 2*n_min indices is halved.

    Children sizes differ by at most one. Ties in the projected coordinate are
    broken by original index order, which also covers degenerate clusters of
    coincident points (they fall back to an index-order split), so trees are
    deterministic for a given geometry.
    """
    if n_min < 1:
        raise ValueError(f"n_min must be >= 1, got {n_min}")
    pts = geometry.points
    n = len(geometry)
    permutation = np.empty(n, dtype=np.intp)
    nodes: list[Cluster] = []

    def build(idx: np.ndarray, offset: int, level: int) -> int:
        node_id = len(nodes)
        nodes.append(Cluster(node_id, offset, offset + len(idx), level, bbox(geometry, idx)))
        if len(idx) <= 2 * n_min:
            permutation[offset : offset + len(idx)] = idx
            return node_id
        proj = _principal_projection(pts[idx])
        order = np.lexsort((idx, proj))
        half = (len(idx) + 1) // 2
        left = build(idx[order[:half]], offset, level + 1)
        right = build(idx[order[half:]], offset + half, level + 1)
        nodes[node_id].children = (left, right)
        return node_id

    build(np.arange(n, dtype=np.intp), 0, 0)
    return ClusterTree(permutation, nodes, n_min=n_min)


@dataclass(frozen=True)
class AdmissibilityParams:
    """Geometric separation criterion: eta * dist must exceed a cluster diameter."""

    eta: float = 10.0
    criterion: str = "weak"  # "strong" compares against the max diameter

    def __post_init__(self) -> None:
        if self.eta <= 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if self.criterion not in ("strong", "weak"):
            raise ValueError(f"criterion must be 'strong' or 'weak', got {self.criterion!r}")


def is_admissible(a: AABB, b: AABB, p: AdmissibilityParams) -> bool:
    """Strict inequality; the boundary case eta*dist == diam is inadmissible."""
    da, db = aabb_diam(a), aabb_diam(b)
    diam = max(da, db) if p.criterion == "strong" else min(da, db)
    return p.eta * aabb_dist(a, b) > diam


@dataclass
class BlockNode:
    """A node of the block cluster tree, a pair of row/column cluster ids."""

    index: int
    row: int
    col: int
    children: tuple[int, ...] = ()
    admissible: bool = False  # meaningful for leaves only

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass
class BlockClusterTree:
    """Leaf partition of I x J into admissible and inadmissible blocks."""

    row_tree: ClusterTree
    col_tree: ClusterTree
    params: AdmissibilityParams
    nodes: list[BlockNode]
    admissible_leaves: list[int]
    inadmissible_leaves: list[int]
    row_map: dict[int, list[int]]  # row cluster id -> sigma ids over admissible leaves
    col_map: dict[int, list[int]]
    block_of: dict[tuple[int, int], int]

    @property
    def row_clusters(self) -> list[int]:
        """Row cluster ids occurring in admissible leaves (the set Lrc)."""
        return sorted(self.row_map)

    @property
    def col_clusters(self) -> list[int]:
        return sorted(self.col_map)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.row_tree.size, self.col_tree.size)

    def block_shape(self, block_id: int) -> tuple[int, int]:
        blk = self.nodes[block_id]
        return (self.row_tree.nodes[blk.row].size, self.col_tree.nodes[blk.col].size)

    def block_ranges(self, block_id: int) -> tuple[int, int, int, int]:
        """(row_lo, row_hi, col_lo, col_hi) of the block in tree order."""
        blk = self.nodes[block_id]
        r = self.row_tree.nodes[blk.row]
        c = self.col_tree.nodes[blk.col]
        return (r.lo, r.hi, c.lo, c.hi)


def build_block_tree(
    row: ClusterTree, col: ClusterTree, p: AdmissibilityParams
) -> BlockClusterTree:
    """Descend from (root, root); admissible pairs become leaves, leaf x leaf pairs dense.

    When exactly one cluster of a pair still has children only that side is
    subdivided, otherwise both sides are.
    """
    nodes: list[BlockNode] = []
    adm: list[int] = []
    dense: list[int] = []
    row_map: dict[int, list[int]] = {}
    col_map: dict[int, list[int]] = {}
    block_of: dict[tuple[int, int], int] = {}

    def build(rid: int, cid: int) -> int:
        node_id = len(nodes)
        nodes.append(BlockNode(node_id, rid, cid))
        block_of[(rid, cid)] = node_id
        rc = row.nodes[rid]
        cc = col.nodes[cid]
        if is_admissible(rc.bbox, cc.bbox, p):
            nodes[node_id].admissible = True
            adm.append(node_id)
            row_map.setdefault(rid, []).append(cid)
            col_map.setdefault(cid, []).append(rid)
            return node_id
        if rc.is_leaf and cc.is_leaf:
            dense.append(node_id)
            return node_id
        rows = rc.children if not rc.is_leaf else (rid,)
        cols = cc.children if not cc.is_leaf else (cid,)
        nodes[node_id].children = tuple(build(r, c) for r in rows for c in cols)
        return node_id

    build(row.root, col.root)
    return BlockClusterTree(
        row_tree=row,
        col_tree=col,
        params=p,
        nodes=nodes,
        admissible_leaves=adm,
        inadmissible_leaves=dense,
        row_map=row_map,
        col_map=col_map,
        block_of=block_of,
    )


def sparsity_constant(bct: BlockClusterTree) -> int:
    """Maximum number of admissible leaves any single cluster participates in."""
    if not bct.admissible_leaves:
        return 0
    return max(
        max(len(v) for v in bct.row_map.values()),
        max(len(v) for v in bct.col_map.values()),
    )


def storage_bounds(bct: BlockClusterTree, k_max: int, l_max: int) -> tuple[float, float]:
    """Element-count bounds for the admissible parts of the two formats.

    The H bound covers factor pairs with ranks up to k_max; the uniform bound
    covers cluster bases with ranks up to l_max plus the coefficient matrices,
    whose block count is bounded via the measured minimal leaf size.
    """
    if k_max < 0 or l_max < 0:
        raise ValueError("rank bounds must be >= 0")
    csp = sparsity_constant(bct)
    n_i, n_j = bct.shape
    per_level = bct.row_tree.depth * n_i + bct.col_tree.depth * n_j
    h_bound = csp * k_max * per_level
    n_min = min(bct.row_tree.min_leaf_size(), bct.col_tree.min_leaf_size())
    uh_bound = l_max * per_level + l_max**2 * 2 * csp * min(n_i, n_j) / n_min
    return float(h_bound), float(uh_bound)
