"""Uniform H-matrix format: shared orthonormal cluster bases per row/column cluster.

Every admissible block is expressed as U_tau * (S_X S_Y*) * V_sigma* against
the bases of its two clusters. Bases come from truncated SVDs of per-cluster
agglomerations, evaluated through thin proxies so the cost stays log-linear:
stacking X_b R_{Y,b}* (QR route) or U_b Sigma_b (scaled route) over the blocks
of a cluster reproduces the agglomeration's singular structure exactly.
"""

from __future__ import annotations

import csv
import threading
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.linalg import solve_triangular

from ._parallel import dynamic_reduce, dynamic_run
from .clustering import BlockClusterTree, sparsity_constant
from .errors import CapacityError
from .hmatrix import HMatrix, MatvecStats, StorageReport
from .kernels import EntryOracle
from .lowrank import SVDForm, ToleranceSpec, aca, recompress, truncation_rank

__all__ = [
    "ClusterBasis",
    "CoefficientPair",
    "UniformHMatrix",
    "BuildStats",
    "optimal_cluster_basis_reference",
    "compress_h_to_uh",
    "build_cluster",
    "direct_build_uh",
    "matvec_uh",
    "storage_report_uh",
    "to_dense_uh",
    "dump_structure_uh",
]


@dataclass
class ClusterBasis:
    """Per-cluster orthonormal-column basis matrices, keyed by cluster id."""

    matrices: dict[int, np.ndarray]

    def rank(self, cid: int) -> int:
        return self.matrices[cid].shape[1]

    def ranks(self) -> dict[int, int]:
        return {cid: m.shape[1] for cid, m in self.matrices.items()}


@dataclass
class CoefficientPair:
    """Factorized coefficient matrix S_b = s_x @ s_y*."""

    s_x: np.ndarray  # (l_tau, k_b)
    s_y: np.ndarray  # (l_sigma, k_b)

    @property
    def inner_rank(self) -> int:
        return self.s_x.shape[1]

    def product(self) -> np.ndarray:
        return self.s_x @ self.s_y.conj().T


@dataclass
class BuildStats:
    """Instrumentation of the direct construction."""

    aca_calls: int = 0
    peak_retained: int = 0
    _retained: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def count_aca(self) -> None:
        with self._lock:
            self.aca_calls += 1

    def retain(self, delta: int) -> None:
        with self._lock:
            self._retained += delta
            self.peak_retained = max(self.peak_retained, self._retained)


@dataclass
class UniformHMatrix:
    """Uniform H-matrix: cluster bases, factorized coefficients, dense leaves."""

    bct: BlockClusterTree
    row_basis: ClusterBasis
    col_basis: ClusterBasis
    coeffs: dict[int, CoefficientPair]
    dense: dict[int, np.ndarray]
    build_stats: BuildStats | None = None

    def __post_init__(self) -> None:
        self._dense_order = sorted(
            self.dense, key=lambda b: -(self.bct.block_shape(b)[0] * self.bct.block_shape(b)[1])
        )
        dtype = np.float64
        for m in self.row_basis.matrices.values():
            dtype = np.result_type(dtype, m.dtype)
        for d in self.dense.values():
            dtype = np.result_type(dtype, d.dtype)
        self._dtype = dtype

    @property
    def shape(self) -> tuple[int, int]:
        return self.bct.shape

    def matvec(self, v: np.ndarray, workers: int = 1, adjoint: bool = False) -> np.ndarray:
        return matvec_uh(self, v, workers=workers, adjoint=adjoint)


def _eps_for(eps, cid: int, side: str) -> float:
    """Per-cluster tolerance from a scalar, a mapping, or a budget-like object."""
    row_part = getattr(eps, "row", None)
    if row_part is not None:
        return float(row_part[cid]) if side == "row" else float(eps.col[cid])
    if isinstance(eps, Mapping):
        return float(eps[cid])
    return float(eps)


def _solve_against_rstar(m: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Return ``m @ inv(r*)`` for upper-triangular r, zero-filling a defective tail.

    The solve is restricted to the leading minor whose diagonal is numerically
    nonzero; trailing columns of the result are set to zero instead of
    aborting on a singular triangle.
    """
    k = r.shape[0]
    if k == 0 or m.shape[1] == 0:
        return m.copy()
    diag = np.abs(np.diag(r))
    scale = float(diag.max())
    if scale == 0.0:
        return np.zeros_like(m)
    alive = diag > 1e-12 * scale
    lead = k if alive.all() else int(np.argmin(alive))
    out = np.zeros_like(m)
    if lead:
        sol = solve_triangular(r[:lead, :lead], m[:, :lead].conj().T, lower=False)
        out[:, :lead] = sol.conj().T
    return out


def _basis_from_stack(pieces: list[np.ndarray], nrows: int, eps_cluster: ToleranceSpec, dtype):
    """SVD of the horizontal stack; returns (U_cluster, sigma_hat, vh_hat, offsets)."""
    widths = [p.shape[1] for p in pieces]
    offsets = np.concatenate([[0], np.cumsum(widths)])
    total = int(offsets[-1])
    if total == 0:
        return np.zeros((nrows, 0), dtype=dtype), np.zeros(0), np.zeros((0, 0), dtype=dtype), offsets
    stack = np.concatenate(pieces, axis=1)
    ub, s, vh = np.linalg.svd(stack, full_matrices=False)
    rank = truncation_rank(s, eps_cluster)
    return ub[:, :rank], s[:rank], vh[:rank], offsets


def optimal_cluster_basis_reference(
    a: np.ndarray,
    bct: BlockClusterTree,
    eps,
    side: str = "row",
    absolute: bool = False,
) -> ClusterBasis:
    """Reference bases from truncated SVDs of the dense agglomeration matrices.

    For each row cluster the admissible blocks sharing it are concatenated
    horizontally and the leading left singular vectors are kept (column side:
    same procedure on the adjoint). Quadratic cost; intended as the oracle the
    fast proxy-based compression is checked against.
    """
    if side not in ("row", "col"):
        raise ValueError(f"side must be 'row' or 'col', got {side!r}")
    cmap = bct.row_map if side == "row" else bct.col_map
    out: dict[int, np.ndarray] = {}
    for cid in sorted(cmap):
        pieces = []
        for other in cmap[cid]:
            pair = (cid, other) if side == "row" else (other, cid)
            r_lo, r_hi, c_lo, c_hi = bct.block_ranges(bct.block_of[pair])
            blk = a[r_lo:r_hi, c_lo:c_hi]
            pieces.append(blk if side == "row" else blk.conj().T)
        agg = np.concatenate(pieces, axis=1)
        u, s, _ = np.linalg.svd(agg, full_matrices=False)
        rank = truncation_rank(s, ToleranceSpec(_eps_for(eps, cid, side), absolute=absolute))
        out[cid] = u[:, :rank].copy()
    return ClusterBasis(out)


def compress_h_to_uh(
    h: HMatrix,
    eps,
    absolute: bool = False,
    proxy: str = "qr",
) -> UniformHMatrix:
    """Log-linear compression of an assembled H-matrix into uniform format.

    Per row cluster, the thin proxy stacks X_b R_{Y,b}* (``proxy='qr'``, with
    R from the QR of each block's right factor) or U_b Sigma_b
    (``proxy='sigma'``); its truncated SVD gives the basis, and coefficients
    come from triangular solves (or a Sigma^{-1/2} scaling) on small matrices
    only. Column clusters are treated symmetrically on the adjoint. Dense
    leaves are carried over by reference.
    """
    if proxy not in ("qr", "sigma"):
        raise ValueError(f"proxy must be 'qr' or 'sigma', got {proxy!r}")
    bct = h.bct
    s_x: dict[int, np.ndarray] = {}
    s_y: dict[int, np.ndarray] = {}
    bases: dict[str, dict[int, np.ndarray]] = {"row": {}, "col": {}}

    for side, cmap in (("row", bct.row_map), ("col", bct.col_map)):
        for cid in sorted(cmap):
            bids = []
            pieces = []
            scalers = []  # per block: R factor (qr proxy) or sigma (sigma proxy)
            for other in cmap[cid]:
                pair = (cid, other) if side == "row" else (other, cid)
                bid = bct.block_of[pair]
                f = h.admissible[bid]
                own = f.U if side == "row" else f.V  # factor living on this cluster
                far = f.V if side == "row" else f.U
                if proxy == "qr":
                    _, r_far = np.linalg.qr((far * f.sigma) if side == "col" else far)
                    # Row side: A|b = (U S)(V)* -> far factor is V, R from QR(V).
                    # Col side: A*|b* = (V)(U S)* -> far factor is U S.
                    piece = (own * (f.sigma if side == "row" else 1.0)) @ r_far.conj().T
                    scalers.append(r_far)
                else:
                    piece = own * f.sigma
                    scalers.append(f.sigma)
                bids.append(bid)
                pieces.append(piece)
            size = bct.row_tree.nodes[cid].size if side == "row" else bct.col_tree.nodes[cid].size
            dtype = pieces[0].dtype if pieces else np.float64
            tol = ToleranceSpec(_eps_for(eps, cid, side), absolute=absolute)
            u_c, s_hat, vh_hat, offs = _basis_from_stack(pieces, size, tol, dtype)
            bases[side][cid] = u_c
            for pos, bid in enumerate(bids):
                m = s_hat[:, None] * vh_hat[:, offs[pos] : offs[pos + 1]]
                if proxy == "qr":
                    coeff = _solve_against_rstar(m, scalers[pos])
                else:
                    sig = scalers[pos]
                    coeff = m / np.sqrt(sig)[None, :] if len(sig) else m
                (s_x if side == "row" else s_y)[bid] = coeff

    coeffs = {bid: CoefficientPair(s_x[bid], s_y[bid]) for bid in s_x}
    return UniformHMatrix(
        bct=bct,
        row_basis=ClusterBasis(bases["row"]),
        col_basis=ClusterBasis(bases["col"]),
        coeffs=coeffs,
        dense=h.dense,
    )


class _FactorEntry:
    """Shared block factorization with one lock and consume-once semantics."""

    __slots__ = ("lock", "computed", "U", "sigma", "V")

    def __init__(self) -> None:
        self.lock = threading.Lock()
        self.computed = False
        self.U = None
        self.sigma = None
        self.V = None


class _FactorStore:
    """One entry per admissible block; locks exist before any worker starts."""

    def __init__(self, block_ids) -> None:
        self.entries = {bid: _FactorEntry() for bid in block_ids}


def _block_tol(eps_block, bid: int) -> ToleranceSpec:
    if isinstance(eps_block, ToleranceSpec):
        return eps_block
    return eps_block[bid]


def _factorize_block(
    oracle: EntryOracle,
    bct: BlockClusterTree,
    bid: int,
    eps_block: ToleranceSpec,
    eps_recompress: ToleranceSpec,
    strategy: str,
) -> SVDForm:
    """ACA + recompression of one admissible block in row-major orientation."""
    r_lo, r_hi, c_lo, c_hi = bct.block_ranges(bid)
    factors = aca(
        lambda i: oracle.row(r_lo + i, c_lo, c_hi),
        lambda j: oracle.col(c_lo + j, r_lo, r_hi),
        r_hi - r_lo,
        c_hi - c_lo,
        eps_block,
        strategy=strategy,
    )
    return recompress(factors, eps_recompress)


def build_cluster(
    oracle: EntryOracle,
    bct: BlockClusterTree,
    cluster_id: int,
    side: str,
    eps_cluster: ToleranceSpec,
    eps_block,
    shared: _FactorStore | None = None,
    eps_recompress: ToleranceSpec | None = None,
    stats: BuildStats | None = None,
    strategy: str = "partial",
) -> tuple[np.ndarray, dict[int, np.ndarray], dict[int, tuple[np.ndarray, np.ndarray]]]:
    """Build one cluster of the uniform format directly from matrix entries.

    For every admissible block of the cluster the factorization U_b S_b V_b*
    is reused when a previous cluster already produced it, and computed by ACA
    exactly once otherwise (guarded by the block lock in ``shared``). The
    scaled factors U_b Sigma_b (row side; V_b Sigma_b on the column side) are
    stacked, the truncated SVD of the stack gives the basis matrix, and the
    block coefficients are Sigma_hat Vhat*|_b Sigma_b^{-1/2}. Factors are
    dropped as soon as both owning clusters consumed them.

    Returns the basis matrix, the per-block coefficient factors, and the
    factors retained for the clusters on the other side.
    """
    if side not in ("row", "col"):
        raise ValueError(f"side must be 'row' or 'col', got {side!r}")
    if eps_recompress is None:
        eps_recompress = ToleranceSpec(eps_cluster.rel_eps / 10.0)
    cmap = bct.row_map if side == "row" else bct.col_map
    others = cmap[cluster_id]
    if shared is None:
        bids_all = [bct.block_of[(cluster_id, o) if side == "row" else (o, cluster_id)] for o in others]
        shared = _FactorStore(bids_all)

    bids: list[int] = []
    pieces: list[np.ndarray] = []
    sigmas: list[np.ndarray] = []
    retained: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for other in others:
        pair = (cluster_id, other) if side == "row" else (other, cluster_id)
        bid = bct.block_of[pair]
        entry = shared.entries[bid]
        with entry.lock:
            if not entry.computed:
                f = _factorize_block(oracle, bct, bid, _block_tol(eps_block, bid), eps_recompress, strategy)
                entry.U, entry.sigma, entry.V = f.U, f.sigma, f.V
                entry.computed = True
                fresh = True
                if stats is not None:
                    stats.count_aca()
            else:
                fresh = False
            sigma = entry.sigma
            if side == "row":
                own, entry.U = entry.U, None
                other_factor = entry.V
            else:
                own, entry.V = entry.V, None
                other_factor = entry.U
            if own is None:
                raise RuntimeError(f"block {bid} consumed twice on the {side} side")
            if not fresh:
                entry.sigma = None  # both sides done, nothing left to retain
        if stats is not None:
            stats.retain(+1 if fresh else -1)
        if fresh:
            retained[bid] = (other_factor, sigma)
        bids.append(bid)
        pieces.append(own * sigma)
        sigmas.append(sigma)

    tree = bct.row_tree if side == "row" else bct.col_tree
    size = tree.nodes[cluster_id].size
    dtype = pieces[0].dtype if pieces else np.float64
    u_c, s_hat, vh_hat, offs = _basis_from_stack(pieces, size, eps_cluster, dtype)
    coeff: dict[int, np.ndarray] = {}
    for pos, bid in enumerate(bids):
        m = s_hat[:, None] * vh_hat[:, offs[pos] : offs[pos + 1]]
        sig = sigmas[pos]
        coeff[bid] = m / np.sqrt(sig)[None, :] if len(sig) else m
    return u_c, coeff, retained


def direct_build_uh(
    oracle: EntryOracle,
    bct: BlockClusterTree,
    eps_global,
    workers: int = 1,
    strategy: str = "partial",
) -> UniformHMatrix:
    """Construct a uniform H-matrix from entries without storing the H-matrix.

    Row and column clusters are sorted jointly by size, largest first (ties by
    cluster id, row before column), and processed with per-block locks so each
    admissible block's ACA runs exactly once no matter how many workers race
    for it. Tolerances follow the eps/3 split for ACA and basis truncation
    with eps/10 recompression. Dense leaves are assembled in parallel at the
    end.
    """
    base = eps_global if isinstance(eps_global, ToleranceSpec) else ToleranceSpec(float(eps_global))
    eps_aca = base.scaled(1.0 / 3.0)
    eps_cluster = base.scaled(1.0 / 3.0)
    eps_rc = base.scaled(1.0 / 10.0)

    jobs = [(cid, "row") for cid in bct.row_map] + [(cid, "col") for cid in bct.col_map]
    trees = {"row": bct.row_tree, "col": bct.col_tree}
    jobs.sort(key=lambda job: (-trees[job[1]].nodes[job[0]].size, job[0], job[1] != "row"))

    store = _FactorStore(bct.admissible_leaves)
    stats = BuildStats()
    row_bases: dict[int, np.ndarray] = {}
    col_bases: dict[int, np.ndarray] = {}
    s_x: dict[int, np.ndarray] = {}
    s_y: dict[int, np.ndarray] = {}

    def run_job(pos: int) -> None:
        cid, side = jobs[pos]
        u_c, coeff, _ = build_cluster(
            oracle,
            bct,
            cid,
            side,
            eps_cluster,
            eps_aca,
            shared=store,
            eps_recompress=eps_rc,
            stats=stats,
            strategy=strategy,
        )
        if side == "row":
            row_bases[cid] = u_c
            s_x.update(coeff)
        else:
            col_bases[cid] = u_c
            s_y.update(coeff)

    dynamic_run(run_job, len(jobs), workers)

    dense_ids = sorted(
        bct.inadmissible_leaves,
        key=lambda b: -(bct.block_shape(b)[0] * bct.block_shape(b)[1]),
    )
    dense_results: list[np.ndarray | None] = [None] * len(dense_ids)

    def do_dense(pos: int) -> None:
        bid = dense_ids[pos]
        r_lo, r_hi, c_lo, c_hi = bct.block_ranges(bid)
        dense_results[pos] = oracle.dense_block((r_lo, r_hi), (c_lo, c_hi))

    dynamic_run(do_dense, len(dense_ids), workers)

    coeffs = {bid: CoefficientPair(s_x[bid], s_y[bid]) for bid in s_x}
    return UniformHMatrix(
        bct=bct,
        row_basis=ClusterBasis(row_bases),
        col_basis=ClusterBasis(col_bases),
        coeffs=coeffs,
        dense=dict(zip(dense_ids, dense_results)),
        build_stats=stats,
    )


def matvec_uh(
    u: UniformHMatrix,
    v: np.ndarray,
    workers: int = 1,
    adjoint: bool = False,
    stats: MatvecStats | None = None,
) -> np.ndarray:
    """Two-phase product: stage per-block vectors from one side's bases, then
    accumulate through the other side, with dense leaves folded into phase 2.

    Each staging vector is written by exactly one phase-1 task and read by
    exactly one phase-2 task; the phases are separated by a barrier (the pool
    join). Output accumulates per worker and is reduced at the end.
    """
    v = np.asarray(v)
    n_rows, n_cols = u.shape
    n_in, n_out = (n_rows, n_cols) if adjoint else (n_cols, n_rows)
    if v.shape != (n_in,):
        raise ValueError(f"vector of shape {v.shape} does not match operator input size {n_in}")
    dtype = np.result_type(v.dtype, u._dtype)
    bct = u.bct

    in_basis = u.row_basis if adjoint else u.col_basis
    out_basis = u.col_basis if adjoint else u.row_basis
    in_map = bct.row_map if adjoint else bct.col_map
    out_map = bct.col_map if adjoint else bct.row_map
    in_tree = bct.row_tree if adjoint else bct.col_tree
    out_tree = bct.col_tree if adjoint else bct.row_tree

    in_ids = sorted(in_map, key=lambda c: -in_tree.nodes[c].size)
    out_ids = sorted(out_map, key=lambda c: -out_tree.nodes[c].size)
    stage: dict[int, np.ndarray] = {}

    def phase1(pos: int) -> None:
        cid = in_ids[pos]
        node = in_tree.nodes[cid]
        pre = in_basis.matrices[cid].conj().T @ v[node.lo : node.hi]
        for other in in_map[cid]:
            pair = (other, cid) if not adjoint else (cid, other)
            bid = bct.block_of[pair]
            pair_coeff = u.coeffs[bid]
            small = pair_coeff.s_x if adjoint else pair_coeff.s_y
            stage[bid] = small.conj().T @ pre

    dynamic_run(phase1, len(in_ids), workers)

    n_dense = len(u._dense_order)

    def phase2(pos: int, w: np.ndarray) -> None:
        if pos < len(out_ids):
            cid = out_ids[pos]
            node = out_tree.nodes[cid]
            basis = out_basis.matrices[cid]
            acc = np.zeros(basis.shape[1], dtype=dtype)
            for other in out_map[cid]:
                pair = (cid, other) if not adjoint else (other, cid)
                bid = bct.block_of[pair]
                pair_coeff = u.coeffs[bid]
                small = pair_coeff.s_y if adjoint else pair_coeff.s_x
                acc += small @ stage[bid]
                if stats is not None:
                    stats.count()
            w[node.lo : node.hi] += basis @ acc
        else:
            bid = u._dense_order[pos - len(out_ids)]
            r_lo, r_hi, c_lo, c_hi = bct.block_ranges(bid)
            d = u.dense[bid]
            if adjoint:
                w[c_lo:c_hi] += d.conj().T @ v[r_lo:r_hi]
            else:
                w[r_lo:r_hi] += d @ v[c_lo:c_hi]
            if stats is not None:
                stats.count()

    partials = dynamic_reduce(
        phase2, len(out_ids) + n_dense, workers, lambda: np.zeros(n_out, dtype=dtype)
    )
    out = partials[0]
    for w in partials[1:]:
        out += w
    return out


def storage_report_uh(u: UniformHMatrix) -> StorageReport:
    """Element counts: cluster bases plus factorized coefficients plus dense part."""
    adm = 0
    l_max = 0
    for cid, m in u.row_basis.matrices.items():
        adm += m.size
        l_max = max(l_max, m.shape[1])
    for cid, m in u.col_basis.matrices.items():
        adm += m.size
        l_max = max(l_max, m.shape[1])
    k_max = 0
    for pair_coeff in u.coeffs.values():
        adm += pair_coeff.s_x.size + pair_coeff.s_y.size
        k_max = max(k_max, pair_coeff.inner_rank)
    dense = sum(d.size for d in u.dense.values())
    return StorageReport(
        adm_elements=adm,
        dense_elements=dense,
        total_elements=adm + dense,
        bytes_estimate=(adm + dense) * 16,
        c_sp=sparsity_constant(u.bct),
        k_max=k_max,
        depth_row=u.bct.row_tree.depth,
        depth_col=u.bct.col_tree.depth,
        l_max=l_max,
    )


def to_dense_uh(u: UniformHMatrix, cap: int = 4_000_000) -> np.ndarray:
    """Expand every admissible block as U_tau (S_X S_Y*) V_sigma* plus the dense part."""
    m, n = u.shape
    if m * n > cap:
        raise CapacityError(f"dense reconstruction of {m * n} elements exceeds cap {cap}")
    out = np.zeros((m, n), dtype=u._dtype)
    for bid, pair_coeff in u.coeffs.items():
        blk = u.bct.nodes[bid]
        r_lo, r_hi, c_lo, c_hi = u.bct.block_ranges(bid)
        left = u.row_basis.matrices[blk.row] @ pair_coeff.s_x
        right = u.col_basis.matrices[blk.col] @ pair_coeff.s_y
        out[r_lo:r_hi, c_lo:c_hi] = left @ right.conj().T
    for bid, d in u.dense.items():
        r_lo, r_hi, c_lo, c_hi = u.bct.block_ranges(bid)
        out[r_lo:r_hi, c_lo:c_hi] = d
    return out


def dump_structure_uh(u: UniformHMatrix, bases_path, coeffs_path) -> None:
    """CSV dumps: cluster_id,side,size,rank for bases; block_id,k_b,l_tau,l_sigma for coefficients."""
    with open(bases_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cluster_id", "side", "size", "rank"])
        for cid in sorted(u.row_basis.matrices):
            writer.writerow([cid, "row", u.bct.row_tree.nodes[cid].size, u.row_basis.rank(cid)])
        for cid in sorted(u.col_basis.matrices):
            writer.writerow([cid, "col", u.bct.col_tree.nodes[cid].size, u.col_basis.rank(cid)])
    with open(coeffs_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["block_id", "k_b", "l_tau", "l_sigma"])
        for bid in sorted(u.coeffs):
            pair_coeff = u.coeffs[bid]
            writer.writerow([bid, pair_coeff.inner_rank, pair_coeff.s_x.shape[0], pair_coeff.s_y.shape[0]])
