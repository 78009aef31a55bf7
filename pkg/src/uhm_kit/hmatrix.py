"""Regular H-matrix assembly, storage accounting, parallel matvec, dense reconstruction.

Admissible blocks are held in orthonormal SVD form (the output of ACA plus
recompression) so they can feed the uniform compression directly; inadmissible
blocks are materialized densely.
"""

from __future__ import annotations

import csv
import threading
from dataclasses import dataclass, field

import numpy as np

from ._parallel import dynamic_reduce, dynamic_run
from .clustering import BlockClusterTree, sparsity_constant
from .errors import CapacityError
from .kernels import EntryOracle
from .lowrank import SVDForm, ToleranceSpec, aca, recompress

__all__ = ["HMatrix", "StorageReport", "MatvecStats", "assemble_h", "matvec_h", "storage_report", "to_dense", "dump_structure"]


@dataclass
class MatvecStats:
    """Instrumentation for matvec runs; counts every leaf block touched."""

    leaves_touched: int = 0

    def __post_init__(self) -> None:
        self._lock = threading.Lock()

    def count(self, k: int = 1) -> None:
        with self._lock:
            self.leaves_touched += k


@dataclass
class HMatrix:
    """Block low-rank approximation over a block cluster tree."""

    bct: BlockClusterTree
    admissible: dict[int, SVDForm]
    dense: dict[int, np.ndarray]
    tol_used: ToleranceSpec

    def __post_init__(self) -> None:
        # Large-to-small orders are frozen here so matvec scheduling is cheap.
        self._adm_order = sorted(
            self.admissible,
            key=lambda b: -(self.admissible[b].rank * sum(self.bct.block_shape(b))),
        )
        self._dense_order = sorted(
            self.dense, key=lambda b: -(self.bct.block_shape(b)[0] * self.bct.block_shape(b)[1])
        )
        dtype = np.float64
        for f in self.admissible.values():
            dtype = np.result_type(dtype, f.U.dtype)
        for d in self.dense.values():
            dtype = np.result_type(dtype, d.dtype)
        self._dtype = dtype

    @property
    def shape(self) -> tuple[int, int]:
        return self.bct.shape

    def matvec(self, v: np.ndarray, workers: int = 1, adjoint: bool = False) -> np.ndarray:
        return matvec_h(self, v, workers=workers, adjoint=adjoint)


@dataclass
class StorageReport:
    """Exact element counts of a stored instance plus its measured constants."""

    adm_elements: int
    dense_elements: int
    total_elements: int
    bytes_estimate: int
    c_sp: int
    k_max: int
    depth_row: int
    depth_col: int
    l_max: int | None = None
    adm_elements_pairs: int | None = None  # factor-pair count k_b*(|tau|+|sigma|)


def assemble_h(
    oracle: EntryOracle,
    bct: BlockClusterTree,
    eps_block: ToleranceSpec,
    eps_recompress: ToleranceSpec,
    workers: int = 1,
    strategy: str = "partial",
) -> HMatrix:
    """ACA + recompression on every admissible leaf, dense fill elsewhere.

    Blocks are distributed over the workers largest first; per-block work is
    deterministic, so the stored factors do not depend on the worker count.
    """
    adm_ids = sorted(
        bct.admissible_leaves,
        key=lambda b: -(bct.block_shape(b)[0] * bct.block_shape(b)[1]),
    )
    adm_results: list[SVDForm | None] = [None] * len(adm_ids)

    def do_admissible(pos: int) -> None:
        bid = adm_ids[pos]
        r_lo, r_hi, c_lo, c_hi = bct.block_ranges(bid)
        factors = aca(
            lambda i: oracle.row(r_lo + i, c_lo, c_hi),
            lambda j: oracle.col(c_lo + j, r_lo, r_hi),
            r_hi - r_lo,
            c_hi - c_lo,
            eps_block,
            strategy=strategy,
        )
        adm_results[pos] = recompress(factors, eps_recompress)

    dynamic_run(do_admissible, len(adm_ids), workers)

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

    return HMatrix(
        bct=bct,
        admissible=dict(zip(adm_ids, adm_results)),
        dense=dict(zip(dense_ids, dense_results)),
        tol_used=eps_block,
    )


def matvec_h(
    h: HMatrix,
    v: np.ndarray,
    workers: int = 1,
    adjoint: bool = False,
    stats: MatvecStats | None = None,
) -> np.ndarray:
    """w = A v (or A* v) with per-worker accumulators reduced at the end."""
    v = np.asarray(v)
    n_rows, n_cols = h.shape
    n_in, n_out = (n_rows, n_cols) if adjoint else (n_cols, n_rows)
    if v.shape != (n_in,):
        raise ValueError(f"vector of shape {v.shape} does not match operator input size {n_in}")
    dtype = np.result_type(v.dtype, h._dtype)
    blocks = [(bid, True) for bid in h._adm_order] + [(bid, False) for bid in h._dense_order]

    def apply_block(pos: int, w: np.ndarray) -> None:
        bid, is_adm = blocks[pos]
        r_lo, r_hi, c_lo, c_hi = h.bct.block_ranges(bid)
        if adjoint:
            in_lo, in_hi, out_lo, out_hi = r_lo, r_hi, c_lo, c_hi
        else:
            in_lo, in_hi, out_lo, out_hi = c_lo, c_hi, r_lo, r_hi
        seg = v[in_lo:in_hi]
        if is_adm:
            f = h.admissible[bid]
            if f.rank:
                if adjoint:
                    w[out_lo:out_hi] += f.V @ (f.sigma * (f.U.conj().T @ seg))
                else:
                    w[out_lo:out_hi] += f.U @ (f.sigma * (f.V.conj().T @ seg))
        else:
            d = h.dense[bid]
            w[out_lo:out_hi] += (d.conj().T if adjoint else d) @ seg
        if stats is not None:
            stats.count()

    partials = dynamic_reduce(apply_block, len(blocks), workers, lambda: np.zeros(n_out, dtype=dtype))
    out = partials[0]
    for w in partials[1:]:
        out += w
    return out


def storage_report(h: HMatrix) -> StorageReport:
    """Element counts of the stored representation (SVD form for admissible blocks)."""
    adm = 0
    pairs = 0
    k_max = 0
    for bid, f in h.admissible.items():
        m, n = h.bct.block_shape(bid)
        adm += f.rank * (m + n + 1)
        pairs += f.rank * (m + n)
        k_max = max(k_max, f.rank)
    dense = sum(d.size for d in h.dense.values())
    return StorageReport(
        adm_elements=adm,
        dense_elements=dense,
        total_elements=adm + dense,
        bytes_estimate=(adm + dense) * 16,
        c_sp=sparsity_constant(h.bct),
        k_max=k_max,
        depth_row=h.bct.row_tree.depth,
        depth_col=h.bct.col_tree.depth,
        adm_elements_pairs=pairs,
    )


def to_dense(h: HMatrix, cap: int = 4_000_000) -> np.ndarray:
    """Assemble every leaf into its rectangle of the full matrix."""
    m, n = h.shape
    if m * n > cap:
        raise CapacityError(f"dense reconstruction of {m * n} elements exceeds cap {cap}")
    out = np.zeros((m, n), dtype=h._dtype)
    for bid, f in h.admissible.items():
        r_lo, r_hi, c_lo, c_hi = h.bct.block_ranges(bid)
        out[r_lo:r_hi, c_lo:c_hi] = f.reconstruct()
    for bid, d in h.dense.items():
        r_lo, r_hi, c_lo, c_hi = h.bct.block_ranges(bid)
        out[r_lo:r_hi, c_lo:c_hi] = d
    return out


def dump_structure(h: HMatrix, path) -> None:
    """CSV leaf listing: block_id,row_lo,row_hi,col_lo,col_hi,kind,rank."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["block_id", "row_lo", "row_hi", "col_lo", "col_hi", "kind", "rank"])
        for bid in h.bct.admissible_leaves:
            r_lo, r_hi, c_lo, c_hi = h.bct.block_ranges(bid)
            writer.writerow([bid, r_lo, r_hi, c_lo, c_hi, "adm", h.admissible[bid].rank])
        for bid in h.bct.inadmissible_leaves:
            r_lo, r_hi, c_lo, c_hi = h.bct.block_ranges(bid)
            writer.writerow([bid, r_lo, r_hi, c_lo, c_hi, "dense", min(r_hi - r_lo, c_hi - c_lo)])
