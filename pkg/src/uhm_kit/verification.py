"""Error estimation and bound checking for compressed operators.

Spectral errors are estimated by power iteration on the difference operator,
the uniform-compression error bound is verified exactly on dense-materializable
instances, and a global tolerance can be budgeted into per-cluster absolute
truncation thresholds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .clustering import BlockClusterTree
from .errors import CapacityError
from .hmatrix import HMatrix, matvec_h
from .uniform import UniformHMatrix, matvec_uh, to_dense_uh

__all__ = [
    "ErrorReport",
    "ToleranceBudget",
    "spectral_norm_estimate",
    "compression_error",
    "theorem_51_check",
    "tolerance_budget",
]


@dataclass
class ErrorReport:
    """Power-iteration estimate of a relative spectral error."""

    rel_spectral_estimate: float
    iterations: int
    residual: float
    frobenius_components: dict[int, float] | None = None


@dataclass
class ToleranceBudget:
    """Per-cluster absolute spectral tolerances derived from a global target."""

    row: dict[int, float]
    col: dict[int, float]

    def __post_init__(self) -> None:
        if any(v <= 0 for v in self.row.values()) or any(v <= 0 for v in self.col.values()):
            raise ValueError("budgeted tolerances must be positive")


def _power_iteration(
    apply: Callable[[np.ndarray], np.ndarray],
    apply_adjoint: Callable[[np.ndarray], np.ndarray],
    n: int,
    iters: int,
    seed: int,
    stagnation: float = 1e-6,
) -> tuple[float, int, float]:
    """Power iteration on A*A; returns (sqrt of Rayleigh quotient, iters, residual)."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    rho_prev = None
    rho = 0.0
    residual = math.inf
    used = 0
    for used in range(1, iters + 1):
        w = apply(v)
        rho = float(np.real(np.vdot(w, w)))
        if rho == 0.0:
            return 0.0, used, 0.0
        z = apply_adjoint(w)
        nz = np.linalg.norm(z)
        if nz == 0.0:
            break
        v = z / nz
        if rho_prev is not None:
            residual = abs(rho - rho_prev) / rho
            if residual <= stagnation:
                break
        rho_prev = rho
    return math.sqrt(rho), used, residual


def spectral_norm_estimate(
    apply: Callable[[np.ndarray], np.ndarray],
    apply_adjoint: Callable[[np.ndarray], np.ndarray],
    n: int,
    iters: int = 50,
    seed: int = 0,
) -> float:
    """Largest-singular-value estimate of an operator given by its action."""
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    est, _, _ = _power_iteration(apply, apply_adjoint, n, iters, seed)
    return est


def _as_operator(a) -> tuple[Callable, Callable, int]:
    """Normalize matrices / operator pairs / compressed formats to closures."""
    if isinstance(a, HMatrix):
        return (
            lambda v: matvec_h(a, v),
            lambda v: matvec_h(a, v, adjoint=True),
            a.shape[1],
        )
    if isinstance(a, UniformHMatrix):
        return (
            lambda v: matvec_uh(a, v),
            lambda v: matvec_uh(a, v, adjoint=True),
            a.shape[1],
        )
    if isinstance(a, np.ndarray):
        return (lambda v: a @ v, lambda v: a.conj().T @ v, a.shape[1])
    if isinstance(a, tuple) and len(a) == 3:
        return a
    raise TypeError(f"cannot interpret {type(a).__name__} as an operator")


def compression_error(a_ref, a_cmp, iters: int = 50, seed: int = 0) -> ErrorReport:
    """Relative spectral error ||A - A_cmp||_2 / ||A||_2, both norms estimated.

    ``a_ref`` may be a dense matrix, a compressed format, or a triple
    ``(apply, apply_adjoint, n)``; same for ``a_cmp``.
    """
    ref_apply, ref_adj, n = _as_operator(a_ref)
    cmp_apply, cmp_adj, n_cmp = _as_operator(a_cmp)
    if n != n_cmp:
        raise ValueError(f"operator input sizes differ: {n} vs {n_cmp}")
    norm_a, _, _ = _power_iteration(ref_apply, ref_adj, n, iters, seed)
    diff = lambda v: ref_apply(v) - cmp_apply(v)
    diff_adj = lambda v: ref_adj(v) - cmp_adj(v)
    est, used, residual = _power_iteration(diff, diff_adj, n, iters, seed + 1)
    rel = est / norm_a if norm_a > 0 else est
    return ErrorReport(rel_spectral_estimate=rel, iterations=used, residual=residual)


def _spectral(a: np.ndarray) -> float:
    if min(a.shape) == 0:
        return 0.0
    return float(np.linalg.svd(a, compute_uv=False)[0])


def theorem_51_check(
    a_h: np.ndarray,
    uh: UniformHMatrix,
    max_side: int = 800,
) -> tuple[float, float, bool]:
    """Exact check of the sqrt(2)-aggregated spectral bound on the compression error.

    ``a_h`` must be the dense materialization of the H-matrix the uniform
    format was compressed from. Both sides are computed with dense SVDs: the
    left is ||A_h - A_uh||_2, the right aggregates the per-cluster projection
    errors of the row and column bases onto the agglomerations of ``a_h``.
    """
    bct = uh.bct
    if max(a_h.shape) > max_side:
        raise CapacityError(f"matrix side {max(a_h.shape)} exceeds dense-check cap {max_side}")
    lhs = _spectral(a_h - to_dense_uh(uh, cap=a_h.size))

    total = 0.0
    for cid, sids in bct.row_map.items():
        pieces = []
        for sid in sids:
            r_lo, r_hi, c_lo, c_hi = bct.block_ranges(bct.block_of[(cid, sid)])
            pieces.append(a_h[r_lo:r_hi, c_lo:c_hi])
        agg = np.concatenate(pieces, axis=1)
        basis = uh.row_basis.matrices[cid]
        total += _spectral(agg - basis @ (basis.conj().T @ agg)) ** 2
    for cid, tids in bct.col_map.items():
        pieces = []
        for tid in tids:
            r_lo, r_hi, c_lo, c_hi = bct.block_ranges(bct.block_of[(tid, cid)])
            pieces.append(a_h[r_lo:r_hi, c_lo:c_hi].conj().T)
        agg = np.concatenate(pieces, axis=1)
        basis = uh.col_basis.matrices[cid]
        total += _spectral(agg - basis @ (basis.conj().T @ agg)) ** 2
    rhs = math.sqrt(2.0) * math.sqrt(total)
    # Both sides are dense-SVD outputs; comparisons below the rounding scale
    # of the matrix are noise, so the slack carries a machine-epsilon floor.
    floor = np.finfo(np.float64).eps * float(np.linalg.norm(a_h))
    return lhs, rhs, lhs <= rhs * (1.0 + 1e-10) + floor


def tolerance_budget(eps: float, bct: BlockClusterTree) -> ToleranceBudget:
    """Split a global spectral target into per-cluster absolute tolerances.

    Each cluster receives (eps/2) * sqrt(|tau| * |F(tau)| / (|I| * |J|)) with
    F(tau) the union of the column clusters it meets in admissible blocks;
    these rectangles are disjoint, so the aggregated bound stays below eps.
    """
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    n_i, n_j = bct.shape
    area = float(n_i) * float(n_j)
    row = {}
    for cid, sids in bct.row_map.items():
        far = sum(bct.col_tree.nodes[sid].size for sid in sids)
        row[cid] = 0.5 * eps * math.sqrt(bct.row_tree.nodes[cid].size * far / area)
    col = {}
    for cid, tids in bct.col_map.items():
        far = sum(bct.row_tree.nodes[tid].size for tid in tids)
        col[cid] = 0.5 * eps * math.sqrt(bct.col_tree.nodes[cid].size * far / area)
    return ToleranceBudget(row=row, col=col)
