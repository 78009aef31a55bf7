"""Adaptive cross approximation and QR+SVD recompression of low-rank factors."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["ToleranceSpec", "LowRankFactors", "SVDForm", "aca", "recompress", "truncation_rank"]


@dataclass(frozen=True)
class ToleranceSpec:
    """Truncation control: relative (or absolute) threshold, rank cap, tiny floor.

    With ``absolute=True`` the threshold ``rel_eps`` is applied to singular
    values directly instead of relative to the largest one.
    """

    rel_eps: float = 1e-4
    max_rank: int | None = None
    abs_floor: float = 1e-300
    absolute: bool = False

    def __post_init__(self) -> None:
        if self.rel_eps < 0:
            raise ValueError(f"rel_eps must be >= 0, got {self.rel_eps}")
        if self.max_rank is not None and self.max_rank < 0:
            raise ValueError(f"max_rank must be >= 0, got {self.max_rank}")

    def scaled(self, factor: float) -> "ToleranceSpec":
        return ToleranceSpec(self.rel_eps * factor, self.max_rank, self.abs_floor, self.absolute)


@dataclass
class LowRankFactors:
    """Factor pair with block ~= X @ Y*."""

    X: np.ndarray  # (nrows, k)
    Y: np.ndarray  # (ncols, k)

    @property
    def rank(self) -> int:
        return self.X.shape[1]

    def reconstruct(self) -> np.ndarray:
        return self.X @ self.Y.conj().T


@dataclass
class SVDForm:
    """Orthonormal-factor form block ~= U @ diag(sigma) @ V*, sigma descending > 0."""

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    @property
    def rank(self) -> int:
        return len(self.sigma)

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.sigma) @ self.V.conj().T


def truncation_rank(sigma: np.ndarray, tol: ToleranceSpec) -> int:
    """Smallest rank whose first dropped singular value falls below the threshold.

    Entries at or below ``abs_floor`` are always dropped and the result is
    capped at ``max_rank``.
    """
    sigma = np.asarray(sigma)
    k = len(sigma)
    if k == 0:
        return 0
    thresh = tol.rel_eps if tol.absolute else tol.rel_eps * float(sigma[0])
    below = np.nonzero(sigma <= thresh)[0]
    rank = int(below[0]) if len(below) else k
    rank = min(rank, int(np.count_nonzero(sigma > tol.abs_floor)))
    if tol.max_rank is not None:
        rank = min(rank, tol.max_rank)
    return rank


def _empty_svdform(nrows: int, ncols: int, dtype) -> SVDForm:
    return SVDForm(
        np.zeros((nrows, 0), dtype=dtype),
        np.zeros(0, dtype=np.float64),
        np.zeros((ncols, 0), dtype=dtype),
    )


def recompress(f: LowRankFactors, tol: ToleranceSpec) -> SVDForm:
    """Reduce X @ Y* to its numerically minimal rank in orthonormal SVD form.

    Thin QRs of both factors reduce the problem to the SVD of a k x k core,
    which is truncated by ``truncation_rank`` and composed back.
    """
    nrows, k = f.X.shape
    ncols = f.Y.shape[0]
    dtype = np.result_type(f.X.dtype, f.Y.dtype)
    if k == 0:
        return _empty_svdform(nrows, ncols, dtype)
    qx, rx = np.linalg.qr(f.X)
    qy, ry = np.linalg.qr(f.Y)
    u, s, vh = np.linalg.svd(rx @ ry.conj().T)
    rank = truncation_rank(s, tol)
    if rank == 0:
        return _empty_svdform(nrows, ncols, dtype)
    return SVDForm(qx @ u[:, :rank], s[:rank].copy(), qy @ vh[:rank].conj().T)


class _AcaState:
    """Growable cross factors with residual evaluation against them."""

    def __init__(self, row, col, nrows, ncols, dtype):
        self._row = row
        self._col = col
        self.k = 0
        cap = 16
        self.X = np.empty((nrows, cap), dtype=dtype)
        self.Yh = np.empty((cap, ncols), dtype=dtype)  # holds Y* row by row

    def residual_row(self, i: int) -> np.ndarray:
        r = np.array(self._row(i), dtype=self.X.dtype, copy=True)
        if self.k:
            r -= self.X[i, : self.k] @ self.Yh[: self.k]
        return r

    def residual_col(self, j: int) -> np.ndarray:
        c = np.array(self._col(j), dtype=self.X.dtype, copy=True)
        if self.k:
            c -= self.X[:, : self.k] @ self.Yh[: self.k, j]
        return c

    def append(self, x: np.ndarray, y: np.ndarray) -> None:
        if self.k == self.X.shape[1]:
            grow = self.X.shape[1]
            self.X = np.concatenate([self.X, np.empty_like(self.X[:, :grow])], axis=1)
            self.Yh = np.concatenate([self.Yh, np.empty_like(self.Yh[:grow])], axis=0)
        self.X[:, self.k] = x
        self.Yh[self.k] = y
        self.k += 1

    def cross_fro_term(self, x: np.ndarray, y: np.ndarray) -> float:
        """2 Re <current approximation, x y^T> for the Frobenius bookkeeping."""
        if not self.k:
            return 0.0
        sx = self.X[:, : self.k].conj().T @ x
        sy = self.Yh[: self.k].conj() @ y
        return 2.0 * float(np.real(np.dot(sx, sy)))

    def factors(self) -> LowRankFactors:
        return LowRankFactors(self.X[:, : self.k].copy(), self.Yh[: self.k].conj().T.copy())


def aca(
    row: Callable[[int], np.ndarray],
    col: Callable[[int], np.ndarray],
    nrows: int,
    ncols: int,
    tol: ToleranceSpec,
    strategy: str = "partial",
) -> LowRankFactors:
    """Cross approximation from sampled rows and columns with partial pivoting.

    ``row(i)`` and ``col(j)`` must return full block rows/columns. Starting
    from the first row, each step picks the max-modulus entry of the residual
    pivot row as column pivot, appends the scaled cross, and moves the pivot
    row to the max-modulus entry of the residual pivot column. The iteration
    stops when the last cross satisfies
    ``||x_k|| * ||y_k|| <= rel_eps * frobenius_estimate`` or the rank hits
    min(nrows, ncols, max_rank). An all-zero pivot row falls back to the next
    unused row, for at most ``nrows`` attempts; a zero block yields rank-0
    factors.

    ``strategy='rook'`` alternates row/column max searches until the pivot is
    maximal in both its residual row and column before accepting a cross.
    """
    if nrows < 1 or ncols < 1:
        raise ValueError(f"block must be at least 1x1, got {nrows}x{ncols}")
    if strategy not in ("partial", "rook"):
        raise ValueError(f"unknown pivot strategy {strategy!r}")
    max_rank = min(nrows, ncols)
    if tol.max_rank is not None:
        max_rank = min(max_rank, tol.max_rank)

    first = np.asarray(row(0))
    dtype = np.complex128 if np.issubdtype(first.dtype, np.complexfloating) else np.float64
    state = _AcaState(row, col, nrows, ncols, dtype)
    used_rows = np.zeros(nrows, dtype=bool)
    used_cols = np.zeros(ncols, dtype=bool)
    fro2 = 0.0
    pivot_row = 0
    cached_first: np.ndarray | None = first.astype(dtype)

    def take_row(i: int) -> np.ndarray:
        nonlocal cached_first
        if i == 0 and state.k == 0 and cached_first is not None:
            r, cached_first = cached_first, None
            return r.copy()
        return state.residual_row(i)

    while state.k < max_rank:
        # Find a pivot row with a nonzero residual, retiring all-zero rows.
        i_piv = -1
        r = None
        j_piv = -1
        for _ in range(nrows):
            candidates = np.nonzero(~used_rows)[0]
            if len(candidates) == 0:
                break
            after = candidates[candidates >= pivot_row]
            i_try = int(after[0] if len(after) else candidates[0])
            r_try = take_row(i_try)
            scores = np.abs(r_try)
            scores[used_cols] = -1.0
            j_try = int(np.argmax(scores))
            if scores[j_try] > 0.0:
                i_piv, r, j_piv = i_try, r_try, j_try
                break
            used_rows[i_try] = True
            pivot_row = i_try + 1
        if r is None:
            break

        c = state.residual_col(j_piv)
        if strategy == "rook":
            for _ in range(4):
                scores = np.abs(c)
                scores[used_rows] = -1.0
                i_new = int(np.argmax(scores))
                if i_new == i_piv or scores[i_new] <= np.abs(r[j_piv]):
                    break
                i_piv = i_new
                r = state.residual_row(i_piv)
                scores_r = np.abs(r)
                scores_r[used_cols] = -1.0
                j_new = int(np.argmax(scores_r))
                if j_new == j_piv:
                    break
                j_piv = j_new
                c = state.residual_col(j_piv)

        pivot = r[j_piv]
        x_new = c / pivot
        y_new = r
        nx, ny = float(np.linalg.norm(x_new)), float(np.linalg.norm(y_new))
        fro2 = max(fro2 + state.cross_fro_term(x_new, y_new) + (nx * ny) ** 2, 0.0)
        state.append(x_new, y_new)
        used_rows[i_piv] = True
        used_cols[j_piv] = True

        threshold = tol.rel_eps if tol.absolute else tol.rel_eps * np.sqrt(fro2)
        if nx * ny <= threshold:
            break
        scores = np.abs(c)
        scores[used_rows] = -1.0
        pivot_row = int(np.argmax(scores))

    return state.factors()
