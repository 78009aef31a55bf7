"""Entry-wise evaluation of Helmholtz/Laplace single-layer kernel matrices.

Matrix entries are Nystrom-style surrogates a_ij = w_i * w_j * g(x_i, y_j)
with g the single-layer kernel exp(i*kappa*r) / (4*pi*r). A regularization
distance clamps r away from zero so the diagonal stays finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import CapacityError
from .geometry import Geometry, bbox, aabb_diam

__all__ = ["KernelSpec", "EntryOracle", "eval_kernel"]

_REG_FRACTION = 1e-8  # default reg_dist = this fraction of the bbox diameter

_FOUR_PI = 4.0 * math.pi


@dataclass(frozen=True)
class KernelSpec:
    """Kernel selection; kind 'laplace' fixes kappa = 0.

    ``reg_dist=None`` defers the regularization distance to the oracle, which
    resolves it as 1e-8 times the bounding-box diameter of its geometries.
    """

    kind: str = "laplace"
    kappa: float = 0.0
    reg_dist: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("laplace", "helmholtz"):
            raise ValueError(f"kind must be 'laplace' or 'helmholtz', got {self.kind!r}")
        if self.kappa < 0 or not math.isfinite(self.kappa):
            raise ValueError(f"kappa must be a finite wavenumber >= 0, got {self.kappa}")
        if self.kind == "laplace" and self.kappa != 0.0:
            object.__setattr__(self, "kappa", 0.0)
        if self.reg_dist is not None and self.reg_dist <= 0:
            raise ValueError(f"reg_dist must be > 0, got {self.reg_dist}")


def eval_kernel(x, y, spec: KernelSpec) -> complex:
    """Single-layer kernel at one point pair, with the singularity clamped."""
    reg = spec.reg_dist if spec.reg_dist is not None else np.finfo(np.float64).tiny
    r = max(math.dist(tuple(x), tuple(y)), reg)
    if spec.kappa == 0.0:
        return complex(1.0 / (_FOUR_PI * r))
    return complex(np.exp(1j * spec.kappa * r) / (_FOUR_PI * r))


class EntryOracle:
    """On-demand evaluator of kernel-matrix entries in tree (permuted) order.

    The permutations are applied once at construction; ``entry``, ``row``,
    ``col`` and ``dense_block`` all address the permuted matrix. Instances are
    immutable after construction and safe for concurrent readers. Laplace
    matrices are materialized as float64 (their imaginary part is exactly
    zero); Helmholtz as complex128.
    """

    def __init__(
        self,
        geometry_row: Geometry,
        geometry_col: Geometry,
        spec: KernelSpec,
        row_perm: np.ndarray | None = None,
        col_perm: np.ndarray | None = None,
    ) -> None:
        self.spec = spec if spec.reg_dist is not None else self._resolve_reg(geometry_row, geometry_col, spec)
        self.geometry_row = geometry_row
        self.geometry_col = geometry_col
        rp = np.arange(len(geometry_row)) if row_perm is None else np.asarray(row_perm, dtype=np.intp)
        cp = np.arange(len(geometry_col)) if col_perm is None else np.asarray(col_perm, dtype=np.intp)
        self._pts_row = np.ascontiguousarray(geometry_row.points[rp])
        self._w_row = np.ascontiguousarray(geometry_row.weights[rp])
        self._pts_col = np.ascontiguousarray(geometry_col.points[cp])
        self._w_col = np.ascontiguousarray(geometry_col.weights[cp])
        self.dtype = np.complex128 if self.spec.kappa != 0.0 else np.float64
        self.eval_count = 0  # entries evaluated; informational, not thread-exact

    @staticmethod
    def _resolve_reg(geometry_row: Geometry, geometry_col: Geometry, spec: KernelSpec) -> KernelSpec:
        diam = max(aabb_diam(bbox(geometry_row)), aabb_diam(bbox(geometry_col)))
        reg = _REG_FRACTION * diam if diam > 0 else np.finfo(np.float64).tiny
        return KernelSpec(spec.kind, spec.kappa, reg)

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self._w_row), len(self._w_col))

    def _values(self, r: np.ndarray) -> np.ndarray:
        np.maximum(r, self.spec.reg_dist, out=r)
        if self.spec.kappa == 0.0:
            return 1.0 / (_FOUR_PI * r)
        return np.exp(1j * self.spec.kappa * r) / (_FOUR_PI * r)

    def entry(self, i: int, j: int) -> complex:
        """Single entry a_ij; raises IndexError outside the matrix."""
        m, n = self.shape
        if not (0 <= i < m and 0 <= j < n):
            raise IndexError(f"entry ({i}, {j}) outside {m}x{n} matrix")
        self.eval_count += 1
        r = max(math.dist(self._pts_row[i], self._pts_col[j]), self.spec.reg_dist)
        val = self._w_row[i] * self._w_col[j] / (_FOUR_PI * r)
        if self.spec.kappa == 0.0:
            return complex(val)
        return complex(val * np.exp(1j * self.spec.kappa * r))

    def row(self, i: int, col_lo: int = 0, col_hi: int | None = None) -> np.ndarray:
        """Row i restricted to [col_lo, col_hi)."""
        col_hi = self.shape[1] if col_hi is None else col_hi
        pts = self._pts_col[col_lo:col_hi]
        r = np.linalg.norm(pts - self._pts_row[i], axis=1)
        self.eval_count += len(r)
        return (self._w_row[i] * self._w_col[col_lo:col_hi]) * self._values(r)

    def col(self, j: int, row_lo: int = 0, row_hi: int | None = None) -> np.ndarray:
        """Column j restricted to [row_lo, row_hi)."""
        row_hi = self.shape[0] if row_hi is None else row_hi
        pts = self._pts_row[row_lo:row_hi]
        r = np.linalg.norm(pts - self._pts_col[j], axis=1)
        self.eval_count += len(r)
        return (self._w_col[j] * self._w_row[row_lo:row_hi]) * self._values(r)

    def dense_block(self, rows, cols, cap: int = 1 << 26) -> np.ndarray:
        """Materialize the sub-block for index ranges given as (lo, hi) pairs."""
        r_lo, r_hi = rows
        c_lo, c_hi = cols
        m, n = r_hi - r_lo, c_hi - c_lo
        if m < 1 or n < 1 or r_lo < 0 or c_lo < 0 or r_hi > self.shape[0] or c_hi > self.shape[1]:
            raise ValueError(f"invalid block ranges {rows} x {cols} for shape {self.shape}")
        if m * n > cap:
            raise CapacityError(f"dense block of {m}x{n} = {m * n} entries exceeds cap {cap}")
        r = cdist(self._pts_row[r_lo:r_hi], self._pts_col[c_lo:c_hi])
        self.eval_count += m * n
        vals = self._values(r)
        vals *= self._w_row[r_lo:r_hi, None]
        vals *= self._w_col[None, c_lo:c_hi]
        return vals

    def to_dense(self, cap: int = 4_000_000) -> np.ndarray:
        """Full matrix; guarded by the element cap."""
        m, n = self.shape
        if m * n > cap:
            raise CapacityError(f"dense matrix of {m * n} entries exceeds cap {cap}")
        return self.dense_block((0, m), (0, n), cap=cap)
