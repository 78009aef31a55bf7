"""Weighted point-cloud geometries, bounding boxes and synthetic surface generators.

Points carry a positive weight that acts as a surface-measure proxy, so
kernel-matrix entries built on top of them scale like Galerkin entries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Geometry",
    "AABB",
    "generate_sphere",
    "generate_torus_knot",
    "load_points",
    "save_points",
    "bbox",
    "aabb_diam",
    "aabb_dist",
]

_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))
_GOLDEN_FRAC = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class Geometry:
    """Ordered 3D points with one positive weight per point."""

    points: np.ndarray  # (n, 3)
    weights: np.ndarray  # (n,)
    label: str = ""

    def __post_init__(self) -> None:
        self.points = np.ascontiguousarray(self.points, dtype=np.float64)
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise ValueError(f"points must have shape (n, 3), got {self.points.shape}")
        if self.points.shape[0] < 1:
            raise ValueError("geometry needs at least one point")
        if self.weights.shape != (self.points.shape[0],):
            raise ValueError("weights must be one positive real per point")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("points contain non-finite coordinates")
        if not np.all(self.weights > 0):
            raise ValueError("all weights must be > 0")
        # Geometries are shared across threads; freeze the buffers.
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class AABB:
    """Axis-aligned bounding box given by its componentwise corners."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self) -> None:
        if any(not math.isfinite(v) for v in (*self.lo, *self.hi)):
            raise ValueError("AABB corners must be finite")
        if any(l > h for l, h in zip(self.lo, self.hi)):
            raise ValueError(f"AABB requires lo <= hi componentwise, got {self.lo} / {self.hi}")


def generate_sphere(n: int, radius: float = 1.0, seed: int = 0) -> Geometry:
    """Fibonacci lattice on a sphere, azimuthally jittered by ``seed``.

    All points lie exactly on the sphere of the given radius and every point
    carries the weight 4*pi*radius**2 / n.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if radius <= 0:
        raise ValueError(f"radius must be > 0, got {radius}")
    rng = np.random.default_rng(seed)
    i = np.arange(n, dtype=np.float64)
    z = 1.0 - 2.0 * (i + 0.5) / n
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    # Global phase plus a small per-point angular jitter keeps the lattice
    # structure while making different seeds genuinely different geometries.
    phi = _GOLDEN_ANGLE * i + rng.uniform(0.0, 2.0 * math.pi)
    phi = phi + rng.uniform(-0.25, 0.25, n) * _GOLDEN_ANGLE
    pts = radius * np.column_stack((rho * np.cos(phi), rho * np.sin(phi), z))
    w = np.full(n, 4.0 * math.pi * radius * radius / n)
    return Geometry(pts, w, label=f"sphere(n={n},r={radius},seed={seed})")


def _knot_curve(t: np.ndarray, p: int, q: int, R: float, r: float) -> tuple[np.ndarray, np.ndarray]:
    """Points and derivatives of the (p, q) torus-knot curve on the (R, r) torus."""
    cq, sq = np.cos(q * t), np.sin(q * t)
    cp, sp = np.cos(p * t), np.sin(p * t)
    ring = R + r * cq
    c = np.column_stack((ring * cp, ring * sp, r * sq))
    dc = np.column_stack(
        (
            -q * r * sq * cp - p * ring * sp,
            -q * r * sq * sp + p * ring * cp,
            q * r * cq,
        )
    )
    return c, dc


def generate_torus_knot(n: int, p: int = 2, q: int = 3, R: float = 2.0, r: float = 0.4) -> Geometry:
    """Points on the tube of radius ``r`` around a (p, q) torus knot.

    The center curve is the knot on the torus with major radius ``R`` and
    minor radius ``r``; the tube winds around it with golden-ratio azimuths so
    no two samples coincide. Weights are a uniform share of the estimated tube
    area, (2*pi*r) * curve length / n.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if p < 1 or q < 1:
        raise ValueError(f"knot indices must be >= 1, got ({p}, {q})")
    if not (R > r > 0):
        raise ValueError(f"need R > r > 0, got R={R}, r={r}")
    t = 2.0 * math.pi * (np.arange(n) + 0.5) / n
    c, dc = _knot_curve(t, p, q, R, r)
    tang = dc / np.linalg.norm(dc, axis=1, keepdims=True)
    # The tangent is never parallel to z (the planar speed is >= p*(R-r) > 0),
    # so crossing with z gives a well-defined frame.
    n1 = np.cross(np.broadcast_to([0.0, 0.0, 1.0], tang.shape), tang)
    n1 /= np.linalg.norm(n1, axis=1, keepdims=True)
    n2 = np.cross(tang, n1)
    theta = 2.0 * math.pi * np.modf(_GOLDEN_FRAC * np.arange(n))[0]
    pts = c + r * (np.cos(theta)[:, None] * n1 + np.sin(theta)[:, None] * n2)

    ts = np.linspace(0.0, 2.0 * math.pi, 8192, endpoint=False)
    _, dcs = _knot_curve(ts, p, q, R, r)
    length = float(np.mean(np.linalg.norm(dcs, axis=1))) * 2.0 * math.pi
    area = 2.0 * math.pi * r * length
    w = np.full(n, area / n)
    return Geometry(pts, w, label=f"knot(n={n},p={p},q={q},R={R},r={r})")


def load_points(path) -> Geometry:
    """Read a whitespace-separated ``x y z w`` point file; ``#`` starts a comment."""
    pts: list[list[float]] = []
    ws: list[float] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 'x y z w', got {len(parts)} fields")
            try:
                x, y, z, w = (float(v) for v in parts)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric field in {line!r}") from exc
            if not all(math.isfinite(v) for v in (x, y, z, w)):
                raise ValueError(f"{path}:{lineno}: non-finite value in {line!r}")
            if w <= 0:
                raise ValueError(f"{path}:{lineno}: weight must be positive, got {w}")
            pts.append([x, y, z])
            ws.append(w)
    if not pts:
        raise ValueError(f"{path}: file contains no points")
    return Geometry(np.asarray(pts), np.asarray(ws), label=str(path))


def save_points(geometry: Geometry, path) -> None:
    """Write a geometry in the ``x y z w`` text format accepted by load_points."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {geometry.label or 'points'}\n")
        for (x, y, z), w in zip(geometry.points, geometry.weights):
            fh.write(f"{float(x)!r} {float(y)!r} {float(z)!r} {float(w)!r}\n")


def bbox(geometry: Geometry, indices=None) -> AABB:
    """Componentwise bounding box of the selected points (all points by default)."""
    pts = geometry.points
    if indices is not None:
        idx = np.asarray(indices, dtype=np.intp)
        if idx.size == 0:
            raise ValueError("bbox of an empty index subset is undefined")
        if idx.min() < 0 or idx.max() >= len(geometry):
            raise ValueError("bbox indices out of range")
        pts = pts[idx]
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    return AABB(tuple(float(v) for v in lo), tuple(float(v) for v in hi))


def aabb_diam(b: AABB) -> float:
    """Euclidean length of the box diagonal hi - lo."""
    return math.dist(b.hi, b.lo)


def aabb_dist(a: AABB, b: AABB) -> float:
    """Euclidean distance between two boxes; zero iff they intersect."""
    gap = [max(0.0, bl - ah, al - bh) for al, ah, bl, bh in zip(a.lo, a.hi, b.lo, b.hi)]
    return math.hypot(*gap)
