import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from uhm_kit import (
    AABB,
    aabb_diam,
    aabb_dist,
    bbox,
    generate_sphere,
    generate_torus_knot,
    load_points,
    save_points,
)
from uhm_kit.geometry import _knot_curve


def test_sphere_single_point():
    g = generate_sphere(1, 1.0, seed=0)
    assert len(g) == 1
    assert np.linalg.norm(g.points[0]) == pytest.approx(1.0, abs=1e-12)
    assert g.weights[0] == pytest.approx(4 * math.pi, abs=1e-12)


def test_sphere_construction_identities():
    g = generate_sphere(1000, 1.0, seed=0)
    radii = np.linalg.norm(g.points, axis=1)
    assert np.abs(radii - 1.0).max() <= 1e-12
    assert abs(g.weights.sum() - 4 * math.pi) <= 1e-12


def test_sphere_bbox_diam():
    # The lattice spans almost the full [-2, 2]^3 box; its diagonal sits just
    # under 4*sqrt(3). Frozen from scanning the generated points.
    g = generate_sphere(1000, 2.0, seed=0)
    lo = g.points.min(axis=0)
    hi = g.points.max(axis=0)
    expected = float(np.linalg.norm(hi - lo))
    b = bbox(g)
    assert aabb_diam(b) == pytest.approx(expected, rel=1e-12)
    assert 6.8 <= aabb_diam(b) <= 4 * math.sqrt(3)


def test_sphere_deterministic_per_seed():
    a = generate_sphere(200, 1.0, seed=7)
    b = generate_sphere(200, 1.0, seed=7)
    c = generate_sphere(200, 1.0, seed=8)
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(a.weights, b.weights)
    assert not np.array_equal(a.points, c.points)


@pytest.mark.parametrize("n,radius", [(0, 1.0), (5, 0.0), (5, -1.0)])
def test_sphere_invalid_args(n, radius):
    with pytest.raises(ValueError):
        generate_sphere(n, radius)


def test_knot_single_point_finite():
    g = generate_torus_knot(1, 2, 3, R=2.0, r=0.4)
    assert len(g) == 1
    assert np.isfinite(g.points).all()


def test_knot_points_on_tube():
    g = generate_torus_knot(5000, 2, 3, R=2.0, r=0.4)
    ts = np.linspace(0.0, 2 * math.pi, 20000, endpoint=False)
    curve, _ = _knot_curve(ts, 2, 3, 2.0, 0.4)
    from scipy.spatial import cKDTree

    d, _ = cKDTree(curve).query(g.points)
    # Distance to the sampled polyline overestimates the true curve distance
    # by at most the sampling gap.
    assert d.max() <= 0.4 * (1 + 1e-6) + 1e-6


def test_knot_no_coincident_points():
    g = generate_torus_knot(5000, 2, 3, R=2.0, r=0.4)
    from scipy.spatial import cKDTree

    d, _ = cKDTree(g.points).query(g.points, k=2)
    assert d[:, 1].min() > 0


def test_knot_invalid_radii():
    with pytest.raises(ValueError):
        generate_torus_knot(10, 2, 3, R=0.4, r=2.0)
    with pytest.raises(ValueError):
        generate_torus_knot(10, 2, 3, R=1.0, r=0.0)


def test_load_points_single_row(tmp_path):
    path = tmp_path / "pts.txt"
    path.write_text("0 0 0 1\n")
    g = load_points(path)
    assert len(g) == 1
    assert np.array_equal(g.points[0], [0, 0, 0])
    assert g.weights[0] == 1.0


def test_load_points_skips_comments(tmp_path):
    path = tmp_path / "pts.txt"
    path.write_text("# header\n1 0 0 0.5\n0 2 0 0.25\n")
    g = load_points(path)
    assert len(g) == 2
    assert g.points[1][1] == 2.0


def test_load_points_negative_weight_reports_line(tmp_path):
    path = tmp_path / "pts.txt"
    path.write_text("1 0 0 1\n0 0 0 -1\n")
    with pytest.raises(ValueError, match=":2"):
        load_points(path)


def test_load_points_malformed_row_reports_line(tmp_path):
    path = tmp_path / "pts.txt"
    path.write_text("# c\n1 0 0 1\n1 2 3\n")
    with pytest.raises(ValueError, match=":3"):
        load_points(path)


def test_save_load_roundtrip(tmp_path):
    g = generate_sphere(50, 1.5, seed=2)
    path = tmp_path / "round.txt"
    save_points(g, path)
    g2 = load_points(path)
    assert np.array_equal(g.points, g2.points)
    assert np.array_equal(g.weights, g2.weights)


def test_bbox_trivial_cases():
    g = load_geometry([[0, 0, 0]], [1.0])
    b = bbox(g)
    assert b.lo == b.hi == (0.0, 0.0, 0.0)

    g2 = load_geometry([[0, 0, 0], [1, 2, 3]], [1.0, 1.0])
    b2 = bbox(g2)
    assert b2.lo == (0.0, 0.0, 0.0)
    assert b2.hi == (1.0, 2.0, 3.0)


def load_geometry(points, weights):
    from uhm_kit import Geometry

    return Geometry(np.asarray(points, dtype=float), np.asarray(weights, dtype=float))


def test_bbox_contains_all_points():
    g = generate_sphere(100, 1.0, seed=1)
    b = bbox(g)
    assert (g.points >= np.array(b.lo) - 1e-15).all()
    assert (g.points <= np.array(b.hi) + 1e-15).all()


def test_bbox_subset_and_errors():
    g = generate_sphere(10, 1.0, seed=0)
    sub = bbox(g, [0, 3])
    assert aabb_diam(sub) <= aabb_diam(bbox(g)) + 1e-15
    with pytest.raises(ValueError):
        bbox(g, [])
    with pytest.raises(ValueError):
        bbox(g, [42])


def test_aabb_diam_unit_cube():
    b = AABB((0, 0, 0), (1, 1, 1))
    assert aabb_diam(b) == pytest.approx(math.sqrt(3), abs=1e-15)


def test_aabb_dist_separated_cubes():
    a = AABB((0, 0, 0), (1, 1, 1))
    b = AABB((3, 3, 3), (4, 4, 4))
    # per-axis gap of 2 on all three axes
    assert aabb_dist(a, b) == pytest.approx(2 * math.sqrt(3), abs=1e-12)


def test_aabb_dist_overlap_is_zero():
    a = AABB((0, 0, 0), (2, 2, 2))
    b = AABB((1, 1, 1), (3, 3, 3))
    assert aabb_dist(a, b) == 0.0


boxes = st.tuples(
    st.floats(-100, 100), st.floats(-100, 100), st.floats(-100, 100), st.floats(0, 50)
)


@given(boxes, boxes)
def test_aabb_dist_symmetric(t1, t2):
    a = AABB((t1[0], t1[1], t1[2]), (t1[0] + t1[3], t1[1] + t1[3], t1[2] + t1[3]))
    b = AABB((t2[0], t2[1], t2[2]), (t2[0] + t2[3], t2[1] + t2[3], t2[2] + t2[3]))
    assert aabb_dist(a, b) == aabb_dist(b, a)
    assert aabb_dist(a, a) == 0.0


def test_invalid_aabb_rejected():
    with pytest.raises(ValueError):
        AABB((1, 0, 0), (0, 1, 1))
