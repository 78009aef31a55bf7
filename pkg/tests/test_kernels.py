import math

import numpy as np
import pytest

from uhm_kit import EntryOracle, Geometry, KernelSpec, eval_kernel, generate_sphere
from uhm_kit.errors import CapacityError

FOUR_PI = 4 * math.pi


def test_eval_kernel_laplace_unit_distance():
    spec = KernelSpec("laplace", reg_dist=1e-12)
    v = eval_kernel((0, 0, 0), (1, 0, 0), spec)
    assert v.real == pytest.approx(1 / FOUR_PI, rel=1e-14)
    assert v.imag == 0.0


def test_eval_kernel_coincident_points_clamped():
    spec = KernelSpec("laplace", reg_dist=0.5)
    v = eval_kernel((1, 2, 3), (1, 2, 3), spec)
    assert v == pytest.approx(1 / (FOUR_PI * 0.5))
    assert math.isfinite(v.real)


def test_eval_kernel_helmholtz_pi():
    spec = KernelSpec("helmholtz", kappa=math.pi, reg_dist=1e-12)
    v = eval_kernel((0, 0, 0), (0, 1, 0), spec)
    assert v.real == pytest.approx(-1 / FOUR_PI, rel=1e-12)
    assert v.imag == pytest.approx(0.0, abs=1e-15)


def test_laplace_forces_kappa_zero():
    assert KernelSpec("laplace", kappa=3.0).kappa == 0.0


def test_invalid_spec():
    with pytest.raises(ValueError):
        KernelSpec("poisson")
    with pytest.raises(ValueError):
        KernelSpec("helmholtz", kappa=-1.0)
    with pytest.raises(ValueError):
        KernelSpec("laplace", reg_dist=0.0)


def unit_weight_pair():
    pts = np.array([[0.0, 0, 0], [1.0, 0, 0]])
    return Geometry(pts, np.ones(2))


def test_entry_with_unit_weights():
    g = unit_weight_pair()
    oracle = EntryOracle(g, g, KernelSpec("laplace", reg_dist=1e-12))
    assert oracle.entry(0, 1) == pytest.approx(1 / FOUR_PI)


def test_entry_symmetry_same_geometry():
    g = generate_sphere(30, 1.0, seed=3)
    oracle = EntryOracle(g, g, KernelSpec("helmholtz", kappa=1.5))
    for i, j in [(0, 5), (3, 17), (29, 1)]:
        assert oracle.entry(i, j) == oracle.entry(j, i)


def test_entry_weight_bilinearity():
    g = unit_weight_pair()
    scaled = Geometry(g.points, 3.0 * g.weights)
    spec = KernelSpec("laplace", reg_dist=1e-12)
    o1 = EntryOracle(g, g, spec)
    o2 = EntryOracle(scaled, scaled, spec)
    assert o2.entry(0, 1) == pytest.approx(9.0 * o1.entry(0, 1), rel=1e-14)


def test_entry_out_of_range():
    g = unit_weight_pair()
    oracle = EntryOracle(g, g, KernelSpec("laplace"))
    with pytest.raises(IndexError):
        oracle.entry(0, 2)
    with pytest.raises(IndexError):
        oracle.entry(-1, 0)


def test_dense_block_matches_entry_loop(sphere500):
    oracle = sphere500.oracle
    blk = oracle.dense_block((10, 25), (40, 52))
    for i in range(15):
        for j in range(12):
            assert blk[i, j] == pytest.approx(complex(oracle.entry(10 + i, 40 + j)).real, rel=1e-14)


def test_dense_block_1x1(sphere500):
    oracle = sphere500.oracle
    blk = oracle.dense_block((7, 8), (9, 10))
    assert blk.shape == (1, 1)
    assert blk[0, 0] == pytest.approx(complex(oracle.entry(7, 9)).real)


def test_dense_block_frobenius_matches_accumulation(sphere500):
    oracle = sphere500.oracle
    blk = oracle.dense_block((0, 50), (100, 150))
    acc = 0.0
    for i in range(50):
        for j in range(50):
            acc += abs(oracle.entry(i, 100 + j)) ** 2
    assert np.linalg.norm(blk) == pytest.approx(math.sqrt(acc), rel=1e-12)


def test_dense_block_capacity_error(sphere500):
    with pytest.raises(CapacityError):
        sphere500.oracle.dense_block((0, 500), (0, 500), cap=100)


def test_rows_cols_match_dense(sphere800):
    oracle = sphere800.oracle
    blk = oracle.dense_block((100, 160), (300, 380))
    np.testing.assert_allclose(oracle.row(120, 300, 380), blk[20], rtol=1e-14)
    np.testing.assert_allclose(oracle.col(310, 100, 160), blk[:, 10], rtol=1e-14)


def test_laplace_entries_positive_reals(sphere500):
    blk = sphere500.oracle.dense_block((0, 40), (60, 100))
    assert np.isrealobj(blk)
    assert (blk > 0).all()


def test_regularization_only_affects_diagonal():
    g = generate_sphere(100, 1.0, seed=0)
    oracle = EntryOracle(g, g, KernelSpec("laplace"))
    # min pairwise distance far exceeds reg_dist = 1e-8 * diam, so off-diagonal
    # entries agree with the unregularized kernel.
    i, j = 4, 77
    d = np.linalg.norm(oracle._pts_row[i] - oracle._pts_col[j])
    expected = oracle._w_row[i] * oracle._w_col[j] / (FOUR_PI * d)
    assert complex(oracle.entry(i, j)).real == pytest.approx(expected, rel=1e-14)
    assert d > oracle.spec.reg_dist


def test_helmholtz_dense_is_complex(helmholtz400):
    blk = helmholtz400.oracle.dense_block((0, 10), (200, 220))
    assert np.iscomplexobj(blk)
    assert np.abs(blk.imag).max() > 0


def test_default_reg_dist_resolution():
    g = generate_sphere(50, 2.0, seed=0)
    oracle = EntryOracle(g, g, KernelSpec("laplace"))
    from uhm_kit.geometry import aabb_diam, bbox

    assert oracle.spec.reg_dist == pytest.approx(1e-8 * aabb_diam(bbox(g)))
