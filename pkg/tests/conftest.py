import numpy as np
import pytest

from uhm_kit import (
    AdmissibilityParams,
    EntryOracle,
    KernelSpec,
    build_block_tree,
    build_cluster_tree,
    generate_sphere,
)


class Instance:
    """A built sphere instance: geometry, trees, oracle, dense matrix on demand."""

    def __init__(self, n, seed=0, eta=10.0, criterion="weak", n_min=30, kernel="laplace", kappa=0.0):
        self.geometry = generate_sphere(n, 1.0, seed=seed)
        self.tree = build_cluster_tree(self.geometry, n_min)
        self.bct = build_block_tree(self.tree, self.tree, AdmissibilityParams(eta, criterion))
        self.oracle = EntryOracle(
            self.geometry,
            self.geometry,
            KernelSpec(kernel, kappa),
            self.tree.permutation,
            self.tree.permutation,
        )
        self._dense = None

    @property
    def dense(self):
        if self._dense is None:
            self._dense = self.oracle.to_dense()
        return self._dense


@pytest.fixture(scope="session")
def sphere500():
    return Instance(500)


@pytest.fixture(scope="session")
def sphere800():
    return Instance(800)


@pytest.fixture(scope="session")
def helmholtz400():
    return Instance(400, kernel="helmholtz", kappa=2.0)


def random_low_rank(m, n, rank, seed=0, complex_=False):
    rng = np.random.default_rng(seed)
    if complex_:
        x = rng.standard_normal((m, rank)) + 1j * rng.standard_normal((m, rank))
        y = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    else:
        x = rng.standard_normal((m, rank))
        y = rng.standard_normal((n, rank))
    return x, y
