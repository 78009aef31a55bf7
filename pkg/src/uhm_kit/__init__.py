"""uhm-kit: hierarchical matrices with uniform (shared cluster basis) compression.

Builds H-matrix approximations of Helmholtz/Laplace kernel matrices on
weighted point clouds via ACA, compresses them into the uniform H-matrix
format, and ships a benchmark CLI that checks the storage, complexity and
error behavior of both formats.
"""

from .errors import CapacityError
from .geometry import (
    AABB,
    Geometry,
    aabb_diam,
    aabb_dist,
    bbox,
    generate_sphere,
    generate_torus_knot,
    load_points,
    save_points,
)
from .clustering import (
    AdmissibilityParams,
    BlockClusterTree,
    Cluster,
    ClusterTree,
    build_block_tree,
    build_cluster_tree,
    is_admissible,
    sparsity_constant,
    storage_bounds,
)
from .kernels import EntryOracle, KernelSpec, eval_kernel
from .lowrank import LowRankFactors, SVDForm, ToleranceSpec, aca, recompress, truncation_rank
from .hmatrix import (
    HMatrix,
    MatvecStats,
    StorageReport,
    assemble_h,
    dump_structure,
    matvec_h,
    storage_report,
    to_dense,
)
from .uniform import (
    BuildStats,
    ClusterBasis,
    CoefficientPair,
    UniformHMatrix,
    build_cluster,
    compress_h_to_uh,
    direct_build_uh,
    dump_structure_uh,
    matvec_uh,
    optimal_cluster_basis_reference,
    storage_report_uh,
    to_dense_uh,
)
from .verification import (
    ErrorReport,
    ToleranceBudget,
    compression_error,
    spectral_norm_estimate,
    theorem_51_check,
    tolerance_budget,
)

__version__ = "0.1.0"
