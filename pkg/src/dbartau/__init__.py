"""Matrix dbar-problems, integrable kernels and tau functions on planar domains."""

import os as _os

_threads = _os.environ.get("DBARTAU_THREADS")
if _threads:
    # must run before numpy loads its BLAS
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"

from .geometry import (ContourGrid, DomainSpec, GeometryError, QuadratureGrid, build_grid, cached_grid,  # noqa: E402
                       disk, ellipse, mother_body, schwarz_ellipse, union)
from .dbar import (FieldError, GammaField, MatrixField, SolverError, dz_gamma, evaluate_gamma,  # noqa: E402
                   solve_gamma, unimodularity_residual)
from .kernel import (DiscreteOperator, KernelPair, discretize, resolvent_identity_residual,  # noqa: E402
                     two_disk_pair)
from .determinants import det2_eigen, det2_series, fredholm_det, trace_K, trace_powers  # noqa: E402
from .deformation import DeformationState, TimeVector, dress, malgrange_component  # noqa: E402
from .nls import NLSScenario, psi_extract, rh_reduce_ellipse, solve_nls  # noqa: E402
from .kernels import BACKEND  # noqa: E402

__all__ = [
    "__version__",
    "BACKEND",
    "ContourGrid",
    "DomainSpec",
    "GeometryError",
    "QuadratureGrid",
    "build_grid",
    "cached_grid",
    "disk",
    "ellipse",
    "union",
    "mother_body",
    "schwarz_ellipse",
    "FieldError",
    "SolverError",
    "MatrixField",
    "GammaField",
    "solve_gamma",
    "evaluate_gamma",
    "dz_gamma",
    "unimodularity_residual",
    "KernelPair",
    "DiscreteOperator",
    "discretize",
    "two_disk_pair",
    "resolvent_identity_residual",
    "trace_K",
    "trace_powers",
    "det2_series",
    "det2_eigen",
    "fredholm_det",
    "TimeVector",
    "DeformationState",
    "dress",
    "malgrange_component",
    "NLSScenario",
    "solve_nls",
    "psi_extract",
    "rh_reduce_ellipse",
]
