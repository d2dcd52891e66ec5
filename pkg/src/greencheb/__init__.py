"""Learn Green's functions from data, compress them in a Chebyshev basis and
interpolate them across a model parameter."""

import os

# must happen before numpy loads its BLAS
_threads = os.environ.get("GREENCHEB_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

from .chebcore import ChebSeries, Domain1D, Tolerance, build_adaptive  # noqa: E402
from .quasimatrix import Quasimatrix, householder_qr, qf  # noqa: E402
from .bivariate import BivariateCdr, Sve, apply_operator, build_cdr, sve  # noqa: E402
from .manifold import ModelLibrary, SveModel, interpolate_models  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "ChebSeries",
    "Domain1D",
    "Tolerance",
    "build_adaptive",
    "Quasimatrix",
    "householder_qr",
    "qf",
    "BivariateCdr",
    "Sve",
    "apply_operator",
    "build_cdr",
    "sve",
    "ModelLibrary",
    "SveModel",
    "interpolate_models",
]
