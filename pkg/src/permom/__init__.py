"""Permutation-moment entanglement criteria.

Index-permutation moments of multipartite density matrices, lower bounds
on permutation norms from a few moments, the criteria built on them, and
simulators for the measurement protocols that estimate the moments.
"""
from __future__ import annotations

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DomainError,
    InfeasibleError,
    InsufficientDataError,
    NumericalError,
    PermomError,
    ResourceError,
    StructuralError,
    UnsupportedError,
    ValidationError,
)
from .tensor_core import (  # noqa: E402
    DensityMatrix,
    IndexPermutation,
    PermutedMatrix,
    group_parties,
    partial_trace,
    permute_indices,
    tensor_product,
)
from .states import make_state  # noqa: E402
from .moments import moment_direct, moment_via_observable, moments_direct  # noqa: E402
from .bound_solver import NormBound, e2n_bound, e4_analytic, structure_bound  # noqa: E402
from .criteria import CriterionResult, evaluate  # noqa: E402

__all__ = [
    "__version__",
    "DensityMatrix",
    "IndexPermutation",
    "PermutedMatrix",
    "group_parties",
    "partial_trace",
    "permute_indices",
    "tensor_product",
    "make_state",
    "moment_direct",
    "moment_via_observable",
    "moments_direct",
    "NormBound",
    "e2n_bound",
    "e4_analytic",
    "structure_bound",
    "CriterionResult",
    "evaluate",
    "DomainError",
    "InfeasibleError",
    "InsufficientDataError",
    "NumericalError",
    "PermomError",
    "ResourceError",
    "StructuralError",
    "UnsupportedError",
    "ValidationError",
]
