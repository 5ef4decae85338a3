"""Compressed-sensing MRI reconstruction toolkit.

Iterative ADMM + conjugate-gradient reconstruction of multi-coil,
radially undersampled k-space data, with a data-parallel shard/allreduce
execution model and selectable single/double arithmetic.
"""

from .acquisition import (ImageGrid, KSpaceDataset, SensitivityMaps,
                          Trajectory, add_noise, birdcage_sensitivities,
                          radial_trajectory, shepp_logan, simulate_kspace,
                          undersample)
from .kernels import active_backend, available_backends
from .metrics import nrmse, relative_difference, scaled_nrmse
from .operators import (DEFAULT_MEMORY_BUDGET, DftFactors, DftOperator,
                        MemoryBudgetError, build_factors, materialize)
from .sharding import (CommStats, ShardPlan, SpmdError, allreduce_sum,
                       make_shard_plan, run_spmd)
from .solver import (AdmmState, CgDivergenceError, CgOutcome, ReconParams,
                     RunReport, admm_reconstruct, admm_step,
                     adjoint_reconstruct, build_rhs, cg_solve,
                     normal_operator, objective)
from .tensor import (ShapeMismatchError, axpy, contract_samples_by_pixels,
                     hermitian_dot, norm2_squared)
from .transform import soft_threshold, theta, theta_adjoint

__version__ = "0.1.0"

__all__ = [
    "ImageGrid", "KSpaceDataset", "SensitivityMaps", "Trajectory",
    "add_noise", "birdcage_sensitivities", "radial_trajectory",
    "shepp_logan", "simulate_kspace", "undersample",
    "active_backend", "available_backends",
    "nrmse", "relative_difference", "scaled_nrmse",
    "DEFAULT_MEMORY_BUDGET", "DftFactors", "DftOperator",
    "MemoryBudgetError", "build_factors", "materialize",
    "CommStats", "ShardPlan", "SpmdError", "allreduce_sum",
    "make_shard_plan", "run_spmd",
    "AdmmState", "CgDivergenceError", "CgOutcome", "ReconParams",
    "RunReport", "admm_reconstruct", "admm_step", "adjoint_reconstruct",
    "build_rhs", "cg_solve", "normal_operator", "objective",
    "ShapeMismatchError", "axpy", "contract_samples_by_pixels",
    "hermitian_dot", "norm2_squared",
    "soft_threshold", "theta", "theta_adjoint",
]
