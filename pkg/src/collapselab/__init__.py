"""Numerical laboratory for Markovian stochastic (collapse) state evolution."""
from .kernels import BACKEND as KERNEL_BACKEND
from .linops import DensityOperator, StateVector, commutator_norm, partial_trace, purity, tensor_product, trace_distance
from .semigroup import KrausFamily, apply_channel, compose, ensemble_map, trotter_family, verify_completeness

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "DensityOperator",
    "KrausFamily",
    "StateVector",
    "apply_channel",
    "commutator_norm",
    "compose",
    "ensemble_map",
    "partial_trace",
    "purity",
    "tensor_product",
    "trace_distance",
    "trotter_family",
    "verify_completeness",
]
