"""Quantum pre-processing filter (QPF) for fully connected image classifiers."""

from .filters import (
    FilterVariant,
    apply_filter,
    apply_filter_batch,
    enumerate_one_cnot_arrangements,
    enumerate_two_cnot_arrangements,
    extract_windows,
)
from .simkernel import BACKEND, CircuitSpec, run_circuit, run_circuit_batch

__all__ = [
    "BACKEND",
    "CircuitSpec",
    "FilterVariant",
    "apply_filter",
    "apply_filter_batch",
    "enumerate_one_cnot_arrangements",
    "enumerate_two_cnot_arrangements",
    "extract_windows",
    "run_circuit",
    "run_circuit_batch",
]

__version__ = "0.1.0"
