"""Dense statevector simulator for the 4-qubit filter circuit.

Basis index ``i`` encodes qubit ``k`` in bit ``k`` (qubit 0 is the least
significant bit). Amplitudes are complex128 throughout.

The single-state functions (:func:`apply_ry`, :func:`apply_cnot`, ...) are the
readable reference path. :func:`run_circuit_batch` evaluates many windows at
once through a compiled kernel when one is available, falling back to a
vectorised numpy implementation otherwise.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _pykernel

N_QUBITS = 4
DIM = 1 << N_QUBITS

try:
    if os.environ.get("QPF_PURE_PYTHON") == "1":
        raise ImportError("compiled kernel disabled by QPF_PURE_PYTHON")
    from . import _ckernel as _kernel

    BACKEND = "cython"
except ImportError:
    _kernel = _pykernel
    BACKEND = "python"


def _check_wire(wire: int, name: str = "wire") -> int:
    if isinstance(wire, bool) or not isinstance(wire, (int, np.integer)):
        raise TypeError(f"{name} must be an integer, got {type(wire).__name__}")
    if not 0 <= wire < N_QUBITS:
        raise ValueError(f"{name} {wire} out of range 0..{N_QUBITS - 1}")
    return int(wire)


@dataclass(frozen=True)
class CircuitSpec:
    """Ordered CNOT (control, target) pairs applied after the Ry encoding."""

    cnots: tuple[tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        pairs = []
        for pair in self.cnots:
            control, target = pair
            control = _check_wire(control, "control")
            target = _check_wire(target, "target")
            if control == target:
                raise ValueError(f"CNOT control and target must differ, got {control}")
            pairs.append((control, target))
        object.__setattr__(self, "cnots", tuple(pairs))

    @classmethod
    def from_label(cls, label: str) -> "CircuitSpec":
        """Parse an arrangement label such as ``"0 3 1 2"``."""
        tokens = label.split()
        if len(tokens) % 2:
            raise ValueError(f"arrangement label needs an even number of wires: {label!r}")
        wires = [int(t) for t in tokens]
        return cls(tuple(zip(wires[0::2], wires[1::2])))

    @property
    def label(self) -> str:
        return " ".join(f"{c} {t}" for c, t in self.cnots)


def init_ground() -> np.ndarray:
    state = np.zeros(DIM, dtype=np.complex128)
    state[0] = 1.0
    return state


def _as_state(state: np.ndarray) -> np.ndarray:
    state = np.asarray(state, dtype=np.complex128)
    if state.shape != (DIM,):
        raise ValueError(f"state must have shape ({DIM},), got {state.shape}")
    return state


def ry_matrix(theta: float) -> np.ndarray:
    # Real rotation; the first column is all that matters when acting on |0>.
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


def apply_ry(state: np.ndarray, wire: int, theta: float) -> np.ndarray:
    """Return a new state with Ry(theta) applied to ``wire``."""
    wire = _check_wire(wire)
    if not math.isfinite(theta):
        raise ValueError(f"rotation angle must be finite, got {theta}")
    state = _as_state(state)
    m = ry_matrix(theta)
    bit = 1 << wire
    out = state.copy()
    for i in range(DIM):
        if i & bit:
            continue
        j = i | bit
        a, b = state[i], state[j]
        out[i] = m[0, 0] * a + m[0, 1] * b
        out[j] = m[1, 0] * a + m[1, 1] * b
    return out


def apply_cnot(state: np.ndarray, control: int, target: int) -> np.ndarray:
    """Return a new state with the target bit flipped wherever the control bit is set."""
    control = _check_wire(control, "control")
    target = _check_wire(target, "target")
    if control == target:
        raise ValueError(f"CNOT control and target must differ, got {control}")
    state = _as_state(state)
    cbit, tbit = 1 << control, 1 << target
    perm = np.array([i ^ tbit if i & cbit else i for i in range(DIM)])
    return state[perm]


def expectation_z(state: np.ndarray, wire: int) -> float:
    wire = _check_wire(wire)
    state = _as_state(state)
    bit = 1 << wire
    total = 0.0
    for i in range(DIM):
        p = state[i].real ** 2 + state[i].imag ** 2
        total += -p if i & bit else p
    return total


def _check_pixels(pixels: np.ndarray) -> np.ndarray:
    pixels = np.asarray(pixels, dtype=np.float64)
    if not np.all(np.isfinite(pixels)):
        raise ValueError("pixel values must be finite")
    if pixels.size and (pixels.min() < 0.0 or pixels.max() > 1.0):
        raise ValueError(
            f"pixel values must lie in [0, 1], got range [{pixels.min()}, {pixels.max()}]"
        )
    return pixels


def run_circuit(pixels: Sequence[float], spec: CircuitSpec) -> np.ndarray:
    """Encode four pixels with Ry(pi*x), apply the CNOTs, return per-wire <Z>."""
    pixels = _check_pixels(pixels)
    if pixels.shape != (N_QUBITS,):
        raise ValueError(f"expected {N_QUBITS} pixels, got shape {pixels.shape}")
    state = init_ground()
    for wire, x in enumerate(pixels):
        state = apply_ry(state, wire, math.pi * x)
    for control, target in spec.cnots:
        state = apply_cnot(state, control, target)
    return np.array([expectation_z(state, w) for w in range(N_QUBITS)])


def _cnot_array(cnots: Iterable[tuple[int, int]]) -> np.ndarray:
    arr = np.asarray(list(cnots), dtype=np.int64).reshape(-1, 2)
    return np.ascontiguousarray(arr)


def run_circuit_batch(windows: np.ndarray, spec: CircuitSpec, kernel=None) -> np.ndarray:
    """Evaluate the circuit for every row of an ``(n, 4)`` pixel array.

    ``kernel`` overrides the module chosen at import (used by the benchmark).
    """
    windows = np.ascontiguousarray(_check_pixels(windows), dtype=np.float64)
    if windows.ndim != 2 or windows.shape[1] != N_QUBITS:
        raise ValueError(f"windows must have shape (n, {N_QUBITS}), got {windows.shape}")
    kernel = _kernel if kernel is None else kernel
    return kernel.run_batch(windows, _cnot_array(spec.cnots))
