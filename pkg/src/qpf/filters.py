"""Quantum pre-processing filter: 2x2 windows -> 4-channel expectation maps.

Pixels of each window go to wires in row-major order::

    wire 0 | wire 1
    -------+-------
    wire 2 | wire 3

so CNOTs on (0, 3) and (1, 2) couple the two diagonals of the window.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .simkernel import CircuitSpec, run_circuit_batch

WINDOW = 2
CHANNELS = 4

KINDS = ("none", "encoding", "one-cnot", "two-cnot", "custom")


@dataclass(frozen=True)
class FilterVariant:
    """Which circuit (if any) is applied in front of the classifier.

    ``kind == "none"`` is the bypass used for the plain NN baseline: pixels are
    only rearranged into the 4-channel layout.
    """

    kind: str
    circuit: CircuitSpec | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown filter kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "none":
            if self.circuit is not None:
                raise ValueError("bypass variant takes no circuit")
            return
        circuit = self.circuit if self.circuit is not None else CircuitSpec()
        expected = {"encoding": 0, "one-cnot": 1, "two-cnot": 2}.get(self.kind)
        if expected is not None and len(circuit.cnots) != expected:
            raise ValueError(f"{self.kind} needs {expected} CNOTs, got {len(circuit.cnots)}")
        object.__setattr__(self, "circuit", circuit)

    @classmethod
    def none(cls) -> "FilterVariant":
        return cls("none")

    @classmethod
    def encoding_only(cls) -> "FilterVariant":
        return cls("encoding", CircuitSpec())

    @classmethod
    def one_cnot(cls, control: int = 0, target: int = 3) -> "FilterVariant":
        return cls("one-cnot", CircuitSpec(((control, target),)))

    @classmethod
    def two_cnots(cls, first=(0, 3), second=(1, 2)) -> "FilterVariant":
        return cls("two-cnot", CircuitSpec((tuple(first), tuple(second))))

    @classmethod
    def custom(cls, spec: CircuitSpec) -> "FilterVariant":
        return cls("custom", spec)

    @classmethod
    def parse(cls, kind: str, arrangement: str | None = None) -> "FilterVariant":
        """Build a variant from CLI-style ``--filter`` / ``--arrangement`` values."""
        if kind == "none":
            if arrangement:
                raise ValueError("--arrangement is not valid with --filter none")
            return cls.none()
        if kind == "encoding":
            if arrangement:
                raise ValueError("--arrangement is not valid with --filter encoding")
            return cls.encoding_only()
        if arrangement is None:
            defaults = {"one-cnot": "0 3", "two-cnot": "0 3 1 2"}
            if kind not in defaults:
                raise ValueError(f"--filter {kind} requires --arrangement")
            arrangement = defaults[kind]
        return cls(kind, CircuitSpec.from_label(arrangement))

    @property
    def label(self) -> str:
        if self.kind == "none":
            return "none"
        if self.kind == "encoding":
            return "encoding"
        return self.circuit.label

    @property
    def slug(self) -> str:
        """Filesystem-safe name, e.g. ``two-cnot_0-3-1-2``."""
        if self.kind in ("none", "encoding"):
            return self.kind
        return f"{self.kind}_{self.circuit.label.replace(' ', '-')}"


def _check_images(images: np.ndarray) -> np.ndarray:
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 3 or images.shape[1] != images.shape[2]:
        raise ValueError(f"expected a stack of square images (n, m, m), got {images.shape}")
    m = images.shape[1]
    if m == 0 or m % WINDOW:
        raise ValueError(f"image size must be a positive even number, got {m}")
    return images


def extract_windows(image: np.ndarray) -> list[tuple[tuple[float, float, float, float], int, int]]:
    """List every non-overlapping 2x2 window as ``(pixels, row, col)``."""
    image = _check_images(np.asarray(image)[None])[0]
    half = image.shape[0] // WINDOW
    out = []
    for r in range(half):
        for c in range(half):
            block = image[2 * r : 2 * r + 2, 2 * c : 2 * c + 2]
            out.append((tuple(float(v) for v in block.ravel()), r, c))
    return out


def window_array(images: np.ndarray) -> np.ndarray:
    """Reshape ``(n, m, m)`` images to ``(n, m/2, m/2, 4)`` window pixels."""
    images = _check_images(images)
    n, m, _ = images.shape
    h = m // WINDOW
    return images.reshape(n, h, WINDOW, h, WINDOW).transpose(0, 1, 3, 2, 4).reshape(n, h, h, CHANNELS)


def apply_filter_batch(images: np.ndarray, variant: FilterVariant, kernel=None) -> np.ndarray:
    """Filter a stack of images; returns ``(n, 4, m/2, m/2)`` float64."""
    windows = window_array(images)
    n, h, _, _ = windows.shape
    if variant.kind == "none":
        values = windows
    else:
        flat = windows.reshape(-1, CHANNELS)
        values = run_circuit_batch(flat, variant.circuit, kernel=kernel).reshape(n, h, h, CHANNELS)
    return np.ascontiguousarray(values.transpose(0, 3, 1, 2))


def apply_filter(image: np.ndarray, variant: FilterVariant) -> np.ndarray:
    """Filter one ``m x m`` image into a ``(4, m/2, m/2)`` feature map."""
    return apply_filter_batch(np.asarray(image)[None], variant)[0]


def enumerate_one_cnot_arrangements() -> list[FilterVariant]:
    return [
        FilterVariant.one_cnot(c, t)
        for c, t in itertools.permutations(range(CHANNELS), 2)
    ]


# Disjoint wire pairings of the 2x2 window: rows, columns, diagonals.
PAIRINGS = (((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2)))


def enumerate_two_cnot_arrangements() -> list[FilterVariant]:
    out = []
    for p, q in PAIRINGS:
        for first in (p, p[::-1]):
            for second in (q, q[::-1]):
                out.append(FilterVariant.two_cnots(first, second))
                out.append(FilterVariant.two_cnots(second, first))
    return out


def is_diagonal_pairing(variant: FilterVariant) -> bool:
    wires = {frozenset(pair) for pair in variant.circuit.cnots}
    return wires == {frozenset((0, 3)), frozenset((1, 2))}
