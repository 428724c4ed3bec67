"""Vectorised numpy statevector kernel; fallback when the compiled one is absent."""

import numpy as np

_DIM = 16
_CHUNK = 1 << 15

_LOW = [np.array([i for i in range(_DIM) if not i >> w & 1]) for w in range(4)]
_SIGNS = np.array([[-1.0 if i >> w & 1 else 1.0 for w in range(4)] for i in range(_DIM)])


def _run_chunk(windows, cnots):
    n = windows.shape[0]
    state = np.zeros((n, _DIM), dtype=np.complex128)
    state[:, 0] = 1.0
    half = 0.5 * np.pi * windows
    cos, sin = np.cos(half), np.sin(half)
    for w in range(4):
        lo = _LOW[w]
        hi = lo | (1 << w)
        a, b = state[:, lo], state[:, hi]
        c, s = cos[:, w : w + 1], sin[:, w : w + 1]
        state[:, lo] = c * a - s * b
        state[:, hi] = s * a + c * b
    for control, target in cnots:
        cbit, tbit = 1 << int(control), 1 << int(target)
        src = np.array([i for i in range(_DIM) if i & cbit and not i & tbit])
        dst = src | tbit
        state[:, src], state[:, dst] = state[:, dst], state[:, src].copy()
    probs = state.real**2 + state.imag**2
    return probs @ _SIGNS


def run_batch(windows, cnots):
    windows = np.asarray(windows, dtype=np.float64)
    out = np.empty((windows.shape[0], 4))
    for start in range(0, windows.shape[0], _CHUNK):
        stop = start + _CHUNK
        out[start:stop] = _run_chunk(windows[start:stop], cnots)
    return out
