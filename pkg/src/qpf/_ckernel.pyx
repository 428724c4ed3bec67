# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled statevector kernel: one 16-amplitude state per window."""

import numpy as np

from libc.math cimport cos, sin, M_PI


def run_batch(const double[:, ::1] windows, const long long[:, ::1] cnots):
    cdef Py_ssize_t n = windows.shape[0]
    cdef Py_ssize_t ncnot = cnots.shape[0]
    out = np.empty((n, 4), dtype=np.float64)
    cdef double[:, ::1] res = out
    cdef double complex st[16]
    cdef double complex a, b
    cdef double c, s, p, acc
    cdef Py_ssize_t r, i, k
    cdef int w, bit, cbit, tbit

    with nogil:
        for r in range(n):
            for i in range(16):
                st[i] = 0
            st[0] = 1
            for w in range(4):
                c = cos(0.5 * M_PI * windows[r, w])
                s = sin(0.5 * M_PI * windows[r, w])
                bit = 1 << w
                for i in range(16):
                    if i & bit:
                        continue
                    a = st[i]
                    b = st[i | bit]
                    st[i] = c * a - s * b
                    st[i | bit] = s * a + c * b
            for k in range(ncnot):
                cbit = 1 << cnots[k, 0]
                tbit = 1 << cnots[k, 1]
                for i in range(16):
                    if (i & cbit) and not (i & tbit):
                        a = st[i]
                        st[i] = st[i | tbit]
                        st[i | tbit] = a
            for w in range(4):
                bit = 1 << w
                acc = 0.0
                for i in range(16):
                    p = st[i].real * st[i].real + st[i].imag * st[i].imag
                    if i & bit:
                        acc -= p
                    else:
                        acc += p
                res[r, w] = acc
    return out
