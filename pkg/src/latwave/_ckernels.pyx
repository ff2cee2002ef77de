# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled lattice hot loops; same signatures as ``_pykernels``."""
import numpy as np
from libc.math cimport exp

NAME = "cython"

cdef enum:
    KIND_HOST_VECTOR = 0
    KIND_AGE_STRUCTURED = 1
    KIND_NICHOLSON = 2


def sym_convolve(const double[::1] u, const long[::1] offsets, const double[::1] weights,
                 double left, double right, double[::1] out):
    cdef Py_ssize_t n = u.shape[0], nw = weights.shape[0]
    cdef Py_ssize_t i, j, r = 0, base, b0, b1
    cdef Py_ssize_t block = 2048
    cdef double wj
    for j in range(nw):
        if abs(offsets[j]) > r:
            r = abs(offsets[j])
    # padded copy keeps the inner loop branch-free (and vectorizable)
    cdef double[::1] pad = np.empty(n + 2 * r)
    with nogil:
        for i in range(r):
            pad[i] = left
            pad[r + n + i] = right
        for i in range(n):
            pad[r + i] = u[i]
            out[i] = 0.0
        # blocks of out stay in cache while every weight is applied
        b0 = 0
        while b0 < n:
            b1 = b0 + block if b0 + block < n else n
            for j in range(nw):
                wj = weights[j]
                base = r - offsets[j]
                for i in range(b0, b1):
                    out[i] += wj * pad[base + i]
            b0 = b1
    return np.asarray(out)


def laplacian(const double[::1] u, double[::1] out, double d, Py_ssize_t stride,
              Py_ssize_t lo, Py_ssize_t hi):
    cdef Py_ssize_t i, n = u.shape[0]
    with nogil:
        for i in range(n):
            out[i] = 0.0
        for i in range(lo, hi + 1):
            out[i] = d * (u[i + stride] - 2.0 * u[i] + u[i - stride])
    return np.asarray(out)


def lattice_rhs(const double[::1] u, const double[::1] conv, double[::1] out, double d,
                Py_ssize_t stride, Py_ssize_t lo, Py_ssize_t hi, int kind,
                const double[::1] params):
    cdef Py_ssize_t i, n = u.shape[0]
    cdef double p0 = params[0], p1 = params[1] if params.shape[0] > 1 else 0.0
    cdef double p2 = params[2] if params.shape[0] > 2 else 0.0
    cdef double ui, vi, lap
    if kind < 0 or kind > 2:
        raise ValueError(f"unknown reaction kind {kind}")
    with nogil:
        for i in range(n):
            out[i] = 0.0
        for i in range(lo, hi + 1):
            ui = u[i]
            vi = conv[i]
            lap = d * (u[i + stride] - 2.0 * ui + u[i - stride])
            if kind == KIND_HOST_VECTOR:
                out[i] = lap - p0 * ui + p1 * vi * (1.0 - ui)
            elif kind == KIND_AGE_STRUCTURED:
                out[i] = lap - p0 * ui * ui + p1 * vi
            else:
                out[i] = lap - p0 * ui + p1 * vi * exp(-p2 * vi)
    return np.asarray(out)
