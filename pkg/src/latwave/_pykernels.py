"""Pure numpy implementation of the lattice hot loops (fallback backend)."""
from __future__ import annotations

import numpy as np

KIND_HOST_VECTOR = 0
KIND_AGE_STRUCTURED = 1
KIND_NICHOLSON = 2

NAME = "python"


def sym_convolve(u, offsets, weights, left, right, out):
    """out[i] = sum_j weights[j] * u[i - offsets[j]], reading ``left``/``right`` outside."""
    n = u.shape[0]
    r = int(np.max(np.abs(offsets))) if offsets.shape[0] else 0
    if r == 0:
        out[:] = u * weights.sum()
        return out
    pad = np.empty(n + 2 * r)
    pad[:r] = left
    pad[r:r + n] = u
    pad[r + n:] = right
    dense = np.zeros(2 * r + 1)
    np.add.at(dense, offsets + r, weights)
    # np.convolve flips the second argument, which is what u[i - k] needs
    out[:] = np.convolve(pad, dense, mode="valid")
    return out


def laplacian(u, out, d, stride, lo, hi):
    """out[lo:hi+1] = d (u[i+s] - 2u[i] + u[i-s]); zero elsewhere."""
    out[:] = 0.0
    s = stride
    out[lo:hi + 1] = d * (u[lo + s:hi + 1 + s] - 2.0 * u[lo:hi + 1] + u[lo - s:hi + 1 - s])
    return out


def reaction(u, v, kind, params):
    if kind == KIND_HOST_VECTOR:
        a, b = params[0], params[1]
        return -a * u + b * v * (1.0 - u)
    if kind == KIND_AGE_STRUCTURED:
        delta, q = params[0], params[1]
        return -delta * u * u + q * v
    if kind == KIND_NICHOLSON:
        delta, p, a = params[0], params[1], params[2]
        return -delta * u + p * v * np.exp(-a * v)
    raise ValueError(f"unknown reaction kind {kind}")


def lattice_rhs(u, conv, out, d, stride, lo, hi, kind, params):
    """Discrete Laplacian plus built-in reaction on free nodes lo..hi."""
    laplacian(u, out, d, stride, lo, hi)
    sl = slice(lo, hi + 1)
    out[sl] += reaction(u[sl], conv[sl], kind, params)
    return out
