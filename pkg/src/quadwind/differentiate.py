"""Finite-difference second derivatives on uniformly sampled series."""

from functools import lru_cache
from math import factorial

import numpy as np

from .errors import TooShort

CENTRAL_WIDTH = 7
# one-sided stencils are wider so their truncation order is at least the central one's
EDGE_WIDTH = 10


@lru_cache(maxsize=None)
def stencil_weights(offsets, order=2):
    """Weights w with sum_j w_j f(o_j h) = h^order f^(order)(0) + O(h^len).

    Solves the Vandermonde moment conditions for the integer ``offsets``.
    """
    o = np.asarray(offsets, dtype=float)
    n = len(o)
    if order >= n:
        raise ValueError("need more nodes than the derivative order")
    V = np.vander(o, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[order] = factorial(order)
    w = np.linalg.solve(V, rhs)
    w.flags.writeable = False
    return w


def central_offsets(width=CENTRAL_WIDTH):
    half = width // 2
    return tuple(range(-half, half + 1))


def second_derivative(series, dt, width=CENTRAL_WIDTH, edge_width=EDGE_WIDTH):
    """Second derivative along axis 0.

    Interior points use the centred ``width``-point stencil; the first and
    last ``width // 2`` samples use one-sided stencils of ``edge_width``
    points (shrunk to the series length if shorter).
    """
    f = np.asarray(series, dtype=float)
    n = f.shape[0]
    if n < width:
        raise TooShort(f"series of length {n} is shorter than the {width}-point stencil")
    half = width // 2
    out = np.empty_like(f)
    w = stencil_weights(central_offsets(width))
    interior = np.zeros_like(f[half:n - half])
    for j, wj in enumerate(w):
        interior += wj * f[j:n - 2 * half + j]
    out[half:n - half] = interior
    m = min(edge_width, n)
    for i in range(half):
        wl = stencil_weights(tuple(range(-i, m - i)))
        out[i] = np.tensordot(wl, f[:m], axes=1)
        wr = stencil_weights(tuple(range(-(m - 1 - i), i + 1)))
        out[n - 1 - i] = np.tensordot(wr, f[n - m:], axes=1)
    return out / (dt * dt)
