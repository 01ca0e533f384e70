"""Adaptive Gauss-Legendre quadrature for smooth, vector-valued integrands.

The integrand is sampled on whole arrays of nodes at once and may return any
trailing shape, which lets one quadrature pass evaluate a kernel at many
momenta.  Each panel is accepted once the ``order``-point rule on the panel
and the sum of the rules on its two halves agree to within the panel's share
of the tolerance.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import NumericalError


@lru_cache(maxsize=16)
def _rule(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def _panel_sums(f, lo, hi, order):
    """Gauss-Legendre sums on each panel ``[lo_i, hi_i]``; returns shape ``(npanel, ...)``."""
    x, w = _rule(order)
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    nodes = mid[:, None] + half[:, None] * x[None, :]
    vals = np.asarray(f(nodes.ravel()))
    vals = vals.reshape((lo.size, order) + vals.shape[1:])
    wshape = (1, order) + (1,) * (vals.ndim - 2)
    return half.reshape((-1,) + (1,) * (vals.ndim - 2)) * np.sum(vals * w.reshape(wshape), axis=1)


def adaptive_gauss_legendre(f, a: float, b: float, tol: float = 1e-10, breakpoints=(),
                            order: int = 16, max_level: int = 40, rtol: float = 0.0):
    """Integrate ``f`` over ``[a, b]``.

    Parameters
    ----------
    f : callable
        Maps a 1-D node array of length ``p`` to an array with leading
        dimension ``p``.  Trailing dimensions are integrated independently.
    a, b : float
        Integration limits, ``a < b``.
    tol : float
        Absolute tolerance on the total (maximum over trailing components).
    breakpoints : sequence of float
        Interior points where panels are always split.
    order : int
        Points per panel.
    max_level : int
        Maximum bisection depth before giving up.
    rtol : float
        Optional relative tolerance; the effective target is
        ``max(tol, rtol * |value|)`` per component.

    Returns
    -------
    value : ndarray or float
    error : float
        Sum of the panel error estimates (maximum over components).

    Raises
    ------
    NumericalError
        If some panel is still unresolved after ``max_level`` bisections.
    """
    edges = np.unique(np.concatenate([[a, b], [p for p in breakpoints if a < p < b]]))
    lo, hi = edges[:-1].astype(float), edges[1:].astype(float)
    coarse = _panel_sums(f, lo, hi, order)
    length = b - a
    total = 0.0
    err_total = 0.0
    for level in range(max_level + 1):
        mid = 0.5 * (lo + hi)
        halves = _panel_sums(f, np.concatenate([lo, mid]), np.concatenate([mid, hi]), order)
        left, right = halves[: lo.size], halves[lo.size:]
        fine = left + right
        diff = np.abs(fine - coarse)
        diff = diff.reshape(lo.size, -1).max(axis=1)
        share = (hi - lo) / length
        target = tol * share
        if rtol > 0:
            scale = np.abs(fine).reshape(lo.size, -1).min(axis=1)
            target = np.maximum(target, rtol * scale * share)
        done = diff <= target
        total = total + np.sum(fine[done], axis=0)
        err_total += float(np.sum(diff[done]))
        if np.all(done):
            value = total
            return (float(value) if np.ndim(value) == 0 else value), err_total
        todo = ~done
        lo, mid_t, hi = lo[todo], mid[todo], hi[todo]
        coarse = np.concatenate([left[todo], right[todo]])
        lo, hi = np.concatenate([lo, mid_t]), np.concatenate([mid_t, hi])
    raise NumericalError(
        f"adaptive quadrature did not reach tol={tol:g} after {max_level} bisections",
        achieved=err_total + float(np.max(diff)))
