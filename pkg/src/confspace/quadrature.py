"""Composite tensor-product Gauss-Legendre quadrature on boxes."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


class QuadratureError(RuntimeError):
    """Raised when panel refinement stops before reaching the requested tolerance."""

    def __init__(self, message, value, achieved):
        super().__init__(f"{message} (value={value!r}, achieved relative change={achieved:.3e})")
        self.value = value
        self.achieved = achieved


@lru_cache(maxsize=None)
def _gauss(order):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    # map to [0, 1]
    return 0.5 * (nodes + 1.0), 0.5 * weights


def _composite_rule(lo, hi, panels, order):
    """Nodes and weights of the composite rule along each axis."""
    t, w = _gauss(order)
    axes = []
    for a, b in zip(lo, hi):
        h = (b - a) / panels
        starts = a + h * np.arange(panels)
        axes.append(((starts[:, None] + h * t[None, :]).ravel(), np.tile(w * h, panels)))
    return axes


def tensor_sum(f, lo, hi, panels, order, chunk=1 << 18):
    """Apply the composite rule with ``panels`` panels per axis to ``f``.

    ``f`` maps an ``(m, d)`` array of points to ``m`` values.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    d = lo.size
    axes = _composite_rule(lo, hi, panels, order)
    if d == 1:
        x, w = axes[0]
        return float(np.dot(np.asarray(f(x[:, None]), dtype=float), w))

    # Loop over the first axis to bound memory; vectorize the rest.
    rest_nodes = np.stack(np.meshgrid(*[ax[0] for ax in axes[1:]], indexing="ij"), axis=-1).reshape(-1, d - 1)
    rest_w = np.ones(1)
    for ax in axes[1:]:
        rest_w = np.multiply.outer(rest_w, ax[1]).ravel()
    x0, w0 = axes[0]
    per_slab = rest_nodes.shape[0]
    slabs = max(1, chunk // per_slab)
    total = 0.0
    for s in range(0, x0.size, slabs):
        xs = x0[s:s + slabs]
        pts = np.empty((xs.size, per_slab, d))
        pts[:, :, 0] = xs[:, None]
        pts[:, :, 1:] = rest_nodes[None, :, :]
        vals = np.asarray(f(pts.reshape(-1, d)), dtype=float).reshape(xs.size, per_slab)
        total += float(w0[s:s + slabs] @ (vals @ rest_w))
    return total


def integrate_box(f, lo, hi, rtol=1e-8, atol=1e-14, order=8, max_panels=None, full_output=False):
    """Integrate ``f`` over the box ``[lo, hi]`` by panel doubling.

    The panel count per axis doubles until two successive estimates agree to
    ``max(atol, rtol * |I|)``.

    Returns the integral, or ``(integral, achieved_relative_change)`` when
    ``full_output`` is set.  Raises :class:`QuadratureError` if ``max_panels``
    is reached first.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    if np.any(hi < lo):
        raise ValueError("box must satisfy lo <= hi")
    if np.any(hi == lo):
        return (0.0, 0.0) if full_output else 0.0
    d = lo.size
    if max_panels is None:
        max_panels = {1: 4096, 2: 256}.get(d, 64)

    panels = 1
    prev = tensor_sum(f, lo, hi, panels, order)
    while True:
        panels *= 2
        cur = tensor_sum(f, lo, hi, panels, order)
        change = abs(cur - prev)
        achieved = change / abs(cur) if cur != 0 else change
        if change <= max(atol, rtol * abs(cur)):
            return (cur, achieved) if full_output else cur
        if panels >= max_panels:
            raise QuadratureError("quadrature did not converge", cur, achieved)
        prev = cur

