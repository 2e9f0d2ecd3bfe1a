"""Cutoff functions and the cell partition used to build the test functions u_n.

``phi`` is 1 on [0, 1], vanishes off (-1/2, 3/2) and has slope at most 3;
``psi`` vanishes on (-inf, 1], equals 1 on [2, inf) and has slope at most 2.
Both ramps are the cubic smoothstep ``s(u) = 3u^2 - 2u^3``, so the functions
are C^1 rather than C^inf.  The peak slopes are 3 for phi (attained at the
ramp midpoints) and 3/2 for psi.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import product

import numpy as np

PHI_SLOPE = 3.0
PSI_SLOPE = 2.0


def _smoothstep(u):
    return u * u * (3.0 - 2.0 * u)


def _smoothstep_prime(u):
    return 6.0 * u * (1.0 - u)


def phi(t):
    t = np.asarray(t, dtype=float)
    rise = _smoothstep(np.clip(2.0 * t + 1.0, 0.0, 1.0))
    fall = _smoothstep(np.clip(3.0 - 2.0 * t, 0.0, 1.0))
    return np.where(t < 0.5, rise, fall)


def phi_prime(t):
    t = np.asarray(t, dtype=float)
    up = (t > -0.5) & (t < 0.0)
    down = (t > 1.0) & (t < 1.5)
    out = np.zeros_like(t)
    out = np.where(up, 2.0 * _smoothstep_prime(2.0 * t + 1.0), out)
    out = np.where(down, -2.0 * _smoothstep_prime(3.0 - 2.0 * t), out)
    return out


def psi(t):
    t = np.asarray(t, dtype=float)
    return _smoothstep(np.clip(t - 1.0, 0.0, 1.0))


def psi_prime(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 1.0) & (t < 2.0)
    return np.where(inside, _smoothstep_prime(t - 1.0), 0.0)


def _shifted(i, n, x):
    x = np.asarray(x, dtype=float)
    i = np.asarray(i, dtype=float)
    return n * x - i


def phi_i(i, n, x):
    """Tensor bump ``prod_k phi(n x_k - i_k)``; ``x`` has shape ``(..., d)``."""
    return np.prod(phi(_shifted(i, n, x)), axis=-1)


def grad_phi_i(i, n, x):
    """Exact gradient of :func:`phi_i`, shape ``(..., d)``."""
    t = _shifted(i, n, x)
    vals = phi(t)
    ders = phi_prime(t)
    d = t.shape[-1]
    out = np.empty_like(t)
    for j in range(d):
        others = np.prod(np.delete(vals, j, axis=-1), axis=-1) if d > 1 else 1.0
        out[..., j] = n * ders[..., j] * others
    return out


def indicator_I_i(i, n, x):
    """Product of the half-open indicators ``1[-1/2, 3/2)(n x_k - i_k)``."""
    t = _shifted(i, n, x)
    return np.all((t >= -0.5) & (t < 1.5), axis=-1).astype(float)


@dataclass(frozen=True)
class BumpFamily:
    """Partition data at refinement ``n`` over the box ``[-a, a]^d``.

    The index set is ``A = Z^d ∩ [-na, na]^d`` in lexicographic order.
    """

    n: int
    a: int
    d: int

    def __post_init__(self):
        for name in ("n", "a", "d"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")

    @property
    def radius(self) -> int:
        return self.n * self.a

    @property
    def size(self) -> int:
        return (2 * self.radius + 1) ** self.d

    @cached_property
    def indices(self) -> np.ndarray:
        r = self.radius
        return np.array(list(product(range(-r, r + 1), repeat=self.d)), dtype=np.int64).reshape(-1, self.d)

    def cell_box(self, i):
        """Support box ``[(i - 1/2)/n, (i + 3/2)/n)`` of ``I_i``."""
        i = np.asarray(i, dtype=float)
        return (i - 0.5) / self.n, (i + 1.5) / self.n

    @property
    def cover_half_side(self) -> float:
        """Half-side of the smallest centred box holding ``[-(a+1), a+1]^d`` and every cell of A."""
        return max(self.a + 1.0, self.a + 1.5 / self.n)

    def flat_index(self, cells):
        """Lexicographic position of integer cells in A (row-major in ``i + na``)."""
        side = 2 * self.radius + 1
        return np.ravel_multi_index(tuple((np.asarray(cells) + self.radius).T), (side,) * self.d)

    def contributions(self, points):
        """Every (point, cell) pair with ``I_i(x) = 1`` and ``i`` in A.

        Returns ``(point_index, cells, phi_values, grad_sq)`` where ``cells``
        is ``(m, d)`` and ``grad_sq`` holds ``|grad phi_i(x)|^2``.  Each point
        has at most ``2^d`` such cells.
        """
        points = np.asarray(points, dtype=float).reshape(-1, self.d)
        k = points.shape[0]
        n, d, r = self.n, self.d, self.radius
        if k == 0:
            return (np.empty(0, np.int64), np.empty((0, d), np.int64), np.empty(0), np.empty(0))
        # n x - i in [-1/2, 3/2) holds exactly for i in {c - 1, c}, c = floor(n x + 1/2)
        c = np.floor(n * points + 0.5).astype(np.int64)
        offsets = np.array(list(product((0, -1), repeat=d)), dtype=np.int64)
        cells = (c[:, None, :] + offsets[None, :, :]).reshape(-1, d)
        owner = np.repeat(np.arange(k), offsets.shape[0])
        keep = np.all(np.abs(cells) <= r, axis=1)
        cells, owner = cells[keep], owner[keep]
        x = points[owner]
        t = n * x - cells
        vals = phi(t)
        ders = phi_prime(t)
        grad = np.empty_like(t)
        for j in range(d):
            others = np.prod(np.delete(vals, j, axis=1), axis=1) if d > 1 else 1.0
            grad[:, j] = n * ders[:, j] * others
        return owner, cells, np.prod(vals, axis=1), np.einsum("ij,ij->i", grad, grad)
