"""Cylinder functions, the intrinsic gradient and the square field operator.

A cylinder function is ``u(gamma) = g(<f_1, gamma>, ..., <f_m, gamma>)``.  Its
intrinsic gradient at ``gamma`` is the vector field
``x -> sum_j (d_j g)(<f, gamma>) grad f_j(x)`` sampled at the points of gamma,
and ``Gamma(u, v)(gamma)`` integrates the pointwise inner product of two such
fields against gamma (multiplicities included).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .bumps import BumpFamily, grad_phi_i, phi_i, psi, psi_prime
from .measures import Configuration
from .streams import Streams, replica_map


@dataclass(frozen=True)
class InnerFunction:
    """Compactly supported ``f`` with its exact gradient.

    ``f`` maps ``(k, d)`` points to ``k`` values and ``grad`` to ``(k, d)``;
    both must vanish outside the box ``[lo, hi]``.
    """

    f: Callable
    grad: Callable
    lo: np.ndarray
    hi: np.ndarray


def smooth_bump(center, radius, height=1.0) -> InnerFunction:
    """``height * exp(1 - 1/(1 - |x-c|^2/r^2))`` inside the ball, 0 outside."""
    c = np.asarray(center, dtype=float)

    def f(x):
        q = np.sum((np.asarray(x) - c) ** 2, axis=-1) / radius ** 2
        inside = q < 1
        out = np.zeros(q.shape)
        out[inside] = height * np.exp(1.0 - 1.0 / (1.0 - q[inside]))
        return out

    def grad(x):
        x = np.asarray(x, dtype=float)
        q = np.sum((x - c) ** 2, axis=-1) / radius ** 2
        inside = q < 1
        out = np.zeros(x.shape)
        qi = q[inside]
        val = height * np.exp(1.0 - 1.0 / (1.0 - qi))
        # d/dx exp(1 - 1/(1-q)) = -exp(...) / (1-q)^2 * dq/dx,  dq/dx = 2 (x-c)/r^2
        out[inside] = (-val / (1.0 - qi) ** 2)[:, None] * 2.0 * (x[inside] - c) / radius ** 2
        return out

    return InnerFunction(f, grad, c - radius, c + radius)


def bump_inner(i, n) -> InnerFunction:
    """The partition bump ``phi_i`` at refinement ``n`` as an inner function."""
    i = np.asarray(i, dtype=float)
    return InnerFunction(lambda x: phi_i(i, n, x), lambda x: grad_phi_i(i, n, x), (i - 0.5) / n, (i + 1.5) / n)


@dataclass(frozen=True)
class CylinderFunction:
    """``u(gamma) = outer(<f_1, gamma>, ..., <f_m, gamma>)``.

    ``outer`` and ``outer_grad`` take a length-``m`` vector and return a
    scalar and a length-``m`` vector respectively.
    """

    inner: tuple
    outer: Callable
    outer_grad: Callable

    def __post_init__(self):
        object.__setattr__(self, "inner", tuple(self.inner))

    def pairings(self, gamma: Configuration) -> np.ndarray:
        pts = gamma.points
        if pts.shape[0] == 0:
            return np.zeros(len(self.inner))
        return np.array([float(np.sum(fj.f(pts))) for fj in self.inner])

    def __call__(self, gamma: Configuration) -> float:
        return float(self.outer(self.pairings(gamma)))

    def gradient(self, gamma: Configuration) -> np.ndarray:
        return intrinsic_gradient(self, gamma)

    def energy_density(self, gamma: Configuration) -> float:
        return square_field(self, self, gamma)


def linear(f: InnerFunction) -> CylinderFunction:
    """``gamma -> <f, gamma>`` (unbounded outer; fine on bounded configurations)."""
    return CylinderFunction((f,), lambda s: s[0], lambda s: np.ones(1))


def linear_combination(alpha: float, u: CylinderFunction, beta: float, w: CylinderFunction) -> CylinderFunction:
    """``alpha u + beta w`` as a cylinder function over the concatenated inner list."""
    m = len(u.inner)
    return CylinderFunction(
        u.inner + w.inner,
        lambda s: alpha * u.outer(s[:m]) + beta * w.outer(s[m:]),
        lambda s: np.concatenate([alpha * np.asarray(u.outer_grad(s[:m])), beta * np.asarray(w.outer_grad(s[m:]))]),
    )


def compose(h: Callable, h_prime: Callable, u: CylinderFunction) -> CylinderFunction:
    """``h o u`` for a smooth scalar ``h``."""
    return CylinderFunction(
        u.inner,
        lambda s: h(u.outer(s)),
        lambda s: h_prime(u.outer(s)) * np.asarray(u.outer_grad(s)),
    )


def intrinsic_gradient(u: CylinderFunction, gamma: Configuration) -> np.ndarray:
    """Gradient field of ``u`` at ``gamma``, one row per point (with multiplicity)."""
    pts = gamma.points
    k, d = pts.shape
    if k == 0:
        return np.empty((0, d))
    dg = np.asarray(u.outer_grad(u.pairings(gamma)), dtype=float)
    out = np.zeros((k, d))
    for coef, fj in zip(dg, u.inner):
        if coef != 0.0:
            out += coef * fj.grad(pts)
    return out


def square_field(u: CylinderFunction, v: CylinderFunction, gamma: Configuration) -> float:
    """``Gamma(u, v)(gamma) = sum_x <grad u(gamma; x), grad v(gamma; x)>``."""
    if len(gamma) == 0:
        return 0.0
    gu = intrinsic_gradient(u, gamma)
    gv = gu if v is u else intrinsic_gradient(v, gamma)
    return float(np.einsum("ij,ij->", gu, gv))


@dataclass(frozen=True)
class CellSums:
    """Per-cell aggregates of a configuration over the cells of A that it touches.

    ``keys`` are lexicographic positions in A (ascending); ``phi`` holds
    ``<phi_i, gamma>``, ``count`` holds ``<I_i, gamma>`` and ``grad_sq`` holds
    ``sum_x |grad phi_i(x)|^2``.
    """

    keys: np.ndarray
    phi: np.ndarray
    count: np.ndarray
    grad_sq: np.ndarray


class SupCylinderFunction:
    """``u_n(gamma) = psi(max_{i in A} <phi_i, gamma>)``.

    The maximum is not differentiable on ties; the gradient is taken from the
    maximizing index with the lexicographically smallest ``i``.
    """

    def __init__(self, family: BumpFamily):
        self.family = family

    def cell_sums(self, gamma: Configuration) -> CellSums:
        _, cells, phi_vals, grad_sq = self.family.contributions(gamma.points)
        if cells.shape[0] == 0:
            e = np.empty(0)
            return CellSums(np.empty(0, np.int64), e, np.empty(0, np.int64), e)
        keys = self.family.flat_index(cells)
        uniq, inv = np.unique(keys, return_inverse=True)
        m = uniq.size
        return CellSums(
            uniq,
            np.bincount(inv, weights=phi_vals, minlength=m),
            np.bincount(inv, minlength=m),
            np.bincount(inv, weights=grad_sq, minlength=m),
        )

    def sup(self, gamma: Configuration) -> float:
        sums = self.cell_sums(gamma)
        return float(sums.phi.max()) if sums.keys.size else 0.0

    def argmax(self, gamma: Configuration) -> np.ndarray:
        """Lexicographically smallest maximizing index ``i`` in A."""
        sums = self.cell_sums(gamma)
        fam = self.family
        side = 2 * fam.radius + 1
        if sums.keys.size == 0 or sums.phi.max() <= 0.0:
            key = 0  # every <phi_i, gamma> is 0; the first index of A wins
        else:
            key = int(sums.keys[int(np.argmax(sums.phi))])
        return np.array(np.unravel_index(key, (side,) * fam.d)) - fam.radius

    def __call__(self, gamma: Configuration) -> float:
        return float(psi(self.sup(gamma)))

    def energy_density(self, gamma: Configuration) -> float:
        return square_field_sup(self, gamma)

    def chain_bound(self, gamma: Configuration) -> float:
        """``36 n^2 d sum_{i in A} 1{<I_i,gamma> >= 2} <I_i,gamma>``."""
        sums = self.cell_sums(gamma)
        fam = self.family
        busy = sums.count[sums.count >= 2]
        return 36.0 * fam.n ** 2 * fam.d * float(busy.sum())

    def sup_gradient_bound(self, gamma: Configuration) -> float:
        """``psi'(sup)^2 * max_i sum_x |grad phi_i(x)|^2``."""
        sums = self.cell_sums(gamma)
        if sums.keys.size == 0:
            return 0.0
        return float(psi_prime(sums.phi.max())) ** 2 * float(sums.grad_sq.max())

    def evaluate(self, gamma: Configuration) -> "SupEvaluation":
        """Sup, value, ``Gamma(u_n)`` and chain bound from a single pass over the cells."""
        sums = self.cell_sums(gamma)
        if sums.keys.size == 0:
            return SupEvaluation(0.0, 0.0, 0.0, 0.0)
        j = int(np.argmax(sums.phi))
        top = float(sums.phi[j])
        energy = float(psi_prime(top)) ** 2 * float(sums.grad_sq[j]) if top > 0.0 else 0.0
        fam = self.family
        chain = 36.0 * fam.n ** 2 * fam.d * float(sums.count[sums.count >= 2].sum())
        return SupEvaluation(top, float(psi(top)), energy, chain)


class SupEvaluation(NamedTuple):
    sup: float
    value: float
    energy: float
    chain_bound: float


def square_field_sup(un: SupCylinderFunction, gamma: Configuration) -> float:
    """``psi'(sup_i <phi_i, gamma>)^2 * sum_x |grad phi_{i*}(x)|^2`` with ``i*`` the argmax."""
    return un.evaluate(gamma).energy


@dataclass(frozen=True)
class EnergyEstimate:
    mean: float
    std_error: float
    replicas: int

    def __post_init__(self):
        if self.replicas < 2:
            raise ValueError("replicas must be >= 2")
        if self.std_error < 0:
            raise ValueError("std_error must be non-negative")

    @classmethod
    def from_values(cls, values) -> "EnergyEstimate":
        v = np.asarray(values, dtype=float)
        return cls(float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size)), int(v.size))

    def row(self, label, n, d):
        return [label, n, d, self.replicas, repr(self.mean), repr(self.std_error)]


ENERGY_COLUMNS = ["label", "n", "d", "replicas", "mean", "std_error"]


def write_energy_csv(path, rows: Sequence[tuple]):
    """Rows are ``(label, n, d, EnergyEstimate)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ENERGY_COLUMNS)
        for label, n, d, est in rows:
            w.writerow(est.row(label, n, d))


def energy_mc(u, sampler: Callable, replicas: int, streams: Streams, workers: int = 1) -> EnergyEstimate:
    """Monte Carlo estimate of ``E(u, u) = E_mu[Gamma(u)(gamma)]``.

    ``u`` is a plain callable ``gamma -> Gamma(u)(gamma)`` or any object with
    an ``energy_density`` method; ``sampler(rng)`` returns one configuration.
    Replica ``r`` draws from ``streams.generator(r)``.
    """
    if replicas < 2:
        raise ValueError("replicas must be >= 2")
    density = getattr(u, "energy_density", u)
    values = replica_map(lambda rng: density(sampler(rng)), streams, replicas, workers)
    return EnergyEstimate.from_values(values)
