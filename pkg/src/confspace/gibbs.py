"""Pair potentials and a grand-canonical birth-death Metropolis-Hastings sampler.

The target on a window W is the law with density proportional to
``activity^|gamma| * exp(-sum_{x<y} Phi(x - y))`` with respect to the Poisson
measure with intensity sigma restricted to W.  A birth proposes a point drawn
from ``rho / sigma(W)``; a death removes a uniformly chosen point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma as gamma_fn, pi
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .measures import Configuration, IntensityMeasure, Window, draw_points


def _sphere_area(d):
    return 2 * pi ** (d / 2) / gamma_fn(d / 2)


@dataclass(frozen=True)
class PairPotential:
    """Pair potential ``Phi`` (function of the displacement) plus an activity.

    ``radial`` is the profile ``r -> Phi(r e_1)`` for rotation-invariant
    potentials; when given, integrability of ``|exp(-Phi) - 1|`` is verified
    at construction for d = 1, 2, 3.
    """

    phi_pair: Callable
    activity: float
    radial: Callable | None = None
    name: str = "custom"
    integrals: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.activity > 0:
            raise ValueError("activity must be positive")
        if self.radial is not None:
            for d in (1, 2, 3):
                self.integrals[d] = interaction_integral(self.radial, d)

    def energy(self, x, others) -> float:
        """``sum_y Phi(x - y)`` over the rows of ``others``."""
        if others.shape[0] == 0:
            return 0.0
        return float(np.sum(self.phi_pair(x[None, :] - others)))


def interaction_integral(radial, d, tol=0.01):
    """``∫_{R^d} |exp(-Phi(x)) - 1| dx`` for a radial potential.

    Doubles the cutoff radius until the integral changes by less than ``tol``
    (relative); raises ``ValueError`` when it keeps growing.
    """
    area = _sphere_area(d)

    def integrand(r):
        return abs(np.exp(-radial(r)) - 1.0) * area * r ** (d - 1)

    cutoff, prev = 1.0, None
    for _ in range(12):
        val, _ = quad(integrand, 0.0, cutoff, limit=200)
        if prev is not None and abs(val - prev) <= tol * max(abs(val), 1e-300):
            return val
        prev, cutoff = val, 2 * cutoff
    raise ValueError(f"∫|exp(-Phi) - 1| dx does not converge in d={d}")


def soft_core(amplitude=2.0, scale=0.25, activity=1.0) -> PairPotential:
    """Gaussian repulsion ``amplitude * exp(-|x|^2 / scale^2)``."""
    if not (amplitude > 0 and scale > 0):
        raise ValueError("amplitude and scale must be positive")

    def phi_pair(disp):
        return amplitude * np.exp(-np.sum(disp * disp, axis=-1) / scale ** 2)

    return PairPotential(phi_pair, activity, radial=lambda r: amplitude * np.exp(-r * r / scale ** 2),
                         name="soft-core")


def hard_core(radius=0.2, activity=1.0) -> PairPotential:
    """``Phi = +inf`` for ``|x| < radius`` and 0 otherwise."""

    def phi_pair(disp):
        return np.where(np.sum(disp * disp, axis=-1) < radius ** 2, np.inf, 0.0)

    return PairPotential(phi_pair, activity, radial=lambda r: np.inf if r < radius else 0.0, name="hard-core")


def free(activity=1.0) -> PairPotential:
    return PairPotential(lambda disp: np.zeros(disp.shape[0]), activity, radial=lambda r: 0.0, name="free")


def birth_acceptance(potential: PairPotential, points: np.ndarray, x: np.ndarray, mass: float) -> float:
    """Acceptance probability of adding ``x`` to ``points``."""
    k = points.shape[0]
    ratio = potential.activity * mass / (k + 1) * np.exp(-potential.energy(x, points))
    return float(min(1.0, ratio))


def death_acceptance(potential: PairPotential, points: np.ndarray, index: int, mass: float) -> float:
    """Acceptance probability of removing ``points[index]``."""
    k = points.shape[0]
    rest = np.delete(points, index, axis=0)
    ratio = k / (potential.activity * mass) * np.exp(potential.energy(points[index], rest))
    return float(min(1.0, ratio))


def transition_density(potential: PairPotential, sigma: IntensityMeasure, before: np.ndarray, after: np.ndarray):
    """Kernel density of one proposal step between states differing by one point.

    For a birth ``before -> before + {x}`` the value is a density in ``x``
    with respect to ``sigma``; for a death it is a probability.  Detailed
    balance reads ``f(before) K(before, after) = f(after) K(after, before)``
    with ``f`` the density relative to the Poisson reference.
    """
    mass = sigma.total_mass
    if after.shape[0] == before.shape[0] + 1:
        return 0.5 / mass * birth_acceptance(potential, before, after[-1], mass)
    if after.shape[0] == before.shape[0] - 1:
        matches = [j for j in range(before.shape[0])
                   if np.array_equal(np.delete(before, j, axis=0), after)]
        k = before.shape[0]
        return sum(0.5 / k * death_acceptance(potential, before, j, mass) for j in matches)
    raise ValueError("states must differ by exactly one point")


def target_density(potential: PairPotential, points: np.ndarray) -> float:
    """Unnormalized density relative to the Poisson reference."""
    k = points.shape[0]
    h = sum(potential.energy(points[j], points[j + 1:]) for j in range(k - 1))
    return potential.activity ** k * float(np.exp(-h))


def sample_gibbs(potential: PairPotential, sigma: IntensityMeasure, sweeps: int, rng: np.random.Generator,
                 initial: Configuration | None = None) -> Configuration:
    """Run ``sweeps`` birth-or-death proposals from the empty configuration.

    All randomness is drawn up front in fixed order, so the result depends
    only on the generator state.
    """
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    d = sigma.d
    mass = sigma.total_mass
    births = rng.random(sweeps) < 0.5
    accept_u = rng.random(sweeps)
    pick_u = rng.random(sweeps)
    proposals = draw_points(sigma, int(births.sum()), rng)

    start = np.empty((0, d)) if initial is None else np.asarray(initial.points, dtype=float)
    cap = max(64, 2 * start.shape[0])
    pts = np.empty((cap, d))
    k = start.shape[0]
    pts[:k] = start
    zw = potential.activity * mass
    phi_pair = potential.phi_pair
    b = 0
    for s in range(sweeps):
        if births[s]:
            x = proposals[b]
            b += 1
            e = float(np.sum(phi_pair(x[None, :] - pts[:k]))) if k else 0.0
            ratio = zw / (k + 1) * np.exp(-e)
            if accept_u[s] < ratio:
                if k == cap:
                    cap *= 2
                    grown = np.empty((cap, d))
                    grown[:k] = pts[:k]
                    pts = grown
                pts[k] = x
                k += 1
        elif k > 0:
            j = min(int(pick_u[s] * k), k - 1)
            x = pts[j]
            others = np.delete(pts[:k], j, axis=0)
            e = float(np.sum(phi_pair(x[None, :] - others))) if k > 1 else 0.0
            ratio = k / zw * np.exp(e)
            if accept_u[s] < ratio:
                pts[j] = pts[k - 1]
                k -= 1
    return Configuration(pts[:k].copy())


def gibbs_sampler(potential: PairPotential, sigma: IntensityMeasure, sweeps: int):
    def sampler(rng):
        return sample_gibbs(potential, sigma, sweeps, rng)

    return sampler


def empirical_density_bound(samples, window: Window, cell_count: int) -> float:
    """Largest per-cell mean intensity over a ``cell_count^d`` grid on the window.

    Estimates the supremum of the one-point density from at least 100
    configurations.
    """
    samples = list(samples)
    if len(samples) < 100:
        raise ValueError("need at least 100 samples")
    if cell_count < 1:
        raise ValueError("cell_count must be positive")
    d, L = window.d, window.half_side
    counts = np.zeros((cell_count,) * d)
    for cfg in samples:
        if len(cfg) == 0:
            continue
        idx = np.floor((cfg.points + L) / (2 * L) * cell_count).astype(np.int64)
        idx = np.clip(idx, 0, cell_count - 1)
        np.add.at(counts, tuple(idx.T), 1)
    cell_volume = window.volume / cell_count ** d
    return float(counts.max() / (cell_volume * len(samples)))
