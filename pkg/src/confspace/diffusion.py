"""Euler-Maruyama particle paths and two-particle collision statistics.

For Poisson-type reference measures the particles move independently, so
whether two of them ever collide is decided by their relative motion: a
Brownian motion run at twice the speed.  Hitting probabilities do not depend
on the speed, so the relative motion is simulated as a standard Brownian
motion started at distance ``r0``, and the probability of reaching the
``eps``-ball before the ``R``-sphere is compared with the classical exit
formulas.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .measures import Configuration, IntensityMeasure
from .streams import Streams

# Away from both boundaries the step grows to (distance / SAFETY)^2, which
# keeps the chance of an undetected boundary excursion within one step
# below P(chi^2_d > SAFETY^2), i.e. < 1e-7 for d <= 3.
SAFETY = 6.0
BLOCK = 2048


class DriftError(RuntimeError):
    """The drift could not be evaluated (non-finite value or non-positive density)."""


@dataclass(frozen=True)
class SDEConfig:
    d: int
    step: float
    horizon: float
    drift: Callable
    particle_count: int

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not self.horizon >= self.step:
            raise ValueError("horizon must be at least one step")
        if self.particle_count < 1 or self.d < 1:
            raise ValueError("d and particle_count must be positive")

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.step))


def zero_drift(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def density_drift(sigma: IntensityMeasure) -> Callable:
    """``x -> grad log rho(x) / 2``.

    With unit-variance Brownian increments this makes ``rho dx`` invariant;
    it is the process with generator ``Delta + grad log rho . grad`` run at
    half speed.
    """
    if sigma.grad_log_rho is None:
        raise ValueError("density has no grad_log_rho")

    def drift(x):
        x = np.asarray(x, dtype=float)
        if np.any(np.asarray(sigma.rho(x)) <= 0):
            raise DriftError("rho <= 0 at a particle position")
        return 0.5 * sigma.grad_log_rho(x)

    return drift


@dataclass(frozen=True)
class PathSummary:
    min_distance: float
    min_distance_time: float
    endpoint: Configuration


def _min_pair_distance(x):
    k = x.shape[0]
    if k < 2:
        return math.inf
    diff = x[:, None, :] - x[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    return float(dist[np.triu_indices(k, 1)].min())


def simulate_paths(cfg: SDEConfig, initial: Configuration, rng: np.random.Generator) -> PathSummary:
    """Independent Euler-Maruyama updates ``x += drift(x) h + sqrt(h) N(0, I)``.

    Tracks the smallest pairwise distance over all recorded times,
    including t = 0.
    """
    if len(initial) != cfg.particle_count or initial.d != cfg.d:
        raise ValueError("initial configuration must hold particle_count points in dimension d")
    x = np.array(initial.points, dtype=float)
    best, best_t = _min_pair_distance(x), 0.0
    h = cfg.step
    sq = math.sqrt(h)
    for s in range(1, cfg.steps + 1):
        b = cfg.drift(x)
        if not np.all(np.isfinite(b)):
            raise DriftError(f"non-finite drift at step {s}")
        x = x + b * h + sq * rng.standard_normal(x.shape)
        cur = _min_pair_distance(x)
        if cur < best:
            best, best_t = cur, s * h
    return PathSummary(best, best_t, Configuration(x))


@dataclass(frozen=True)
class HitStats:
    trials: int
    hits: int
    estimate: float
    std_error: float

    @classmethod
    def from_counts(cls, hits, trials):
        p = hits / trials
        return cls(int(trials), int(hits), p, math.sqrt(p * (1 - p) / trials))


def annulus_hit_exact(d, r0, eps, R) -> float:
    """Probability that Brownian motion from radius ``r0`` hits radius ``eps`` before ``R``."""
    if d not in (1, 2, 3):
        raise ValueError("d must be 1, 2 or 3")
    if not (0 < eps <= r0 <= R) or eps == R:
        raise ValueError("need 0 < eps <= r0 <= R and eps < R")
    if d == 1:
        return (R - r0) / (R - eps)
    if d == 2:
        return math.log(R / r0) / math.log(R / eps)
    return (1 / r0 - 1 / R) / (1 / eps - 1 / R)


def _annulus_block(d, r0, eps, R, trials, step, rng):
    x = np.zeros((trials, d))
    x[:, 0] = r0
    if r0 <= eps:
        return trials
    active = np.arange(trials)
    hits = 0
    while active.size:
        pos = x[active]
        r = np.sqrt(np.sum(pos * pos, axis=1))
        gap = np.minimum(r - eps, R - r)
        h = np.maximum(step, (gap / SAFETY) ** 2)
        pos += np.sqrt(h)[:, None] * rng.standard_normal((active.size, d))
        x[active] = pos
        r = np.sqrt(np.sum(pos * pos, axis=1))
        inner = r <= eps
        done = inner | (r >= R)
        hits += int(inner.sum())
        active = active[~done]
    return hits


def annulus_hit_mc(d, r0, eps, R, trials, step, streams: Streams, workers: int = 1) -> HitStats:
    """Monte Carlo hitting probability of the ``eps``-ball before the ``R``-sphere.

    Euler steps of size ``step`` are used within ``SAFETY * sqrt(step)`` of
    either boundary; farther out the step is ``(distance / SAFETY)^2``.
    Trials run in blocks of ``BLOCK``; block ``b`` uses ``streams.generator(b)``.
    """
    if not (0 < eps <= r0 < R):
        raise ValueError("need 0 < eps <= r0 < R")
    if trials < 1 or not step > 0:
        raise ValueError("need trials >= 1 and step > 0")
    sizes = [min(BLOCK, trials - lo) for lo in range(0, trials, BLOCK)]

    def run_block(b):
        return _annulus_block(d, r0, eps, R, sizes[b], step, streams.generator(b))

    if workers <= 1:
        hits = [run_block(b) for b in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            hits = list(pool.map(run_block, range(len(sizes))))
    return HitStats.from_counts(sum(hits), trials)


def eps_halving_trend(d, r0, eps, R, halvings, trials, step, streams: Streams, workers: int = 1):
    """Hit statistics for ``eps, eps/2, ..., eps/2^halvings``."""
    return [annulus_hit_mc(d, r0, eps / 2 ** k, R, trials, step, streams.child("halving", k), workers)
            for k in range(halvings + 1)]


COLLISION_COLUMNS = ["d", "r0", "eps", "R", "step", "trials", "mc_estimate", "std_error", "exact"]


def collision_row(d, r0, eps, R, step, stats: HitStats):
    return [d, repr(float(r0)), repr(float(eps)), repr(float(R)), repr(float(step)), stats.trials,
            repr(stats.estimate), repr(stats.std_error), repr(annulus_hit_exact(d, r0, eps, R))]


def write_collision_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLLISION_COLUMNS)
        w.writerows(rows)
