"""Multiplicity events, energy bounds for u_n and the n-scaling experiments.

The bound chain implemented here: pointwise,
``Gamma(u_n)(gamma) <= 36 n^2 d sum_{i in A} 1{<I_i,gamma> >= 2} <I_i,gamma>``;
under a mixed Poisson law the expectation of each summand is
``∫ z m_i (1 - exp(-z m_i)) lambda(dz)`` with ``m_i = sigma(I_i)``, which is at
most ``m_i^2 ∫ z^2 lambda(dz)``.  The constants are this package's own
re-derivation; no explicit constant is published alongside the n^(2-d) rate.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .bumps import BumpFamily
from .dirichlet import EnergyEstimate, SupCylinderFunction
from .gibbs import PairPotential, empirical_density_bound, sample_gibbs
from .measures import (Configuration, IntensityMeasure, MixingDistribution, Window, constant_density,
                       sample_mixed_poisson)
from .quadrature import integrate_box
from .streams import Streams, replica_map


def indicator_N(gamma: Configuration, a: float) -> int:
    """1 iff some point of gamma in ``[-a, a]^d`` has multiplicity at least 2."""
    inside = gamma.restrict(-a, a)
    return 0 if inside.is_simple() else 1


def u_n_eval(family: BumpFamily, gamma: Configuration) -> float:
    return SupCylinderFunction(family)(gamma)


def exact_exceedance(m, lam: MixingDistribution):
    """``sum_k p_k z_k m (1 - exp(-z_k m))``: the mean of ``N 1{N >= 2}`` for ``N ~ mixed Poisson(m)``."""
    m = np.asarray(m, dtype=float)
    if np.any(m < 0):
        raise ValueError("cell mass must be non-negative")
    zm = np.multiply.outer(m, lam.z)
    out = (zm * -np.expm1(-zm)) @ lam.p
    return float(out) if out.ndim == 0 else out


def cell_mass(i, family: BumpFamily, sigma: IntensityMeasure, rtol=1e-8) -> float:
    """``<I_i, sigma>``: sigma of the half-open cube ``[(i - 1/2)/n, (i + 3/2)/n)^d``."""
    lo, hi = family.cell_box(i)
    if sigma.constant is not None:
        return float(sigma.constant * np.prod(hi - lo))
    return integrate_box(sigma.rho, lo, hi, rtol=rtol)


def cell_masses(family: BumpFamily, sigma: IntensityMeasure) -> np.ndarray:
    """Cell masses for every index of A in lexicographic order."""
    if sigma.constant is not None:
        return np.full(family.size, sigma.constant * (2.0 / family.n) ** family.d)
    out = np.empty(family.size)
    for k, i in enumerate(family.indices):
        lo, hi = family.cell_box(i)
        out[k] = sigma.mass(lo, hi)
    return out


@dataclass(frozen=True)
class EnergyBound:
    """Upper bounds on ``E(u_n, u_n)``.

    tight
        ``36 n^2 d sum_i exact_exceedance(m_i)``.
    crude
        ``36 n^2 d E[z^2] sum_i m_i^2``.
    cauchy_schwarz
        ``36 n^2 d E[z^2] 2^d (2/n)^d ∫ rho^2`` over the cover box.
    closed_form
        For constant density: ``36 n^2 d E[z^2] (2na+1)^d (c (2/n)^d)^2``;
        ``None`` otherwise.
    """

    tight: float
    crude: float
    cauchy_schwarz: float
    closed_form: float | None = None


def explicit_energy_bound(family: BumpFamily, sigma: IntensityMeasure, lam: MixingDistribution) -> EnergyBound:
    n, d = family.n, family.d
    pre = 36.0 * n ** 2 * d
    masses = cell_masses(family, sigma)
    tight = pre * float(np.sum(exact_exceedance(masses, lam)))
    crude = pre * lam.second_moment * float(np.sum(masses ** 2))
    h = family.cover_half_side
    rho_sq = integrate_box(lambda x: sigma.rho(x) ** 2, np.full(d, -h), np.full(d, h), rtol=1e-8)
    cs = pre * lam.second_moment * 2 ** d * (2.0 / n) ** d * rho_sq
    closed = None
    if sigma.constant is not None:
        closed = pre * lam.second_moment * (2 * n * family.a + 1) ** d * (sigma.constant * (2.0 / n) ** d) ** 2
    return EnergyBound(tight, crude, cs, closed)


@dataclass(frozen=True)
class ScalingEntry:
    n: int
    estimate: EnergyEstimate
    bound: EnergyBound
    chain_violations: int = 0
    samples_checked: int = 0
    saturation: float = 0.0  # fraction of samples with sup_i <phi_i, gamma> >= 2, where Gamma(u_n) = 0

    @property
    def within_bound(self) -> bool:
        return self.estimate.mean <= self.bound.tight + 3 * self.estimate.std_error


@dataclass
class ScalingResult:
    d: int
    a: int
    entries: list
    fitted_slope: float
    slope_std_error: float
    excluded: list = field(default_factory=list)
    density_bound: float | None = None

    def sparse_slope(self, max_saturation=0.5):
        """Log-log slope over entries whose saturation is below ``max_saturation``.

        Small n puts several points in some cell of almost every
        configuration, which switches the energy off; only the sparse
        entries follow the n^(2-d) regime.
        """
        use = [e for e in self.entries if e.saturation < max_saturation]
        return fit_log_slope([e.n for e in use], [e.estimate.mean for e in use],
                             [e.estimate.std_error for e in use])[:2]

    @property
    def chain_violations(self) -> int:
        return sum(e.chain_violations for e in self.entries)

    @property
    def slope_defined(self) -> bool:
        return math.isfinite(self.fitted_slope)


def fit_log_slope(ns, means, std_errors):
    """Least-squares slope of ``log mean`` against ``log n``.

    The slope's standard error propagates the Monte Carlo errors through the
    linear estimator, using ``var(log mean) ~ (se / mean)^2``.
    Returns ``(slope, slope_se, excluded_ns)``; entries with non-positive
    mean are excluded, and fewer than two usable entries give ``nan``.
    """
    ns = np.asarray(ns, dtype=float)
    means = np.asarray(means, dtype=float)
    ses = np.asarray(std_errors, dtype=float)
    use = means > 0
    excluded = [int(n) for n in ns[~use]]
    if use.sum() < 2:
        return float("nan"), float("nan"), excluded
    x = np.log(ns[use])
    y = np.log(means[use])
    xc = x - x.mean()
    w = xc / np.sum(xc ** 2)
    slope = float(w @ y)
    se = float(np.sqrt(np.sum(w ** 2 * (ses[use] / means[use]) ** 2)))
    return slope, se, excluded


def _check_ns(ns):
    ns = [int(n) for n in ns]
    if not ns or any(n < 1 for n in ns) or any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError("ns must be strictly increasing positive integers")
    return ns


def _entry(n, out, bound):
    """``out`` rows are ``(energy, chain_bound, sup)`` per sample."""
    violations = int(np.sum(out[:, 0] > out[:, 1] * (1 + 1e-12)))
    return ScalingEntry(n, EnergyEstimate.from_values(out[:, 0]), bound, violations, out.shape[0],
                        float(np.mean(out[:, 2] >= 2.0)))


def scaling_experiment(ns, d, a, sigma: IntensityMeasure, lam: MixingDistribution, replicas: int,
                       streams: Streams, workers: int = 1) -> ScalingResult:
    """Estimate ``E(u_n, u_n)`` under the mixed Poisson law for each ``n``.

    For every n the density is restricted to the box covering all cells of
    A, fresh configurations are drawn on stream family ``streams.child(n)``,
    and the pointwise chain inequality is checked on every sample.
    """
    ns = _check_ns(ns)
    if replicas < 100:
        raise ValueError("replicas must be >= 100")
    entries = []
    for n in ns:
        family = BumpFamily(n, a, d)
        local = sigma.with_window(Window(d, family.cover_half_side))
        un = SupCylinderFunction(family)

        def replica(rng, local=local, un=un):
            _, gamma = sample_mixed_poisson(local, lam, rng)
            ev = un.evaluate(gamma)
            return ev.energy, ev.chain_bound, ev.sup

        out = np.array(replica_map(replica, streams.child(n), replicas, workers))
        entries.append(_entry(n, out, explicit_energy_bound(family, local, lam)))
    slope, se, excluded = fit_log_slope(ns, [e.estimate.mean for e in entries],
                                        [e.estimate.std_error for e in entries])
    return ScalingResult(d, a, entries, slope, se, excluded)


def gibbs_scaling_experiment(ns, d, a, potential: PairPotential, replicas: int, sweeps: int, streams: Streams,
                             workers: int = 1, cell_count: int = 4) -> ScalingResult:
    """Energies of u_n under the birth-death Gibbs sampler on Lebesgue intensity.

    One Gibbs configuration per replica is drawn on the box covering every
    family and reused for all n.  Each entry's bound is the Poisson bound with
    ``lambda = point mass at xi``, where ``xi`` is the empirical one-point
    density bound of the samples.
    """
    ns = _check_ns(ns)
    if replicas < 100:
        raise ValueError("replicas must be >= 100")
    half = max(BumpFamily(n, a, d).cover_half_side for n in ns)
    window = Window(d, half)
    sigma = constant_density(window)
    samples = replica_map(lambda rng: sample_gibbs(potential, sigma, sweeps, rng), streams, replicas, workers)
    xi = empirical_density_bound(samples, window, cell_count)
    lam = MixingDistribution.point_mass(xi)
    entries = []
    for n in ns:
        family = BumpFamily(n, a, d)
        un = SupCylinderFunction(family)
        out = np.array([(ev.energy, ev.chain_bound, ev.sup) for ev in map(un.evaluate, samples)])
        entries.append(_entry(n, out, explicit_energy_bound(family, sigma, lam)))
    slope, se, excluded = fit_log_slope(ns, [e.estimate.mean for e in entries],
                                        [e.estimate.std_error for e in entries])
    return ScalingResult(d, a, entries, slope, se, excluded, density_bound=xi)


def multiplicity_hit_rate(sampler, a, samples: int, streams: Streams, workers: int = 1) -> float:
    """Fraction of sampled configurations with a multiple point in ``[-a, a]^d``."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    hits = replica_map(lambda rng: indicator_N(sampler(rng), a), streams, samples, workers)
    return float(np.mean(hits))


SCALING_COLUMNS = ["d", "n", "a", "replicas", "mc_mean", "mc_stderr", "bound_tight", "bound_crude"]
PLOT_COLUMNS = ["log_n", "log_mc_mean", "log_bound"]


def write_scaling_csv(path, result: ScalingResult):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCALING_COLUMNS)
        for e in result.entries:
            w.writerow([result.d, e.n, result.a, e.estimate.replicas, repr(e.estimate.mean),
                        repr(e.estimate.std_error), repr(e.bound.tight), repr(e.bound.crude)])


def write_plot_data(path, result: ScalingResult):
    """``(log n, log mc_mean, log tight bound)``; ``nan`` where the mean is zero."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLOT_COLUMNS)
        for e in result.entries:
            m = e.estimate.mean
            w.writerow([repr(math.log(e.n)), repr(math.log(m)) if m > 0 else "nan", repr(math.log(e.bound.tight))])
