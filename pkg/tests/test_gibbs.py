import math

import numpy as np
import pytest
from scipy import stats

from confspace.gibbs import (PairPotential, empirical_density_bound, free, hard_core, interaction_integral,
                             sample_gibbs, soft_core, target_density, transition_density)
from confspace.measures import Configuration, Window, constant_density, gaussian_bump_density
from confspace.streams import Streams, replica_map


@pytest.mark.parametrize("potential", [soft_core(3.0, 0.3, 1.2), hard_core(0.2, 0.8)])
@pytest.mark.parametrize("rho", ["const", "bump"])
def test_detailed_balance(potential, rho):
    window = Window(2, 1.0)
    sigma = constant_density(window) if rho == "const" else gaussian_bump_density(window)
    rng = np.random.default_rng(0)
    for k in range(6):
        before = rng.uniform(-1, 1, (k, 2))
        after = np.vstack([before, rng.uniform(-1, 1, (1, 2))])
        lhs = target_density(potential, before) * transition_density(potential, sigma, before, after)
        rhs = target_density(potential, after) * transition_density(potential, sigma, after, before)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-300)


def test_interaction_integrals():
    hc = hard_core(0.2)
    assert hc.integrals[1] == pytest.approx(0.4, rel=1e-3)
    assert hc.integrals[2] == pytest.approx(math.pi * 0.04, rel=1e-3)
    assert hc.integrals[3] == pytest.approx(4 / 3 * math.pi * 0.008, rel=1e-3)
    with pytest.raises(ValueError):
        interaction_integral(lambda r: -1.0, 2)


def test_free_potential_gives_poisson_counts():
    sigma = constant_density(Window(2, 1.0))
    counts = np.array(replica_map(lambda g: len(sample_gibbs(free(2.0), sigma, 600, g)), Streams(1, "free"), 1200))
    mu = 2.0 * sigma.total_mass
    top = int(mu * 3)
    observed = np.bincount(np.minimum(counts, top), minlength=top + 1)
    expected = stats.poisson.pmf(np.arange(top + 1), mu)
    expected[-1] = stats.poisson.sf(top - 1, mu)
    keep = expected * counts.size >= 5
    obs = np.append(observed[keep], observed[~keep].sum())
    exp = np.append(expected[keep], expected[~keep].sum()) * counts.size
    assert stats.chisquare(obs, exp).pvalue > 1e-3


def test_hard_core_separation():
    sigma = constant_density(Window(2, 1.0))
    for r in range(20):
        g = sample_gibbs(hard_core(0.2, 5.0), sigma, 3000, Streams(2).generator(r))
        pts = g.points
        d = np.sqrt(np.sum((pts[:, None] - pts[None]) ** 2, axis=-1))
        assert len(g) > 5
        assert np.all(d[np.triu_indices(len(g), 1)] >= 0.2)


def test_soft_core_repulsion_lowers_density():
    sigma = constant_density(Window(2, 1.5))
    samples = replica_map(lambda g: sample_gibbs(soft_core(3.0, 0.3, 1.0), sigma, 3000, g), Streams(3), 100)
    mean = np.mean([len(s) for s in samples]) / sigma.total_mass
    assert mean < 1.0
    xi = empirical_density_bound(samples, sigma.window, 3)
    assert mean <= xi <= 1.1


def test_empirical_density_bound_on_known_counts():
    w = Window(1, 1.0)
    samples = [Configuration([[-0.5], [0.5], [0.6]])] * 100
    assert empirical_density_bound(samples, w, 2) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        empirical_density_bound(samples[:10], w, 2)


def test_sampler_is_deterministic_and_validates():
    sigma = constant_density(Window(2, 1.0))
    pot = soft_core()
    assert sample_gibbs(pot, sigma, 500, Streams(4).generator(0)) == sample_gibbs(pot, sigma, 500,
                                                                                 Streams(4).generator(0))
    with pytest.raises(ValueError):
        sample_gibbs(pot, sigma, 0, Streams(4).generator(0))
    with pytest.raises(ValueError):
        PairPotential(lambda x: 0.0, activity=0.0)
