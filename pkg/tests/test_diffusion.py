import math

import numpy as np
import pytest
from scipy import stats

from confspace.diffusion import (COLLISION_COLUMNS, DriftError, HitStats, SDEConfig, annulus_hit_exact, annulus_hit_mc,
                                 collision_row, density_drift, eps_halving_trend, simulate_paths, zero_drift)
from confspace.measures import Configuration, Window, constant_density, draw_points, gaussian_bump_density
from confspace.streams import Streams, replica_map


@pytest.mark.parametrize("d", [1, 2, 3])
def test_exact_hitting_probability_is_radial_harmonic(d):
    """h(r) solves h'' + (d-1)/r h' = 0 with h(eps) = 1 and h(R) = 0."""
    eps, R = 0.01, 4.0
    h = lambda r: annulus_hit_exact(d, r, eps, R)
    assert h(eps) == pytest.approx(1.0, abs=1e-14) and h(R) == pytest.approx(0.0, abs=1e-14)
    for r in (0.05, 0.5, 2.0):
        dr = 1e-4 * r
        second = (h(r + dr) - 2 * h(r) + h(r - dr)) / dr ** 2
        first = (h(r + dr) - h(r - dr)) / (2 * dr)
        assert abs(second + (d - 1) / r * first) <= 1e-4 * (abs(second) + abs(first) / r + 1e-12)


def test_exact_reference_values():
    # (R - r0)/(R - eps), log(R/r0)/log(R/eps), (1/r0 - 1/R)/(1/eps - 1/R) at (0.5, 0.01, 4)
    assert annulus_hit_exact(1, 0.5, 0.01, 4) == pytest.approx(3.5 / 3.99, rel=1e-14)
    assert annulus_hit_exact(2, 0.5, 0.01, 4) == pytest.approx(0.34707, abs=1e-5)
    assert annulus_hit_exact(3, 0.5, 0.01, 4) == pytest.approx(0.017544, abs=1e-6)
    with pytest.raises(ValueError):
        annulus_hit_exact(4, 0.5, 0.01, 4)
    with pytest.raises(ValueError):
        annulus_hit_exact(2, 0.005, 0.01, 4)


def test_mc_start_on_inner_sphere_always_hits():
    stats_ = annulus_hit_mc(3, 0.1, 0.1, 1.0, 500, 1e-6, Streams(0))
    assert stats_ == HitStats(500, 500, 1.0, 0.0)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_mc_matches_exact_on_wide_annulus(d):
    r0, eps, R = 0.5, 0.1, 2.0
    s = annulus_hit_mc(d, r0, eps, R, 4000, 1e-5, Streams(1, d))
    exact = annulus_hit_exact(d, r0, eps, R)
    assert abs(s.estimate - exact) <= max(3 * s.std_error, 0.02)


def test_mc_is_worker_independent():
    a = annulus_hit_mc(2, 0.5, 0.05, 2.0, 5000, 1e-5, Streams(2), workers=1)
    b = annulus_hit_mc(2, 0.5, 0.05, 2.0, 5000, 1e-5, Streams(2), workers=8)
    assert a == b


def test_eps_halving_uses_independent_streams():
    trend = eps_halving_trend(2, 0.5, 0.1, 2.0, 2, 1000, 1e-5, Streams(3))
    assert [t.trials for t in trend] == [1000] * 3
    assert trend[0].estimate > trend[2].estimate


def test_collision_row_layout():
    row = collision_row(2, 0.5, 0.01, 4.0, 1e-6, HitStats.from_counts(30, 100))
    assert len(row) == len(COLLISION_COLUMNS) and row[:2] == [2, "0.5"] and row[6] == "0.3"


def test_brownian_variance():
    cfg = SDEConfig(d=2, step=0.01, horizon=1.0, drift=zero_drift, particle_count=1)
    ends = np.array([simulate_paths(cfg, Configuration(np.zeros((1, 2))), g).endpoint.points[0]
                     for g in (Streams(4).generator(r) for r in range(3000))])
    # each coordinate is N(0, 1); the sample variance has sd ~ sqrt(2 / 3000)
    assert np.all(np.abs(ends.var(axis=0, ddof=1) - 1.0) < 4 * math.sqrt(2 / 3000))
    assert np.all(np.abs(ends.mean(axis=0)) < 4 / math.sqrt(3000))


def test_min_distance_tracking():
    cfg = SDEConfig(d=1, step=1e-3, horizon=0.1, drift=zero_drift, particle_count=2)
    start = Configuration([[0.0], [0.3]])
    summary = simulate_paths(cfg, start, Streams(5).generator(0))
    assert summary.min_distance <= 0.3
    assert 0.0 <= summary.min_distance_time <= 0.1 + 1e-12
    with pytest.raises(ValueError):
        simulate_paths(cfg, Configuration([[0.0]]), Streams(5).generator(0))


def test_density_drift_keeps_rho_invariant():
    """Start from rho dx restricted to a large window; after time 0.5 the law is unchanged."""
    sigma = gaussian_bump_density(Window(1, 6.0), floor=0.02, height=1.0, width=0.5)
    drift = density_drift(sigma)
    x0 = draw_points(sigma, 4000, Streams(6).generator(0))
    cfg = SDEConfig(d=1, step=1e-3, horizon=0.5, drift=drift, particle_count=4000)
    # independent particles: one vectorised path is the same as 4000 single-particle paths
    x = x0.copy()
    g = Streams(6).generator(1)
    for _ in range(cfg.steps):
        x = x + drift(x) * cfg.step + math.sqrt(cfg.step) * g.standard_normal(x.shape)
    inner = np.abs(x[:, 0]) < 1.0
    assert stats.ks_2samp(x[inner, 0], x0[np.abs(x0[:, 0]) < 1.0, 0]).pvalue > 1e-3


def test_drift_errors():
    sigma = constant_density(Window(1, 1.0))
    assert np.all(density_drift(sigma)(np.ones((3, 1))) == 0.0)
    bad = SDEConfig(d=1, step=0.1, horizon=0.2, drift=lambda x: np.full_like(x, np.nan), particle_count=1)
    with pytest.raises(DriftError):
        simulate_paths(bad, Configuration([[0.0]]), Streams(0).generator(0))
    with pytest.raises(ValueError):
        SDEConfig(d=1, step=0.0, horizon=1.0, drift=zero_drift, particle_count=1)
