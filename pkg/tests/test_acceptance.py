"""Exit criteria, one test per criterion at its stated tolerance.

A PASS/FAIL line per criterion is printed in the terminal summary.
"""

import math
import time

import numpy as np
import pytest

from confspace.bumps import PHI_SLOPE, PSI_SLOPE, grad_phi_i, indicator_I_i, phi, phi_prime, psi, psi_prime
from confspace.cli import (Report, RunConfig, laplace_test_functions, main, run_collision, run_exceedance,
                           run_laplace)
from confspace.exceptional import exact_exceedance
from confspace.measures import MixingDistribution, Window, density_from_name, laplace_exact

SEED = 20240601


@pytest.mark.acceptance("1 bump envelopes, slopes and gradient bound")
def test_bump_bounds():
    t0 = time.perf_counter()
    t = np.linspace(-2.0, 4.0, 100_000)
    tol = 1e-12
    p, q = phi(t), psi(t)
    assert np.all((p >= -tol) & (p <= 1 + tol)) and np.all((q >= -tol) & (q <= 1 + tol))
    assert np.all(np.abs(p[(t >= 0) & (t <= 1)] - 1) <= tol)
    assert np.all(np.abs(p[(t <= -0.5) | (t >= 1.5)]) <= tol)
    assert np.all(np.abs(q[t <= 1]) <= tol) and np.all(np.abs(q[t >= 2] - 1) <= tol)
    assert np.max(np.abs(phi_prime(t))) <= PHI_SLOPE + tol
    assert np.max(np.abs(psi_prime(t))) <= PSI_SLOPE + tol
    rng = np.random.default_rng(SEED)
    for n in (1, 2, 4, 8):
        for d in (1, 2, 3):
            i = rng.integers(-n, n + 1, d)
            x = (i + rng.uniform(-1.0, 2.0, (10_000, d))) / n
            g2 = np.sum(grad_phi_i(i, n, x) ** 2, axis=-1)
            assert np.all(g2 <= 9 * n ** 2 * d * indicator_I_i(i, n, x) + tol), (n, d)
    assert time.perf_counter() - t0 < 10


LAPLACE_PAIRS = [
    dict(d=(2,), rho="const", lam="1.0:1.0"),
    dict(d=(2,), rho="bump", lam="0.5:0.3,2.0:0.7"),
    dict(d=(1,), rho="bump", lam="0.0:0.25,1.5:0.75"),
]


@pytest.mark.acceptance("2 Laplace functional, 5 functions x 3 (sigma, lambda) pairs, 1e5 samples")
def test_laplace_characterization(tmp_path):
    t0 = time.perf_counter()
    failures = []
    for k, pair in enumerate(LAPLACE_PAIRS):
        report = Report()
        run_laplace(RunConfig("laplace-check", seed=SEED, replicas=100_000, **pair), tmp_path, report)
        assert len(report.checks) == 5
        failures += [(pair, name, detail) for name, ok, detail in report.checks if not ok]
    assert not failures
    assert time.perf_counter() - t0 < 60


def test_laplace_exact_sanity():
    """laplace_exact of the zero function is exactly 1 for every pair."""
    for pair in LAPLACE_PAIRS:
        sigma = density_from_name(pair["rho"], Window(pair["d"][0], 1.0))
        funcs = laplace_test_functions(sigma.window)
        assert laplace_exact(funcs["zero"], sigma, MixingDistribution.parse(pair["lam"])) == 1.0


@pytest.mark.acceptance("3 exceedance identity: series to 1e-12 and MC within 3 se")
def test_exceedance_identity(tmp_path):
    t0 = time.perf_counter()
    for lam_text in ("1.0:1.0", "0.5:0.3,2.0:0.7"):
        lam = MixingDistribution.parse(lam_text)
        for m in (0.1, 0.5, 1.0, 2.0, 5.0):
            series = sum(p * sum(k * math.exp(-z * m) * (z * m) ** k / math.factorial(k) for k in range(2, 150))
                         for z, p in lam.atoms)
            assert abs(exact_exceedance(m, lam) - series) <= 1e-12
        report = Report()
        run_exceedance(RunConfig("exceedance-check", seed=SEED, replicas=100_000, lam=lam_text), tmp_path, report)
        assert report.passed, report.text()
    assert time.perf_counter() - t0 < 30


@pytest.mark.acceptance("4 pointwise chain Gamma(u_n) <= 36 n^2 d sum 1{N_i >= 2} N_i, zero violations")
def test_pointwise_chain(chain_ledger, scaling_results, gibbs_result):
    # the default experiments alone contribute 2 * 4 * 10^4 + 4 * 10^3 + 4 * 500 configurations
    assert chain_ledger.checked >= 86_000
    assert chain_ledger.violations == []


@pytest.mark.acceptance("5.i MC energy <= tight bound + 3 se, n in {2,4,8,16}, d in {1,2,3}")
def test_energy_within_bound(scaling_results):
    results, _, elapsed = scaling_results
    bad = [(d, e.n, e.estimate, e.bound.tight) for d, r in results.items() for e in r.entries if not e.within_bound]
    assert not bad
    assert elapsed < 600


@pytest.mark.acceptance("5.ii d=3 fitted log-log slope <= -0.5")
def test_slope_decays_in_d3(scaling_results):
    r = scaling_results[0][3]
    assert r.slope_defined and r.fitted_slope <= -0.5, (
        f"slope {r.fitted_slope:.3f} ± {r.slope_std_error:.3f}; means "
        + ", ".join(f"n={e.n}: {e.estimate.mean:.3g} (saturation {e.saturation:.3f})" for e in r.entries))


@pytest.mark.acceptance("5.iii d=2 MC energies bounded by the crude bound")
def test_d2_bounded(scaling_results):
    r = scaling_results[0][2]
    assert all(e.estimate.mean <= e.bound.crude + 3 * e.estimate.std_error for e in r.entries)


@pytest.mark.acceptance("5.iv d=1 fitted log-log slope >= -0.1")
def test_d1_no_decay(scaling_results):
    r = scaling_results[0][1]
    assert r.slope_defined and r.fitted_slope >= -0.1


@pytest.mark.acceptance("6 soft-core Gibbs d=2: chain holds, energies below the xi-scaled bound + 3 se")
def test_gibbs_transfer(gibbs_result):
    res, report, elapsed = gibbs_result
    assert res.chain_violations == 0
    assert all(e.within_bound for e in res.entries)
    assert all(e.samples_checked >= 500 for e in res.entries)
    assert res.density_bound > 0
    assert elapsed < 600


@pytest.mark.acceptance("7 collision dichotomy: exit-formula oracle and eps-halving trend")
def test_collision_dichotomy(tmp_path):
    t0 = time.perf_counter()
    report = Report()
    run_collision(RunConfig("collision", seed=SEED, d=(1, 2, 3), r0=0.5, eps=0.01, R=4.0), tmp_path, report)
    names = [name for name, _, _ in report.checks]
    assert {f"collision[d={d}] oracle" for d in (1, 2, 3)} <= set(names)
    assert {f"collision[d={d}] eps-halving trend" for d in (1, 2, 3)} <= set(names)
    assert report.passed, report.text()
    assert time.perf_counter() - t0 < 300


DETERMINISM_RUNS = {
    "laplace-check": ["--replicas", "5000"],
    "exceedance-check": ["--replicas", "5000"],
    "scaling": ["--replicas", "300", "--d", "3"],
    "gibbs-scaling": ["--replicas", "120", "--sweeps", "1000"],
    "collision": ["--trials", "1000", "--step", "1e-5", "--eps", "0.05", "--halvings", "2"],
}


@pytest.mark.acceptance("8 byte-identical CSV on re-run and at 1 vs 8 workers")
def test_determinism(tmp_path):
    for experiment, extra in DETERMINISM_RUNS.items():
        outputs = []
        for k, workers in enumerate((1, 1, 8, 8)):
            out = tmp_path / f"{experiment}-{k}"
            main([experiment, "--seed", str(SEED), "--workers", str(workers), "--out", str(out), *extra])
            outputs.append({p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))})
        assert outputs[0], experiment
        assert all(o == outputs[0] for o in outputs), experiment
