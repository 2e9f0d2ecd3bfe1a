"""Batch front-end: ``confspace <experiment> [--config FILE] [overrides]``.

Exit codes: 0 when every acceptance check passes, 1 for configuration
errors, 2 when an experiment's acceptance check fails.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diffusion import annulus_hit_exact, annulus_hit_mc, collision_row, eps_halving_trend, write_collision_csv
from .dirichlet import smooth_bump
from .exceptional import (exact_exceedance, gibbs_scaling_experiment, scaling_experiment, write_plot_data,
                          write_scaling_csv)
from .gibbs import soft_core
from .measures import (MixingDistribution, Window, constant_density, density_from_name, laplace_exact,
                       sample_mixed_poisson)
from .streams import Streams, replica_map

log = logging.getLogger("confspace")

EXPERIMENTS = ("laplace-check", "exceedance-check", "scaling", "gibbs-scaling", "collision")
EXIT_OK, EXIT_CONFIG, EXIT_FAIL = 0, 1, 2


class ConfigError(ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


def _int_list(text):
    return tuple(int(v) for v in str(text).replace(" ", "").split(",") if v)


def _float_list(text):
    return tuple(float(v) for v in str(text).replace(" ", "").split(",") if v)


@dataclass
class RunConfig:
    experiment: str
    seed: int
    d: tuple = ()
    n: tuple = (2, 4, 8, 16)
    a: int = 1
    replicas: int = 0
    rho: str = "const"
    lam: str = "1.0:1.0"
    masses: tuple = (0.1, 0.5, 1.0, 2.0, 5.0)
    amplitude: float = 3.0
    scale: float = 0.3
    activity: float = 1.0
    sweeps: int = 10000
    cell_count: int = 4
    r0: float = 0.5
    eps: float = 0.01
    R: float = 4.0
    step: float = 1e-6
    trials: int = 10000
    halvings: int = 4
    workers: int = 1
    out: str = "out"

    # key -> parser; order fixes the serialized layout
    PARSERS = {
        "experiment": str, "seed": int, "d": _int_list, "n": _int_list, "a": int, "replicas": int,
        "rho": str, "lam": str, "masses": _float_list, "amplitude": float, "scale": float,
        "activity": float, "sweeps": int, "cell_count": int, "r0": float, "eps": float, "R": float,
        "step": float, "trials": int, "halvings": int, "workers": int, "out": str,
    }

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError("experiment", f"must be one of {', '.join(EXPERIMENTS)}")
        if self.seed is None or self.seed < 0:
            raise ConfigError("seed", "a non-negative seed is required")
        if any(v not in (1, 2, 3) for v in self.d):
            raise ConfigError("d", "dimensions must be 1, 2 or 3")
        if self.experiment != "collision" and len(self.d) > 1:
            raise ConfigError("d", "only the collision experiment takes several dimensions")
        if not self.n or any(v < 1 for v in self.n) or any(b <= a for a, b in zip(self.n, self.n[1:])):
            raise ConfigError("n", "must be strictly increasing positive integers")
        if self.a < 1:
            raise ConfigError("a", "must be a positive integer")
        if self.replicas < 0 or (self.experiment in ("scaling", "gibbs-scaling") and 0 < self.replicas < 100):
            raise ConfigError("replicas", "must be >= 100 for scaling experiments (0 selects the default)")
        if self.experiment in ("laplace-check", "exceedance-check") and self.replicas == 1:
            raise ConfigError("replicas", "must be >= 2")
        if self.rho not in ("const", "bump"):
            raise ConfigError("rho", "must be 'const' or 'bump'")
        try:
            MixingDistribution.parse(self.lam)
        except ValueError as exc:
            raise ConfigError("lambda", str(exc)) from None
        if not self.masses or any(m < 0 for m in self.masses):
            raise ConfigError("masses", "must be non-negative")
        for key in ("amplitude", "scale", "activity", "step", "R"):
            if not getattr(self, key) > 0:
                raise ConfigError(key, "must be positive")
        if self.sweeps < 1 or self.cell_count < 1 or self.trials < 1 or self.halvings < 0 or self.workers < 1:
            raise ConfigError("sweeps/cell_count/trials/halvings/workers", "out of range")
        if self.step > 1e-4:
            raise ConfigError("step", "must be <= 1e-4")
        if not (0 < self.eps <= self.r0 < self.R):
            raise ConfigError("eps", "need 0 < eps <= r0 < R")
        return self

    def to_text(self) -> str:
        lines = []
        for key in self.PARSERS:
            value = getattr(self, key)
            if isinstance(value, tuple):
                value = ",".join(repr(v) for v in value)
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        parsed = {}
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key == "lambda":
                key = "lam"
            if key not in cls.PARSERS:
                raise ConfigError(key, "unknown key")
            try:
                parsed[key] = cls.PARSERS[key](raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(key, f"cannot parse {raw!r} ({exc})") from None
        for required in ("experiment", "seed"):
            if required not in parsed:
                raise ConfigError(required, "is required")
        return cls(**parsed)

    @staticmethod
    def parse_text(text: str) -> dict:
        values = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"line {lineno}", "expected key = value")
            values[key.strip()] = value.strip()
        return values


@dataclass
class Report:
    checks: list = field(default_factory=list)

    def check(self, name, ok, detail=""):
        self.checks.append((name, bool(ok), detail))
        return ok

    def note(self, name, detail):
        """Diagnostic line; never affects the exit status."""
        self.checks.append((name, None, detail))

    @property
    def passed(self):
        return all(ok is not False for _, ok, _ in self.checks)

    def text(self):
        tags = {True: "PASS", False: "FAIL", None: "NOTE"}
        return "".join(f"{tags[ok]} {name}: {detail}\n" for name, ok, detail in self.checks)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def laplace_test_functions(window: Window):
    """Five bounded test functions vanishing near the window boundary."""
    d, L = window.d, window.half_side
    e1 = np.eye(d)[0]
    b_centre = smooth_bump(np.zeros(d), 0.9 * L).f
    b_shift = smooth_bump(0.3 * L * e1, 0.5 * L).f
    b_wide = smooth_bump(np.zeros(d), 0.95 * L).f
    b_deep = smooth_bump(-0.4 * L * e1, 0.4 * L).f
    return {
        "zero": lambda x: np.zeros(np.shape(x)[0]),
        "bump+": lambda x: 0.5 * b_centre(x),
        "bump-": lambda x: -1.0 * b_shift(x),
        "wave": lambda x: 0.4 * np.sin(np.pi * np.asarray(x)[:, 0] / L) * b_wide(x),
        "deep": lambda x: -3.0 * b_deep(x),
    }


def run_laplace(cfg: RunConfig, out: Path, report: Report):
    d = cfg.d[0] if cfg.d else 2
    replicas = cfg.replicas or 100_000
    sigma = density_from_name(cfg.rho, Window(d, 1.0))
    lam = MixingDistribution.parse(cfg.lam)
    funcs = laplace_test_functions(sigma.window)
    names = list(funcs)

    def replica(rng):
        _, g = sample_mixed_poisson(sigma, lam, rng)
        if len(g) == 0:
            return [1.0] * len(names)
        return [math.exp(float(np.sum(funcs[k](g.points)))) for k in names]

    vals = np.array(replica_map(replica, Streams(cfg.seed, "laplace"), replicas, cfg.workers))
    rows = []
    for j, name in enumerate(names):
        exact = laplace_exact(funcs[name], sigma, lam)
        mean = float(vals[:, j].mean())
        se = float(vals[:, j].std(ddof=1) / math.sqrt(replicas))
        ok = abs(mean - exact) <= 3 * se if se > 0 else abs(mean - exact) <= 1e-12
        report.check(f"laplace[{name}]", ok, f"exact={exact:.6g} mc={mean:.6g}±{se:.3g}")
        rows.append([name, d, cfg.rho, lam.format(), replicas, repr(exact), repr(mean), repr(se), int(ok)])
    _write_rows(out / "laplace.csv",
                ["function", "d", "rho", "lambda", "replicas", "exact", "mc_mean", "mc_stderr", "pass"], rows)


def exceedance_series(m, lam: MixingDistribution, terms=200):
    """``sum_{k>=2} k P(N = k)`` summed term by term, mixed over lambda."""
    total = 0.0
    for z, p in lam.atoms:
        mu = z * m
        if mu == 0:
            continue
        term = math.exp(-mu) * mu  # k = 1 probability times 1
        acc = 0.0
        for k in range(2, terms):
            term *= mu / (k - 1)  # now k * P(N = k) = mu * P(N = k - 1)
            acc += term
        total += p * acc
    return total


def run_exceedance(cfg: RunConfig, out: Path, report: Report):
    replicas = cfg.replicas or 100_000
    lam = MixingDistribution.parse(cfg.lam)
    rows = []
    for idx, m in enumerate(cfg.masses):
        exact = exact_exceedance(m, lam)
        series = exceedance_series(m, lam)
        report.check(f"exceedance-series[m={m!r}]", abs(exact - series) <= 1e-12,
                     f"exact={exact!r} series={series!r}")
        if m > 0:
            # a unit-density window of volume m plays the role of one cell
            sigma = constant_density(Window(1, m / 2))

            def replica(rng, sigma=sigma):
                k = len(sample_mixed_poisson(sigma, lam, rng)[1])
                return k if k >= 2 else 0

            vals = np.array(replica_map(replica, Streams(cfg.seed, "exceedance", idx), replicas, cfg.workers),
                            dtype=float)
            mean, se = float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(replicas))
        else:
            mean, se = 0.0, 0.0
        ok = abs(mean - exact) <= 3 * se if se > 0 else abs(mean - exact) <= 1e-12
        report.check(f"exceedance-mc[m={m!r}]", ok, f"exact={exact:.6g} mc={mean:.6g}±{se:.3g}")
        rows.append([repr(float(m)), lam.format(), replicas, repr(exact), repr(series), repr(mean), repr(se)])
    _write_rows(out / "exceedance.csv",
                ["m", "lambda", "replicas", "exact", "series", "mc_mean", "mc_stderr"], rows)


def _report_scaling(result, report: Report, label):
    for e in result.entries:
        report.check(f"{label}[n={e.n}] mc <= tight bound + 3se", e.within_bound,
                     f"mean={e.estimate.mean:.6g}±{e.estimate.std_error:.3g} tight={e.bound.tight:.6g}")
    report.check(f"{label} pointwise chain", result.chain_violations == 0,
                 f"{result.chain_violations} violations over {sum(e.samples_checked for e in result.entries)}"
                 " configurations")


def run_scaling(cfg: RunConfig, out: Path, report: Report):
    d = cfg.d[0] if cfg.d else 2
    replicas = cfg.replicas or (10_000 if d <= 2 else 1_000)
    sigma = density_from_name(cfg.rho, Window(d, cfg.a + 1.0))
    lam = MixingDistribution.parse(cfg.lam)
    result = scaling_experiment(cfg.n, d, cfg.a, sigma, lam, replicas, Streams(cfg.seed, "scaling", d),
                                cfg.workers)
    write_scaling_csv(out / "scaling.csv", result)
    write_plot_data(out / "scaling_plot.csv", result)
    _report_scaling(result, report, "scaling")
    report.note("scaling saturation", " ".join(f"n={e.n}:{e.saturation:.4f}" for e in result.entries))
    sparse, sparse_se = result.sparse_slope()
    report.note("scaling sparse-regime slope", f"{sparse:.4g}±{sparse_se:.3g} (entries with saturation < 0.5)")
    slope = f"slope={result.fitted_slope:.4g}±{result.slope_std_error:.3g} excluded={result.excluded}"
    if d >= 3:
        report.check("scaling slope <= -0.5", result.slope_defined and result.fitted_slope <= -0.5, slope)
    elif d == 2:
        ok = all(e.estimate.mean <= e.bound.crude + 3 * e.estimate.std_error for e in result.entries)
        report.check("scaling bounded by crude bound", ok, slope)
    else:
        report.check("scaling slope >= -0.1", result.slope_defined and result.fitted_slope >= -0.1, slope)
    return result


def run_gibbs_scaling(cfg: RunConfig, out: Path, report: Report):
    d = cfg.d[0] if cfg.d else 2
    replicas = cfg.replicas or 500
    potential = soft_core(cfg.amplitude, cfg.scale, cfg.activity)
    result = gibbs_scaling_experiment(cfg.n, d, cfg.a, potential, replicas, cfg.sweeps,
                                      Streams(cfg.seed, "gibbs", d), cfg.workers, cfg.cell_count)
    write_scaling_csv(out / "gibbs_scaling.csv", result)
    write_plot_data(out / "gibbs_scaling_plot.csv", result)
    _report_scaling(result, report, "gibbs")
    report.check("gibbs density bound <= activity", result.density_bound <= cfg.activity * 1.1,
                 f"xi={result.density_bound:.6g} activity={cfg.activity!r}")
    return result


def run_collision(cfg: RunConfig, out: Path, report: Report):
    dims = cfg.d or (1, 2, 3)
    streams = Streams(cfg.seed, "collision")
    rows, base = [], {}
    for d in dims:
        trend = eps_halving_trend(d, cfg.r0, cfg.eps, cfg.R, cfg.halvings, cfg.trials, cfg.step,
                                  streams.child(d), cfg.workers)
        for k, stats in enumerate(trend):
            rows.append(collision_row(d, cfg.r0, cfg.eps / 2 ** k, cfg.R, cfg.step, stats))
        s0 = trend[0]
        exact = annulus_hit_exact(d, cfg.r0, cfg.eps, cfg.R)
        tol = max(3 * s0.std_error, 0.02)
        report.check(f"collision[d={d}] oracle", abs(s0.estimate - exact) <= tol,
                     f"mc={s0.estimate:.5g}±{s0.std_error:.3g} exact={exact:.5g} tol={tol:.3g}")
        base[d] = s0
        if cfg.halvings >= 1:
            ok, detail = trend_verdict(d, trend)
            report.check(f"collision[d={d}] eps-halving trend", ok, detail)
    if len(dims) > 1:
        ordered = [base[d].estimate for d in sorted(base)]
        report.check("collision decreasing in d", all(b < a for a, b in zip(ordered, ordered[1:])),
                     " > ".join(f"{v:.4g}" for v in ordered))
    write_collision_csv(out / "collision.csv", rows)


def trend_verdict(d, trend):
    """d = 1: the estimate plateaus at a positive level; d >= 2: it decreases.

    Plateau means the last and first estimates agree within
    ``max(3 joint se, 0.02)`` and stay above 0.5.  Decrease means a negative
    least-squares trend against the halving index and a final estimate
    below the first by more than 3 joint standard errors.
    """
    est = np.array([s.estimate for s in trend])
    se = np.array([s.std_error for s in trend])
    joint = math.hypot(se[0], se[-1])
    detail = " ".join(f"{v:.4g}" for v in est)
    if d == 1:
        return bool(abs(est[-1] - est[0]) <= max(3 * joint, 0.02) and est[-1] > 0.5), detail
    slope = np.polyfit(np.arange(est.size), est, 1)[0]
    return bool(slope < 0 and est[0] - est[-1] > 3 * joint), detail


RUNNERS = {
    "laplace-check": run_laplace,
    "exceedance-check": run_exceedance,
    "scaling": run_scaling,
    "gibbs-scaling": run_gibbs_scaling,
    "collision": run_collision,
}


def run(cfg: RunConfig) -> int:
    """Run one experiment; returns the process exit status."""
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text())
    report = Report()
    t0 = time.perf_counter()
    RUNNERS[cfg.experiment](cfg, out, report)
    log.info("%s finished in %.1fs", cfg.experiment, time.perf_counter() - t0)
    (out / "summary.txt").write_text(report.text())
    sys.stdout.write(report.text())
    return EXIT_OK if report.passed else EXIT_FAIL


def build_parser():
    p = argparse.ArgumentParser(prog="confspace", description=__doc__.splitlines()[0])
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="flat key = value file; command-line flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--d", help="dimension (collision: comma list, default 1,2,3)")
    p.add_argument("--n", help="comma-separated refinements, e.g. 2,4,8,16")
    p.add_argument("--a", type=int)
    p.add_argument("--replicas", type=int)
    p.add_argument("--rho", choices=("const", "bump"))
    p.add_argument("--lambda", dest="lam", help='mixing atoms "z:p,z:p,..."')
    p.add_argument("--masses", help="cell masses for exceedance-check")
    p.add_argument("--amplitude", type=float)
    p.add_argument("--scale", type=float)
    p.add_argument("--activity", type=float)
    p.add_argument("--sweeps", type=int)
    p.add_argument("--cell-count", type=int)
    p.add_argument("--r0", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--R", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--halvings", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args) -> RunConfig:
    values = {}
    if args.config:
        try:
            values.update(RunConfig.parse_text(Path(args.config).read_text()))
        except OSError as exc:
            raise ConfigError("config", str(exc)) from None
    values["experiment"] = args.experiment
    for f in dataclasses.fields(RunConfig):
        if f.name == "experiment":
            continue
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    return RunConfig.from_mapping(values)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = config_from_args(args)
        cfg.validate()
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    raise SystemExit(main())
