"""Intensity measures on bounded windows and (mixed) Poisson configurations."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf

from .quadrature import integrate_box


class DensityBoundError(RuntimeError):
    """A density value exceeded the declared ``rho_max`` during rejection sampling."""


@dataclass(frozen=True)
class Window:
    """The centred box ``[-half_side, half_side]^d``."""

    d: int
    half_side: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError("d must be a positive integer")
        if not self.half_side > 0:
            raise ValueError("half_side must be positive")

    @property
    def lo(self):
        return np.full(self.d, -float(self.half_side))

    @property
    def hi(self):
        return np.full(self.d, float(self.half_side))

    @property
    def volume(self) -> float:
        return (2.0 * self.half_side) ** self.d

    def contains(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, self.d)
        return np.all(np.abs(points) <= self.half_side, axis=1)


class Configuration:
    """Finite point configuration; repeated rows encode multiplicity."""

    __slots__ = ("points",)

    def __init__(self, points, d=None):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            if d is None:
                raise ValueError("d is required for a flat point array")
            pts = pts.reshape(-1, d)
        if pts.ndim != 2 or (d is not None and pts.shape[1] != d):
            raise ValueError(f"points must have shape (k, d), got {pts.shape}")
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        self.points = pts

    @classmethod
    def empty(cls, d):
        return cls(np.empty((0, d)))

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]

    def __repr__(self):
        return f"Configuration(k={len(self)}, d={self.d})"

    def __eq__(self, other):
        return isinstance(other, Configuration) and np.array_equal(self.points, other.points)

    def multiplicities(self):
        """Distinct points and how often each occurs."""
        if len(self) == 0:
            return np.empty((0, self.d)), np.empty(0, dtype=np.int64)
        return np.unique(self.points, axis=0, return_counts=True)

    def is_simple(self) -> bool:
        _, counts = self.multiplicities()
        return bool(np.all(counts <= 1))

    def restrict(self, lo, hi) -> "Configuration":
        """Points inside the closed box ``[lo, hi]``."""
        inside = np.all((self.points >= lo) & (self.points <= hi), axis=1)
        return Configuration(self.points[inside])

    def doubled(self) -> "Configuration":
        """Every point repeated twice (a configuration with all multiplicities 2)."""
        return Configuration(np.repeat(self.points, 2, axis=0))


@dataclass(frozen=True)
class MixingDistribution:
    """Finite atomic probability measure on ``[0, inf)`` for the intensity multiplier."""

    atoms: tuple

    def __post_init__(self):
        atoms = tuple((float(z), float(p)) for z, p in self.atoms)
        if not atoms:
            raise ValueError("at least one atom is required")
        if any(z < 0 or not np.isfinite(z) for z, _ in atoms):
            raise ValueError("atom locations must be finite and non-negative")
        if any(not p > 0 for _, p in atoms):
            raise ValueError("atom weights must be positive")
        if abs(sum(p for _, p in atoms) - 1.0) > 1e-12 * len(atoms):
            raise ValueError("atom weights must sum to 1")
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def point_mass(cls, z=1.0):
        return cls(((z, 1.0),))

    @classmethod
    def parse(cls, text: str):
        """Parse ``"z:p,z:p,..."``."""
        atoms = []
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            z, sep, p = part.partition(":")
            if not sep:
                raise ValueError(f"lambda atom {part!r} is not of the form z:p")
            atoms.append((float(z), float(p)))
        return cls(tuple(atoms))

    def format(self) -> str:
        return ",".join(f"{z!r}:{p!r}" for z, p in self.atoms)

    @property
    def z(self):
        return np.array([z for z, _ in self.atoms])

    @property
    def p(self):
        return np.array([p for _, p in self.atoms])

    @property
    def mean(self) -> float:
        return float(self.p @ self.z)

    @property
    def second_moment(self) -> float:
        return float(self.p @ self.z ** 2)

    def sample(self, rng: np.random.Generator) -> float:
        if len(self.atoms) == 1:
            return self.atoms[0][0]
        k = int(np.searchsorted(np.cumsum(self.p), rng.random() * self.p.sum(), side="right"))
        return self.atoms[min(k, len(self.atoms) - 1)][0]


@dataclass(frozen=True)
class IntensityMeasure:
    """``sigma(dx) = rho(x) dx`` restricted to a window.

    ``rho`` maps ``(m, d)`` arrays to ``m`` positive values.  ``box_mass`` is an
    optional closed form for ``sigma([lo, hi])``; without it boxes are
    integrated numerically.  ``total_mass`` is the mass of the whole window,
    computed the same way.
    """

    window: Window
    rho: Callable
    rho_max: float
    name: str = "custom"
    constant: float | None = None
    grad_log_rho: Callable | None = None
    box_mass: Callable | None = None
    rtol: float = 1e-8
    total_mass: float = field(init=False)

    def __post_init__(self):
        if not (self.rho_max > 0 and np.isfinite(self.rho_max)):
            raise ValueError("rho_max must be positive and finite")
        mass = self.mass(self.window.lo, self.window.hi)
        if not (mass > 0 and np.isfinite(mass)):
            raise ValueError(f"total mass must be positive and finite, got {mass}")
        object.__setattr__(self, "total_mass", float(mass))

    @property
    def d(self) -> int:
        return self.window.d

    def with_window(self, window: Window) -> "IntensityMeasure":
        if window.d != self.d:
            raise ValueError("window dimension mismatch")
        return IntensityMeasure(window, self.rho, self.rho_max, self.name, self.constant,
                                self.grad_log_rho, self.box_mass, self.rtol)

    def mass(self, lo, hi) -> float:
        """``sigma`` of the box ``[lo, hi]`` (not clipped to the window)."""
        lo = np.broadcast_to(np.asarray(lo, dtype=float), (self.d,))
        hi = np.broadcast_to(np.asarray(hi, dtype=float), (self.d,))
        if self.constant is not None:
            return float(self.constant * np.prod(hi - lo))
        if self.box_mass is not None:
            return float(self.box_mass(lo, hi))
        return integrate_box(self.rho, lo, hi, rtol=self.rtol)

    def integral(self, f, rtol=1e-8) -> float:
        """``∫_window f(x) rho(x) dx``."""
        return integrate_box(lambda x: f(x) * self.rho(x), self.window.lo, self.window.hi, rtol=rtol)


def constant_density(window: Window, c: float = 1.0) -> IntensityMeasure:
    c = float(c)
    if not c > 0:
        raise ValueError("density constant must be positive")
    d = window.d
    return IntensityMeasure(
        window,
        lambda x: np.full(np.shape(x)[0], c),
        rho_max=c,
        name="const" if c == 1.0 else f"const({c!r})",
        constant=c,
        grad_log_rho=lambda x: np.zeros((np.shape(x)[0], d)),
    )


def gaussian_bump_density(window: Window, floor=0.5, height=1.5, width=0.5, center=None) -> IntensityMeasure:
    """``rho(x) = floor + height * exp(-|x - center|^2 / (2 width^2))``."""
    if not (floor > 0 and height >= 0 and width > 0):
        raise ValueError("need floor > 0, height >= 0, width > 0")
    d = window.d
    c = np.zeros(d) if center is None else np.broadcast_to(np.asarray(center, dtype=float), (d,)).copy()

    def rho(x):
        x = np.asarray(x, dtype=float)
        return floor + height * np.exp(-np.sum((x - c) ** 2, axis=-1) / (2 * width ** 2))

    def grad_log_rho(x):
        x = np.asarray(x, dtype=float)
        g = height * np.exp(-np.sum((x - c) ** 2, axis=-1) / (2 * width ** 2))
        return (-(x - c) / width ** 2) * (g / (floor + g))[..., None]

    def box_mass(lo, hi):
        s = width * np.sqrt(2.0)
        one_d = width * np.sqrt(np.pi / 2) * (erf((hi - c) / s) - erf((lo - c) / s))
        return floor * np.prod(hi - lo) + height * np.prod(one_d)

    return IntensityMeasure(window, rho, rho_max=floor + height, name="bump",
                            grad_log_rho=grad_log_rho, box_mass=box_mass)


def density_from_name(name: str, window: Window) -> IntensityMeasure:
    if name == "const":
        return constant_density(window)
    if name == "bump":
        return gaussian_bump_density(window)
    raise ValueError(f"unknown density {name!r}; expected 'const' or 'bump'")


def draw_points(sigma: IntensityMeasure, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` i.i.d. points with density ``rho / total_mass`` on the window."""
    d, L = sigma.d, sigma.window.half_side
    if count == 0:
        return np.empty((0, d))
    if sigma.constant is not None:
        return rng.uniform(-L, L, size=(count, d))
    out = []
    need = count
    while need > 0:
        batch = max(2 * need, 16)
        cand = rng.uniform(-L, L, size=(batch, d))
        dens = np.asarray(sigma.rho(cand), dtype=float)
        if np.any(dens > sigma.rho_max) or np.any(~np.isfinite(dens)):
            raise DensityBoundError(f"rho exceeded rho_max={sigma.rho_max} (max seen {np.nanmax(dens)})")
        keep = cand[rng.random(batch) * sigma.rho_max < dens]
        out.append(keep[:need])
        need -= min(need, keep.shape[0])
    return np.concatenate(out, axis=0)


def sample_poisson(sigma: IntensityMeasure, z: float, rng: np.random.Generator) -> Configuration:
    if z < 0:
        raise ValueError("z must be non-negative")
    if z == 0:
        return Configuration.empty(sigma.d)
    count = int(rng.poisson(z * sigma.total_mass))
    return Configuration(draw_points(sigma, count, rng))


def sample_mixed_poisson(sigma: IntensityMeasure, lam: MixingDistribution, rng: np.random.Generator):
    """Draw ``z ~ lam`` and then a Poisson configuration with intensity ``z sigma``."""
    z = lam.sample(rng)
    return z, sample_poisson(sigma, z, rng)


def mixed_poisson_sampler(sigma: IntensityMeasure, lam: MixingDistribution):
    def sampler(rng):
        return sample_mixed_poisson(sigma, lam, rng)[1]

    return sampler


def laplace_exact(f, sigma: IntensityMeasure, lam: MixingDistribution, rtol=1e-8) -> float:
    """Mixed-Poisson Laplace functional ``sum_k p_k exp(z_k ∫ (e^f - 1) dsigma)``."""
    inner = sigma.integral(lambda x: np.expm1(f(x)), rtol=rtol)
    return float(lam.p @ np.exp(lam.z * inner))


def void_probability(sigma: IntensityMeasure, lam: MixingDistribution, lo, hi) -> float:
    """Probability that the box ``[lo, hi]`` (inside the window) holds no point."""
    return float(lam.p @ np.exp(-lam.z * sigma.mass(lo, hi)))


def pair_sum(f, gamma: Configuration) -> float:
    """``<f, gamma> = sum over points (with multiplicity) of f(x)``."""
    if len(gamma) == 0:
        return 0.0
    return float(np.sum(np.broadcast_to(f(gamma.points), (len(gamma),))))


def write_configurations_csv(path, configs: Sequence[Configuration]):
    configs = list(configs)
    d = configs[0].d if configs else 1
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replica_id"] + [f"x_{j + 1}" for j in range(d)])
        for r, cfg in enumerate(configs):
            for p in cfg.points:
                w.writerow([r] + [repr(float(v)) for v in p])


def read_configurations_csv(path, replicas: int | None = None) -> list[Configuration]:
    """Inverse of :func:`write_configurations_csv`.

    Empty configurations leave no rows, so pass ``replicas`` to recover
    trailing empty ones.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    d = len(rows[0]) - 1
    groups: dict[int, list] = {}
    for row in rows[1:]:
        groups.setdefault(int(row[0]), []).append([float(v) for v in row[1:]])
    count = replicas if replicas is not None else (max(groups) + 1 if groups else 0)
    return [Configuration(np.array(groups.get(r, np.empty((0, d)))).reshape(-1, d)) for r in range(count)]


def configurations_in(configs: Iterable[Configuration], window: Window) -> bool:
    return all(bool(np.all(window.contains(c.points))) for c in configs)
