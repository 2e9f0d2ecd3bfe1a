"""Configuration-space Dirichlet forms: point-process sampling, square field
operators, the bump test functions u_n and Monte Carlo checks of their
energy scaling."""

from .bumps import BumpFamily, grad_phi_i, indicator_I_i, phi, phi_i, phi_prime, psi, psi_prime
from .diffusion import HitStats, SDEConfig, annulus_hit_exact, annulus_hit_mc, simulate_paths
from .dirichlet import (CylinderFunction, EnergyEstimate, InnerFunction, SupCylinderFunction, energy_mc,
                        intrinsic_gradient, square_field, square_field_sup)
from .exceptional import (EnergyBound, ScalingResult, cell_mass, exact_exceedance, explicit_energy_bound,
                          indicator_N, multiplicity_hit_rate, scaling_experiment, u_n_eval)
from .gibbs import PairPotential, empirical_density_bound, hard_core, sample_gibbs, soft_core
from .measures import (Configuration, IntensityMeasure, MixingDistribution, Window, constant_density,
                       gaussian_bump_density, laplace_exact, pair_sum, sample_mixed_poisson, sample_poisson)
from .streams import Streams

__version__ = "0.1.0"
