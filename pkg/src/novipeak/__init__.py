"""Peakons and multipeakons of the Novikov equation: particle dynamics,
asymptotic speeds, stability audits and a grid PDE solver."""

from . import errors
from .errors import PeakonError
from .field import (EnergyPair, GridField, PeakonConfig, energy_E, energy_pair_grid,
                    eval_field, eval_field_deriv, field_maximum, functional_F, h1_distance,
                    h1_inner_exact, hypothesis_norm, peakon, piecewise_quad,
                    reconstruct_from_momentum, train)
from .harness import Scenario, parse_config, perturb, run
from .ode import IntegratorSettings, OdeState, Trajectory, conservation_report, integrate, ode_rhs
from .pde import PdeSettings, helmholtz_solve, pde_integrate, pde_rhs
from .spectral import lambda_spectrum, verify_asymptotics

__version__ = "0.1.0"

__all__ = [
    "errors", "PeakonError",
    "EnergyPair", "GridField", "PeakonConfig", "energy_E", "energy_pair_grid", "eval_field",
    "eval_field_deriv", "field_maximum", "functional_F", "h1_distance", "h1_inner_exact",
    "hypothesis_norm", "peakon", "piecewise_quad", "reconstruct_from_momentum", "train",
    "Scenario", "parse_config", "perturb", "run",
    "IntegratorSettings", "OdeState", "Trajectory", "conservation_report", "integrate", "ode_rhs",
    "PdeSettings", "helmholtz_solve", "pde_integrate", "pde_rhs",
    "lambda_spectrum", "verify_asymptotics",
]
