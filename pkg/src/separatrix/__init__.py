"""Exponentially small separatrix splitting for generalized standard maps.

Map classification and inner equations (:mod:`.maps`), formal inner
solutions (:mod:`.formal`), analytic inner solutions and the constant
``omega_in`` (:mod:`.inner`), the Lazutkin invariant of the map itself
(:mod:`.manifold`) and the comparison machinery (:mod:`.asymptotics`).
"""
__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .maps import (BUILTIN_MAPS, InnerEquation, MapSpec, builtin_map, derive_inner, epsilon_of_h,
                   eval_map, jacobian, load_map_config, validate_hypotheses)
from .formal import (FormalSolution, LogPowerSeries, compose_g, eval_series, formal_delta2,
                     lambda_N, residual_order, solve_formal)
from .inner import (InnerSample, OmegaInResult, eval_inner_solution, linear_basis_H, omega_in,
                    wronskian)
from .manifold import (ManifoldExpansion, SplittingResult, first_homoclinic_phase, lazutkin_omega,
                       march_orbit, omega_tilde, unstable_coeffs)
from .asymptotics import (ExtrapolationModel, RhoResult, chi_for_map, compare_report, extrapolate,
                          singularity_rho)
