"""Numerical laboratory for Lipschitz estimates of (p,q)-growth minimizers
and the De Giorgi iteration behind them."""
from .grid import (BallRegion, Grid, GridError, ScalarField, VectorField, gradient, integrate_ball,
                   sphere_integral, sup_ball, superlevel_measure, truncate_above, w12_norm)
from .rearrangement import (RearrangementError, StepProfile, WeightedSamples, lorentz_n1,
                            lp_norm_from_profile, omega, omega_inverse, rearrange)
from .integrand import (ConvexityError, GrowthEnvelope, ModelIntegrand, PQParams,
                        RegularizedIntegrand, SingularityError, eval_d2F, eval_dF, eval_F,
                        find_eps0, regularize, verify_assumption)
from .solver import (EllipticCoefficients, MinimizationProblem, SolverError, SolveReport,
                     estimate_caccioppoli_constants, minimize, solve_linear, verify_subsolution)
from .degiorgi import (IterationConstants, linfty_bound, optimal_cutoff, run_iteration, tau,
                       theorem_exponents)

__version__ = "0.1.0"
