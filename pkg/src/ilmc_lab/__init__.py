"""Implicit Langevin Monte Carlo sampler and its verification apparatus."""

from .coupling import (ContractionReport, CoupledState, LyapunovConfig,
                       coupled_step, default_lyapunov, estimate_contraction,
                       lyapunov_f, wf_empirical)
from .errors import (AdmissibilityError, CoefficientError, ConfigurationError,
                     ConvergenceError, IlmcError, InputError, ParameterError,
                     SolverFailure)
from .fp1d import (DensityField, GradReport, Grid1D, InitialDensitySpec,
                   TailReport, entropy_curve, gibbs_density,
                   gradient_bound_check, make_initial_density, solve_ilmc_fp,
                   solve_langevin_fp, tail_sandwich_check)
from .metrics import (MetricReport, SlopeFit, fit_loglog_slope, kl_knn,
                      relative_entropy_grid, w1_empirical_1d)
from .potentials import (AssumptionReport, Potential, check_assumptions,
                         make_gaussian, make_ginzburg_landau, make_potential)
from .prox import (LipschitzReport, ProxConfig, lipschitz_probe, max_step_size,
                   phi, phi_inverse, prox_objective, r_prime)
from .samplers import (ChainConfig, SdeCoefficients, Trajectory,
                       em_explicit_sde_step, explicit_sde_crossval, ilmc_step,
                       interpolate_within_step, lmc_step, run_chain,
                       sde_coefficients)

__version__ = "0.1.0"
