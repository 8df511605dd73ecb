"""sclaw: a numerical laboratory for 1-D stochastic scalar conservation laws.

Simulate the conservative-noise viscous conservation law on the unit
torus, compute its deterministic entropic limit, evaluate the first- and
second-order large-deviations cost functionals on concrete profiles, and
run importance-sampled rare-event experiments that exhibit the
variational structure empirically.
"""

__version__ = "0.1.0"

from .core import (BlowUpError, GridField, GridMismatchError, RngStream,
                   TorusGrid, Trajectory, TrajectoryMeta, gaussian_field,
                   h_minus1_distance, l1_distance, l1_space_time,
                   read_trajectory, trajectory_to_csv, write_trajectory)
from .entropy import (PiecewiseSmoothProfile, RhoMeasure, ShockCurve,
                      SplitReport, classify_splittable,
                      entropy_production_weak, h_functional,
                      jump_production_rate, piecewise_constant_profile,
                      rho_of_profile, sampled_production,
                      standing_shock_profile)
from .hyperbolic import (RiemannProblem, WaveFan, cfl_dt, riemann_exact,
                         solve_kruzkov, solve_viscous, two_jump_exact,
                         two_jump_initial)
from .model import (EntropyPair, EntropySampler, ModelCoefficients,
                    MollifierKernel, ValidationReport, conjugate_flux,
                    entropy_pair, kruzkov_pair, make_kernel,
                    polynomial_model, preset, product_sampler,
                    validate_hypotheses)
from .ratefun import (ControlField, DiscreteMeasure, YoungMeasureField,
                      control_from_target, i_functional, r_fun,
                      r_fun_bruteforce, young_dual_objective, young_i)
from .rareevent import (BernsteinReport, MartingalePaths, McEstimate,
                        TiltedRun, bernstein_check, brownian_paths,
                        ito_residual, mc_probability, simulate_tilted)
from .spde import (NoisePlan, SpdeParams, gradient_diagnostic, simulate,
                   stable_dt, step_em, step_split)
