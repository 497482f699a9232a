"""Grid-searching identification of nonlinearly parameterized stochastic control systems.

The package simulates scalar closed-loop systems y[t+1] = f(theta, phi[t]) +
u[t] + w[t+1], identifies theta (and the noise variance) by a grid-searching
estimator with an explicit feasibility threshold, and ships the structural
verification machinery around it: excitation scans of the recursive g
functions, lower densities of excitation sets, and the determinant
decomposition behind the minimum-eigenvalue growth bound, each cross-checked
against brute-force oracles in the test suite.
"""

from .boxes import Box
from .density import (Ball, DensityQuery, best_m_sym_lower_density,
                      lower_density, m_sym_lower_density)
from .estimator import (EstimateRecord, EstimatorConfig, GridSearchEstimator,
                        GridSpec, ResidualData, SigmaScenario, build_grid, c_phi,
                        g_hat, omega_indicator, run_estimation, sigma_domain)
from .excitation import (ExcitationReport, GNode, Verdict, excitation_point_simple,
                         g_eval, p_prime_membership, scan_betas)
from .harness import (EnsembleConfig, RateFit, counterexample_demo, fit_rate,
                      run_ensemble, variance_diagnostic)
from .inputs import ConstantInput, PlaybackInput, SineSweepInput, ZeroInput
from .models import (DeadZone, ExpressionModel, PowerBasis, SineProduct, SystemSpec,
                     evaluate_gradient, evaluate_model)
from .noise import NoiseSpec, gaussian, make_generator, student_t, uniform_symmetric
from .simulate import Trajectory, simulate, write_jsonl
from .spectral import (BoundCheck, MuNuTable, VectorFamily, build_mu_nu,
                       eigen_oracle, epsilon_condition, estimator_excitation_bridge,
                       min_eigenvalue_bound_check, minor_via_decomposition)

__version__ = "0.1.0"

__all__ = [
    "Box", "Ball", "DensityQuery", "lower_density", "m_sym_lower_density",
    "best_m_sym_lower_density", "EstimateRecord", "EstimatorConfig",
    "GridSearchEstimator", "GridSpec", "ResidualData", "SigmaScenario",
    "build_grid", "c_phi", "g_hat", "omega_indicator", "run_estimation",
    "sigma_domain", "ExcitationReport", "GNode", "Verdict",
    "excitation_point_simple", "g_eval", "p_prime_membership", "scan_betas",
    "EnsembleConfig", "RateFit", "counterexample_demo", "fit_rate",
    "run_ensemble", "variance_diagnostic", "ZeroInput", "ConstantInput",
    "SineSweepInput", "PlaybackInput", "DeadZone", "ExpressionModel",
    "PowerBasis", "SineProduct", "SystemSpec", "evaluate_gradient",
    "evaluate_model", "NoiseSpec", "gaussian", "make_generator", "student_t",
    "uniform_symmetric", "Trajectory", "simulate", "write_jsonl", "BoundCheck",
    "MuNuTable", "VectorFamily", "build_mu_nu", "eigen_oracle",
    "epsilon_condition", "estimator_excitation_bridge",
    "min_eigenvalue_bound_check", "minor_via_decomposition",
]
