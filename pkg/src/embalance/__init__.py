"""Empirical balanced truncation of nonlinear state-space systems."""

from .balancing import (
    ReducedModel,
    ReductionBasis,
    balance,
    project_bilinear,
    project_linear,
    project_nonlinear,
    stability_check,
)
from .bench import ExperimentConfig, compare_all, rms_error, run_pipeline
from .carleman import PolynomialDrift, bilinearize, carleman_lift, taylor_drift
from .estimator import BalancedTruncation
from .exceptions import *  # noqa: F401,F403
from .gramians import (
    AveragedFundamental,
    QuadratureConfig,
    averaged_fundamental,
    bilinear_controllability,
    bilinear_gramians,
    bilinear_input_term,
    lall_controllability,
    lall_observability,
    linear_part_gramians,
    lti_gramians,
    ltv_gramians,
    nonlinear_controllability,
    nonlinear_observability,
)
from .linalg import Gramian, conditioned_inverse, psd_factor, solve_lyapunov, svd
from .models import (
    BilinearModel,
    LTVModel,
    NonlinearModel,
    PerturbationSets,
    build_rc_ladder,
    potential,
    preset,
    random_stable_lti,
)
from .io import load_lti, read_csv, save_lti, write_csv
from .ode import IntegratorConfig, Trajectory, impulse_response, integrate, mean_value

__version__ = "0.1.0"
