"""Spectral Newton solvers for complex Monge-Ampere equations on flat tori,
omega-psh envelopes, regularization, and the experiment harness built on them."""
from .errors import *  # noqa: F401,F403
from .torus import (
    CurvatureConstants,
    GridSpec,
    MetricField,
    MetricFamily,
    conformal,
    curvature_constants,
    make_grid,
    make_metric,
)
from .spectral import (
    check_omega_psh,
    ddc,
    fit_exponent,
    integrate,
    lp_norm,
    ma_density,
    modulus_of_continuity,
    modulus_profile,
)
from .solver import SolverConfig, SolveResult, solve_exponential, solve_normalized, solve_penalized
from .regularization import kiselman_legendre, make_kernel, mollify
from .envelope import EnvelopeResult, envelope, envelope_hoelder_report, hoelder_synthesizer
from .config import ExperimentConfig, load_config
from .harness import ExperimentReport, emit_report, run, run_experiment

__version__ = "0.1.0"
