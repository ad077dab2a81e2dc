from .problem import ProblemSpec, make_problem, preset, load_problem, validate_problem
from .grid import SpaceTimeGrid, NodalVector, PiecewiseLinearFn, kappa, pi_n, discrete_laplacian, eigenfactor
from .skeleton import Control, DiscretePath, BallSampler, upsilon_n, upsilon_n_mild, upsilon_reference
from .inverse import invert_upsilon_n, modified_control
from .rate import OptimizerOptions, RateResult, action, rate_discrete, rate_linear_oracle, rate_reference
from .mc import NoisePlan, ThresholdEvent, estimate_rare, ldp_slope, simulate_terminal, slope_report
from .StudyLogger import StudyLogger, write_table
from .Utils import *

__all__ = [
    "ProblemSpec",
    "make_problem",
    "preset",
    "load_problem",
    "validate_problem",
    "SpaceTimeGrid",
    "NodalVector",
    "PiecewiseLinearFn",
    "kappa",
    "pi_n",
    "discrete_laplacian",
    "eigenfactor",
    "Control",
    "DiscretePath",
    "BallSampler",
    "upsilon_n",
    "upsilon_n_mild",
    "upsilon_reference",
    "invert_upsilon_n",
    "modified_control",
    "OptimizerOptions",
    "RateResult",
    "action",
    "rate_discrete",
    "rate_linear_oracle",
    "rate_reference",
    "NoisePlan",
    "ThresholdEvent",
    "estimate_rare",
    "ldp_slope",
    "slope_report",
    "simulate_terminal",
    "StudyLogger",
    "write_table",
]
