"""Communication-efficient exact and inexact consensus ADMM for simulated
federated learning, with runtime certification of the descent and rate
guarantees the algorithms come with."""

from .analysis import (
    RateReport,
    ResidualTriple,
    TraceRecord,
    check_rate_bound,
    descent_coefficients,
    lagrangian,
    lyapunov_coefficients,
    oracle_optimum,
    residuals,
    should_stop,
)
from .data import (
    ClientDataset,
    Federation,
    generate_regression,
    load_classification,
    partition,
)
from .estimators import ConsensusClassifier, ConsensusRegressor
from .fedcore import ClientState, CommLedger, ServerState, aggregate, dual_update, tau
from .losses import CurvatureMode, LeastSquares, Logistic
from .solvers import (
    ExplicitSigmas,
    HyperParams,
    LogScaleRule,
    MultiplierRule,
    SolveResult,
    run,
    sigma_schedule,
)

__all__ = [
    "ClientDataset",
    "ClientState",
    "CommLedger",
    "ConsensusClassifier",
    "ConsensusRegressor",
    "CurvatureMode",
    "ExplicitSigmas",
    "Federation",
    "HyperParams",
    "LeastSquares",
    "LogScaleRule",
    "Logistic",
    "MultiplierRule",
    "RateReport",
    "ResidualTriple",
    "ServerState",
    "SolveResult",
    "TraceRecord",
    "aggregate",
    "check_rate_bound",
    "descent_coefficients",
    "dual_update",
    "generate_regression",
    "lagrangian",
    "load_classification",
    "lyapunov_coefficients",
    "oracle_optimum",
    "partition",
    "residuals",
    "run",
    "should_stop",
    "sigma_schedule",
    "tau",
]

__version__ = "0.1.0"
