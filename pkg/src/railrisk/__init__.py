"""Passenger-flow simulation, capacity risk assessment and Gaussian Bayesian network risk prediction for rail transit networks."""

from .lgbn import GaussianBayesianNetwork, GBNModel, build_structure
from .predict import ExperimentConfig, PredictionReport, mape, run_experiment, wmape
from .risk import LogisticParams, RiskSnapshot, WeightRule, assess, assess_series, logistic
from .simulate import DemandProfile, FlowSnapshot, ODBatch, assign_flows, generate_od, run_simulation
from .topology import Network, NetworkError, load_network, shortest_route, validate_network

__all__ = [
    "DemandProfile",
    "ExperimentConfig",
    "FlowSnapshot",
    "GBNModel",
    "GaussianBayesianNetwork",
    "LogisticParams",
    "Network",
    "NetworkError",
    "ODBatch",
    "PredictionReport",
    "RiskSnapshot",
    "WeightRule",
    "assess",
    "assess_series",
    "assign_flows",
    "build_structure",
    "generate_od",
    "load_network",
    "logistic",
    "mape",
    "run_experiment",
    "run_simulation",
    "shortest_route",
    "validate_network",
    "wmape",
]
