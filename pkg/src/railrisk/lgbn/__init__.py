from .estimator import GaussianBayesianNetwork
from .model import (
    GBNModel,
    InsufficientSamplesError,
    LinearGaussianCPD,
    MissingEvidenceError,
    SingularCovarianceError,
    TrainingMatrix,
    fit_cpd_mle,
    fit_cpd_nnls,
    fit_mle,
    fit_nnls,
    log_likelihood,
    predict_covariance,
    predict_mean,
    predict_variance,
    propagate_means,
)
from .nnls import nnls
from .structure import BNStructure, NodeInfo, build_structure, feature_node, risk_node

__all__ = [
    "BNStructure",
    "GBNModel",
    "GaussianBayesianNetwork",
    "InsufficientSamplesError",
    "LinearGaussianCPD",
    "MissingEvidenceError",
    "NodeInfo",
    "SingularCovarianceError",
    "TrainingMatrix",
    "build_structure",
    "feature_node",
    "fit_cpd_mle",
    "fit_cpd_nnls",
    "fit_mle",
    "fit_nnls",
    "log_likelihood",
    "nnls",
    "predict_covariance",
    "predict_mean",
    "predict_variance",
    "propagate_means",
    "risk_node",
]
