from __future__ import annotations

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .model import (
    MAX_CONDITION,
    RIDGE,
    GBNModel,
    TrainingMatrix,
    fit_mle,
    fit_nnls,
    log_likelihood,
    predict_covariance,
    propagate_means,
)
from .structure import BNStructure

FITTERS = ("mle", "nnls")


def _as_frame(X, columns=None) -> pd.DataFrame:
    if isinstance(X, pd.DataFrame):
        return X
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"expected 2D input, got shape {X.shape}")
    if columns is None or len(columns) != X.shape[1]:
        raise ValueError("array input needs one column per node in structure order")
    return pd.DataFrame(X, columns=list(columns))


class GaussianBayesianNetwork(BaseEstimator):
    """Linear Gaussian Bayesian network with a fixed structure.

    Parameters
    ----------
    structure : BNStructure
        DAG to parameterize, usually from :func:`build_structure`.
    fitter : {"mle", "nnls"}
        Closed-form maximum likelihood, or slopes constrained to be non-negative.
    ridge : float
        Relative ridge, applied only when a parent covariance has condition number above ``1 / ridge`` (MLE only).
    max_condition : float
        Largest accepted condition number of a regularized parent covariance.
    nnls_tol : float
        Dual tolerance of the active-set solver (NNLS only).

    Attributes
    ----------
    model_ : GBNModel
    feature_names_in_ : ndarray of str
        Root node ids expected by :meth:`predict`.
    """

    def __init__(self, structure: BNStructure | None = None, fitter: str = "mle", ridge: float = RIDGE,
                 max_condition: float = MAX_CONDITION, nnls_tol: float = 1e-10):
        self.structure = structure
        self.fitter = fitter
        self.ridge = ridge
        self.max_condition = max_condition
        self.nnls_tol = nnls_tol

    def fit(self, X, y=None):
        """Fit every CPD from a frame holding one column per node (roots and risks)."""
        if self.structure is None:
            raise ValueError("structure is required")
        if self.fitter not in FITTERS:
            raise ValueError(f"fitter must be one of {FITTERS}, got {self.fitter!r}")
        frame = _as_frame(X, list(self.structure.nodes))
        data = TrainingMatrix.from_frame(frame)
        if self.fitter == "mle":
            self.model_ = fit_mle(self.structure, data, self.ridge, self.max_condition)
        else:
            self.model_ = fit_nnls(self.structure, data, self.nnls_tol)
        self.feature_names_in_ = np.array(self.structure.roots, dtype=object)
        self.n_features_in_ = len(self.feature_names_in_)
        return self

    @classmethod
    def from_model(cls, model: GBNModel, fitter: str = "mle") -> "GaussianBayesianNetwork":
        est = cls(structure=model.structure, fitter=fitter)
        est.model_ = model
        est.feature_names_in_ = np.array(model.structure.roots, dtype=object)
        est.n_features_in_ = len(est.feature_names_in_)
        return est

    def predict(self, X, nodes=None) -> pd.DataFrame:
        """Predicted means of non-root nodes (all, or ``nodes``) for each evidence row."""
        check_is_fitted(self, "model_")
        frame = _as_frame(X, list(self.feature_names_in_))
        evidence = {r: frame[r].to_numpy(dtype=float) for r in self.feature_names_in_ if r in frame}
        values = propagate_means(self.model_, evidence)
        wanted = list(nodes) if nodes is not None else self.model_.structure.non_roots
        return pd.DataFrame({n: values[n] for n in wanted}, index=frame.index)

    def predict_variance(self) -> pd.Series:
        """Predictive variance of each non-root node (independent of the evidence values)."""
        check_is_fitted(self, "model_")
        order, C = predict_covariance(self.model_)
        return pd.Series(np.diag(C), index=order)

    def score(self, X, y=None) -> float:
        """Average per-sample log-likelihood of the CPDs on ``X``."""
        check_is_fitted(self, "model_")
        frame = _as_frame(X, list(self.structure.nodes))
        return log_likelihood(self.model_, TrainingMatrix.from_frame(frame)) / len(frame)
