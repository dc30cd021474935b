"""Linear-Gaussian CPDs: closed-form MLE and NNLS fitting, propagation, likelihood."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .nnls import nnls
from .structure import BNStructure

RIDGE = 1e-8
MAX_CONDITION = 1e12
SIGMA2_NEG_TOL = 1e-10


class SingularCovarianceError(np.linalg.LinAlgError):
    pass


class InsufficientSamplesError(ValueError):
    pass


class MissingEvidenceError(KeyError):
    pass


@dataclass(frozen=True)
class LinearGaussianCPD:
    """Y | X ~ N(beta0 + beta . X, sigma2)."""

    node: str
    parent_order: tuple[str, ...]
    beta0: float
    beta: np.ndarray
    sigma2: float

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float).reshape(-1)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "parent_order", tuple(self.parent_order))
        if len(beta) != len(self.parent_order):
            raise ValueError(f"{self.node}: {len(beta)} coefficients for {len(self.parent_order)} parents")
        if self.sigma2 < 0:
            raise ValueError(f"{self.node}: sigma2 must be >= 0")

    def mean(self, parent_values) -> np.ndarray:
        return self.beta0 + np.asarray(parent_values, dtype=float) @ self.beta

    def to_dict(self) -> dict:
        return {
            "parents": list(self.parent_order),
            "beta0": float(self.beta0),
            "beta": [float(x) for x in self.beta],
            "sigma2": float(self.sigma2),
        }


@dataclass
class TrainingMatrix:
    """M samples of every node; ``columns`` maps node id -> column of ``rows``."""

    columns: dict[str, int]
    rows: np.ndarray

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float)
        if self.rows.ndim != 2 or self.rows.shape[1] != len(self.columns):
            raise ValueError("rows must be (M, n_columns)")
        if not np.all(np.isfinite(self.rows)):
            raise ValueError("training matrix has missing or non-finite values")

    @property
    def n_samples(self) -> int:
        return self.rows.shape[0]

    def column(self, node: str) -> np.ndarray:
        return self.rows[:, self.columns[node]]

    def select(self, nodes: Sequence[str]) -> np.ndarray:
        return self.rows[:, [self.columns[n] for n in nodes]]

    @classmethod
    def from_frame(cls, frame) -> "TrainingMatrix":
        return cls({str(c): k for k, c in enumerate(frame.columns)}, frame.to_numpy(dtype=float))

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, Sequence[float]]) -> "TrainingMatrix":
        names = list(arrays)
        return cls({n: k for k, n in enumerate(names)}, np.column_stack([np.asarray(arrays[n], float) for n in names]))


@dataclass
class GBNModel:
    structure: BNStructure
    cpds: dict[str, LinearGaussianCPD]
    root_stats: dict[str, tuple[float, float]]

    def __post_init__(self):
        for n in self.structure.non_roots:
            cpd = self.cpds.get(n)
            if cpd is None:
                raise ValueError(f"non-root node {n} has no CPD")
            if cpd.parent_order != self.structure.parents[n]:
                raise ValueError(f"CPD parents of {n} do not match the structure")

    def to_dict(self) -> dict:
        return {
            "structure": self.structure.to_dict(),
            "cpds": {n: self.cpds[n].to_dict() for n in self.structure.non_roots},
            "root_stats": {n: [float(m), float(v)] for n, (m, v) in self.root_stats.items()},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "GBNModel":
        structure = BNStructure.from_dict(d["structure"])
        cpds = {
            n: LinearGaussianCPD(n, tuple(c["parents"]), float(c["beta0"]), np.array(c["beta"], float), float(c["sigma2"]))
            for n, c in d["cpds"].items()
        }
        root_stats = {n: (float(m), float(v)) for n, (m, v) in d.get("root_stats", {}).items()}
        return cls(structure, cpds, root_stats)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "GBNModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

def _moments(X: np.ndarray, y: np.ndarray):
    M = X.shape[0]
    mu_x = X.mean(axis=0)
    mu_y = float(y.mean())
    Xc = X - mu_x
    yc = y - mu_y
    Sxx = Xc.T @ Xc / M
    Syx = Xc.T @ yc / M
    Syy = float(yc @ yc / M)
    return mu_x, mu_y, Sxx, Syx, Syy


def regularized_solve(Sxx: np.ndarray, Syx: np.ndarray, ridge: float = RIDGE, max_condition: float = MAX_CONDITION, name: str = ""):
    """Solve ``Sxx beta = Syx``, falling back to a ridge when ``Sxx`` is ill-conditioned.

    The exact solve is used while ``cond(Sxx) <= 1 / ridge``. Beyond that,
    ``lam = ridge * trace(Sxx) / k`` is added to the diagonal and the
    regularized matrix must stay below ``max_condition``.
    """
    k = Sxx.shape[0]
    cond = np.linalg.cond(Sxx)
    if np.isfinite(cond) and ridge > 0 and cond * ridge <= 1.0:
        return np.linalg.solve(Sxx, Syx)
    tr = float(np.trace(Sxx))
    lam = ridge * tr / k if tr > 0 else ridge
    S = Sxx + lam * np.eye(k)
    cond = np.linalg.cond(S)
    if not np.isfinite(cond) or cond > max_condition:
        raise SingularCovarianceError(f"{name}: parent covariance condition number {cond:.3g} exceeds {max_condition:.3g}")
    return np.linalg.solve(S, Syx)


def fit_cpd_mle(node: str, parents: Sequence[str], X: np.ndarray, y: np.ndarray, ridge: float = RIDGE, max_condition: float = MAX_CONDITION) -> LinearGaussianCPD:
    """Closed-form maximum-likelihood CPD from samples of the parents ``X`` and child ``y``."""
    M, k = X.shape
    if M < k + 2:
        raise InsufficientSamplesError(f"{node}: {M} samples for {k} parents (need >= {k + 2})")
    mu_x, mu_y, Sxx, Syx, Syy = _moments(X, y)
    beta = regularized_solve(Sxx, Syx, ridge, max_condition, node)
    beta0 = mu_y - float(beta @ mu_x)
    sigma2 = Syy - float(Syx @ beta)
    if sigma2 < 0:
        if sigma2 < -SIGMA2_NEG_TOL * max(1.0, Syy):
            raise ArithmeticError(f"{node}: conditional variance {sigma2:.3g} is negative")
        sigma2 = 0.0
    return LinearGaussianCPD(node, tuple(parents), beta0, beta, sigma2)


def fit_cpd_nnls(node: str, parents: Sequence[str], X: np.ndarray, y: np.ndarray, tol: float = 1e-10) -> LinearGaussianCPD:
    """CPD with non-negative slopes on centred data; the intercept stays free.

    Columns are rescaled to unit norm before solving so the dual tolerance is
    relative to the data scale; a positive rescaling leaves the feasible set unchanged.
    """
    M, k = X.shape
    if M < k + 2:
        raise InsufficientSamplesError(f"{node}: {M} samples for {k} parents (need >= {k + 2})")
    mu_x = X.mean(axis=0)
    mu_y = float(y.mean())
    A = X - mu_x
    b = y - mu_y
    norms = np.linalg.norm(A, axis=0)
    live = norms > 0
    beta = np.zeros(k)
    bnorm = float(np.linalg.norm(b))
    if live.any() and bnorm > 0:
        z, _ = nnls(A[:, live] / norms[live], b / bnorm, tol=tol)
        beta[live] = z * bnorm / norms[live]
    beta0 = mu_y - float(beta @ mu_x)
    resid = b - A @ beta
    sigma2 = float(resid @ resid / M)
    return LinearGaussianCPD(node, tuple(parents), beta0, beta, sigma2)


def _root_stats(structure: BNStructure, data: TrainingMatrix) -> dict[str, tuple[float, float]]:
    out = {}
    for r in structure.roots:
        col = data.column(r)
        out[r] = (float(col.mean()), float(col.var()))
    return out


def _check_columns(structure: BNStructure, data: TrainingMatrix) -> None:
    missing = [n for n in structure.nodes if n not in data.columns]
    if missing:
        raise KeyError(f"training data lacks {len(missing)} node columns, e.g. {missing[:5]}")


def fit_mle(structure: BNStructure, data: TrainingMatrix, ridge: float = RIDGE, max_condition: float = MAX_CONDITION) -> GBNModel:
    _check_columns(structure, data)
    cpds = {}
    for n in structure.non_roots:
        ps = structure.parents[n]
        cpds[n] = fit_cpd_mle(n, ps, data.select(ps), data.column(n), ridge, max_condition)
    return GBNModel(structure, cpds, _root_stats(structure, data))


def fit_nnls(structure: BNStructure, data: TrainingMatrix, tol: float = 1e-10) -> GBNModel:
    _check_columns(structure, data)
    cpds = {}
    for n in structure.non_roots:
        ps = structure.parents[n]
        cpds[n] = fit_cpd_nnls(n, ps, data.select(ps), data.column(n), tol)
    return GBNModel(structure, cpds, _root_stats(structure, data))


# ---------------------------------------------------------------------------
# inference
# ---------------------------------------------------------------------------

def _evidence_columns(model: GBNModel, evidence: Mapping[str, object]) -> dict[str, np.ndarray]:
    roots = model.structure.roots
    missing = [r for r in roots if r not in evidence]
    if missing:
        raise MissingEvidenceError(f"evidence missing for {len(missing)} root nodes: {missing[:10]}")
    return {r: np.asarray(evidence[r], dtype=float) for r in roots}


def propagate_means(model: GBNModel, evidence: Mapping[str, object]) -> dict[str, np.ndarray]:
    """Mean of every node given root values; evidence values may be scalars or arrays."""
    values: dict[str, np.ndarray] = dict(_evidence_columns(model, evidence))
    for n in model.structure.non_roots:
        cpd = model.cpds[n]
        acc = np.full(np.shape(values[cpd.parent_order[0]]), cpd.beta0, dtype=float)
        for b, p in zip(cpd.beta, cpd.parent_order):
            acc = acc + b * values[p]
        values[n] = acc
    return values


def predict_mean(model: GBNModel, evidence: Mapping[str, float]) -> dict[str, float]:
    """Predicted mean of every non-root node."""
    values = propagate_means(model, evidence)
    return {n: float(values[n]) for n in model.structure.non_roots}


def predict_covariance(model: GBNModel) -> tuple[list[str], np.ndarray]:
    """Joint covariance of the non-root nodes with every root observed.

    Returns the node order (topological) and the covariance matrix.
    """
    order = model.structure.non_roots
    pos = {n: k for k, n in enumerate(order)}
    N = len(order)
    C = np.zeros((N, N))
    for k, n in enumerate(order):
        cpd = model.cpds[n]
        idx = [pos[p] for p in cpd.parent_order if p in pos]
        if idx:
            b = np.array([bb for bb, p in zip(cpd.beta, cpd.parent_order) if p in pos])
            row = b @ C[idx, :k]
            C[k, :k] = row
            C[:k, k] = row
            C[k, k] = cpd.sigma2 + float(b @ C[np.ix_(idx, idx)] @ b)
        else:
            C[k, k] = cpd.sigma2
    return order, C


def predict_variance(model: GBNModel, evidence: Mapping[str, float]) -> dict[str, float]:
    """Predicted variance of every non-root node; observed roots have variance 0."""
    _evidence_columns(model, evidence)
    order, C = predict_covariance(model)
    return {n: float(C[k, k]) for k, n in enumerate(order)}


def log_likelihood(model: GBNModel, data: TrainingMatrix, exclude_degenerate: bool = True) -> float:
    """Sum over CPD nodes and samples of the Gaussian log density of the child given its parents.

    Nodes with ``sigma2 == 0`` are skipped with a warning when ``exclude_degenerate``;
    otherwise they raise.
    """
    total = 0.0
    skipped = 0
    for n in model.structure.non_roots:
        cpd = model.cpds[n]
        if cpd.sigma2 <= 0:
            if not exclude_degenerate:
                raise ValueError(f"{n}: log-likelihood undefined for sigma2 = 0")
            skipped += 1
            continue
        r = cpd.mean(data.select(cpd.parent_order)) - data.column(n)
        M = len(r)
        total += -0.5 * M * math.log(2 * math.pi * cpd.sigma2) - float(r @ r) / (2 * cpd.sigma2)
    if skipped:
        warnings.warn(f"{skipped} zero-variance nodes excluded from the log-likelihood", RuntimeWarning, stacklevel=2)
    return total
