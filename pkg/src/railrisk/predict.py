"""Supervised datasets, the autoregressive baseline, error metrics and the scheme comparison."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y, check_array

from .lgbn import GaussianBayesianNetwork, build_structure, feature_node, risk_node
from .lgbn.model import MAX_CONDITION, RIDGE, regularized_solve
from .lgbn.structure import GLOBAL_NODE
from .risk import LogisticParams, RiskSnapshot, SaturationSnapshot, WeightRule, assess_series, compute_saturations
from .simulate import SLOTS_PER_DAY, DemandProfile, FlowSnapshot, run_simulation
from .topology import DEFAULT_TRANSFER_PENALTY, Network

log = logging.getLogger(__name__)

SCHEMES = ("AR", "GBN1", "GBN2")
DEFAULT_TRAIN, DEFAULT_TEST = 1600, 320


class ZeroTargetError(ValueError):
    pass


class DatasetError(ValueError):
    pass


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def mape(y, yhat) -> float:
    """Mean of |y - yhat| / |y|."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise ValueError("y and yhat must have equal lengths")
    if np.any(y == 0):
        raise ZeroTargetError("MAPE is undefined when a target value is 0")
    return float(np.mean(np.abs(y - yhat) / np.abs(y)))


def wmape(y, yhat) -> float:
    """sum |y - yhat| / sum y."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise ValueError("y and yhat must have equal lengths")
    denom = float(np.sum(y))
    if not denom > 0:
        raise ZeroTargetError("WMAPE needs a positive target sum")
    return float(np.sum(np.abs(y - yhat)) / denom)


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

@dataclass
class SupervisedDataset:
    """Aligned samples. Row k predicts ``targets`` at ``target_slots[k]`` from ``inputs``."""

    scheme: str
    horizon: int
    inputs: pd.DataFrame
    targets: pd.DataFrame
    input_slots: np.ndarray
    target_slots: np.ndarray

    def __len__(self) -> int:
        return len(self.target_slots)

    def take(self, idx) -> "SupervisedDataset":
        idx = np.asarray(idx, dtype=np.intp)
        return SupervisedDataset(
            self.scheme,
            self.horizon,
            self.inputs.iloc[idx].reset_index(drop=True),
            self.targets.iloc[idx].reset_index(drop=True),
            self.input_slots[idx],
            self.target_slots[idx],
        )

    def training_frame(self) -> pd.DataFrame:
        """Inputs and targets side by side (one column per BN node)."""
        return pd.concat([self.inputs, self.targets], axis=1)


def risk_vector(r: RiskSnapshot) -> dict[str, float]:
    out = {risk_node("RS", i): v for i, v in r.RS.items()}
    out.update({risk_node("RI", j): v for j, v in r.RI.items()})
    out.update({risk_node("RL", k): v for k, v in r.RL.items()})
    out[GLOBAL_NODE] = r.RN
    return out


def _feature_matrix(sats: Sequence[SaturationSnapshot]) -> tuple[list[tuple[str, str]], np.ndarray]:
    first = sats[0]
    keys = [("SS", i) for i in first.SS] + [("SW", i) for i in first.SW] + [("SI", j) for j in first.SI]
    rows = np.empty((len(sats), len(keys)))
    for r, s in enumerate(sats):
        rows[r] = list(s.SS.values()) + list(s.SW.values()) + list(s.SI.values())
    return keys, rows


def _risk_matrix(risks: Sequence[RiskSnapshot]) -> tuple[list[str], np.ndarray]:
    names = list(risk_vector(risks[0]))
    rows = np.array([list(risk_vector(r).values()) for r in risks])
    return names, rows


def _windows(slots: np.ndarray, lag: int, horizon: int) -> np.ndarray:
    """Indices t with t - lag .. t + horizon present and inside one operating day."""
    pos = {int(s): k for k, s in enumerate(slots)}
    keep = []
    for k, s in enumerate(slots):
        s = int(s)
        lo, hi = s - lag, s + horizon
        if lo // SLOTS_PER_DAY != hi // SLOTS_PER_DAY:
            continue
        if all(t in pos for t in range(lo, hi + 1)):
            keep.append(k)
    return np.array(keep, dtype=np.intp)


def make_supervised(
    risks: Sequence[RiskSnapshot],
    sats: Sequence[SaturationSnapshot] | None,
    scheme: str,
    horizon: int = 1,
    ar_nodes: Sequence[str] | None = None,
) -> SupervisedDataset:
    """Build samples for one scheme; windows crossing a day boundary are dropped.

    GBN1: features(t) -> risks(t+h). GBN2: features(t), features(t-1) -> risks(t+h).
    AR: for each node in ``ar_nodes`` (default: lines and global), its risk at
    t and t-1 -> its risk at t+h; input columns are ``<node>@t0`` and ``<node>@t1``.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if not risks:
        raise DatasetError("no risk snapshots")
    slots = np.array([r.slot_index for r in risks])
    if sats is not None:
        if len(sats) != len(risks) or any(s.slot_index != r.slot_index for s, r in zip(sats, risks)):
            raise DatasetError("risk and saturation sequences are not aligned by slot")
    if np.any(np.diff(slots) <= 0):
        raise DatasetError("snapshots must be in increasing slot order")

    pos = {int(s): k for k, s in enumerate(slots)}
    risk_names, R = _risk_matrix(risks)
    lag = 0 if scheme == "GBN1" else 1
    idx = _windows(slots, lag, horizon)
    if len(idx) == 0:
        raise DatasetError(f"{scheme}: every window crosses a day boundary")
    tgt = np.array([pos[int(slots[k]) + horizon] for k in idx], dtype=np.intp)

    if scheme == "AR":
        if ar_nodes is None:
            ar_nodes = [n for n in risk_names if n.startswith("RL:")] + [GLOBAL_NODE]
        col = {n: risk_names.index(n) for n in ar_nodes}
        prev = np.array([pos[int(slots[k]) - 1] for k in idx], dtype=np.intp)
        inputs = {}
        for n in ar_nodes:
            inputs[f"{n}@t0"] = R[idx, col[n]]
            inputs[f"{n}@t1"] = R[prev, col[n]]
        targets = pd.DataFrame({n: R[tgt, col[n]] for n in ar_nodes})
        return SupervisedDataset(scheme, horizon, pd.DataFrame(inputs), targets, slots[idx], slots[tgt])

    if sats is None:
        raise DatasetError(f"{scheme} needs saturation snapshots")
    keys, F = _feature_matrix(sats)
    blocks = {feature_node(kind, e, 0): F[idx, c] for c, (kind, e) in enumerate(keys)}
    if scheme == "GBN2":
        prev = np.array([pos[int(slots[k]) - 1] for k in idx], dtype=np.intp)
        blocks.update({feature_node(kind, e, 1): F[prev, c] for c, (kind, e) in enumerate(keys)})
    inputs = pd.DataFrame(blocks)
    targets = pd.DataFrame(R[tgt], columns=risk_names)
    return SupervisedDataset(scheme, horizon, inputs, targets, slots[idx], slots[tgt])


def scaled_split_counts(n: int, train: int = DEFAULT_TRAIN, test: int = DEFAULT_TEST) -> tuple[int, int]:
    """Keep the train:test ratio, shrinking both when fewer than train + test samples exist."""
    if n >= train + test:
        return train, test
    n_test = int(round(n * test / (train + test)))
    return n - n_test, n_test


def split(dataset: SupervisedDataset, train_count: int, test_count: int):
    """First ``train_count`` samples train, last ``test_count`` test; the middle is discarded."""
    n = len(dataset)
    if train_count < 1 or test_count < 1:
        raise DatasetError("train and test must both be non-empty")
    if train_count + test_count > n:
        raise DatasetError(f"split {train_count}+{test_count} exceeds {n} samples")
    return dataset.take(np.arange(train_count)), dataset.take(np.arange(n - test_count, n))


# ---------------------------------------------------------------------------
# autoregressive baseline
# ---------------------------------------------------------------------------

class ARRegressor(RegressorMixin, BaseEstimator):
    """yhat(t+h) = c0 + c1 y(t) + c2 y(t-1), fit by least squares.

    ``X`` has columns [y(t), y(t-1)]. Uses the same ridge and conditioning
    policy as the Gaussian network fit.
    """

    def __init__(self, ridge: float = RIDGE, max_condition: float = MAX_CONDITION):
        self.ridge = ridge
        self.max_condition = max_condition

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        if X.shape[0] < 4:
            raise DatasetError("AR fit needs at least 4 samples")
        mu_x = X.mean(axis=0)
        mu_y = y.mean()
        Xc, yc = X - mu_x, y - mu_y
        M = X.shape[0]
        self.coef_ = regularized_solve(Xc.T @ Xc / M, Xc.T @ yc / M, self.ridge, self.max_condition, "AR")
        self.intercept_ = float(mu_y - self.coef_ @ mu_x)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return self.intercept_ + X @ self.coef_


@dataclass
class ARModel:
    coefficients: dict[str, tuple[float, float, float]]

    def predict(self, inputs: pd.DataFrame) -> pd.DataFrame:
        out = {}
        for n, (c0, c1, c2) in self.coefficients.items():
            out[n] = c0 + c1 * inputs[f"{n}@t0"].to_numpy() + c2 * inputs[f"{n}@t1"].to_numpy()
        return pd.DataFrame(out, index=inputs.index)

    def to_dict(self) -> dict:
        return {"scheme": "AR", "coefficients": {n: list(c) for n, c in self.coefficients.items()}}

    @classmethod
    def from_dict(cls, d) -> "ARModel":
        return cls({n: tuple(float(x) for x in c) for n, c in d["coefficients"].items()})

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")


def fit_ar(train: SupervisedDataset, node: str) -> tuple[float, float, float]:
    X = train.inputs[[f"{node}@t0", f"{node}@t1"]].to_numpy()
    reg = ARRegressor().fit(X, train.targets[node].to_numpy())
    return reg.intercept_, float(reg.coef_[0]), float(reg.coef_[1])


def fit_ar_model(train: SupervisedDataset) -> ARModel:
    return ARModel({n: fit_ar(train, n) for n in train.targets.columns})


# ---------------------------------------------------------------------------
# experiment
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    days: int = 30
    seed: int = 2023
    horizon: int = 1
    fitter: str = "mle"
    schemes: tuple[str, ...] = SCHEMES
    train_count: int = DEFAULT_TRAIN
    test_count: int = DEFAULT_TEST
    transfer_penalty: float = DEFAULT_TRANSFER_PENALTY
    sw_scale: float = 1.0
    profile: DemandProfile = field(default_factory=DemandProfile)
    logistic: LogisticParams = field(default_factory=LogisticParams)
    weight_rule: WeightRule = field(default_factory=WeightRule)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["profile"] = self.profile.to_dict()
        d["schemes"] = list(self.schemes)
        d["weight_rule"] = {"thresholds": list(self.weight_rule.thresholds), "weights": list(self.weight_rule.weights)}
        return d


@dataclass
class PredictionReport:
    targets: list[str]
    schemes: list[str]
    wmape: dict[str, dict[str, float]]
    mape: dict[str, dict[str, float]]
    samples: dict[str, dict[str, int]]
    config: dict

    def to_dict(self) -> dict:
        return asdict(self)

    def rows(self) -> list[tuple[str, str, float, float]]:
        return [(t, s, self.wmape[t][s], self.mape[t][s]) for t in self.targets for s in self.schemes]

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["target", "scheme", "wmape", "mape"])
            for t, s, a, b in self.rows():
                w.writerow([t, s, f"{a:.6f}", f"{b:.6f}"])

    def format_table(self) -> str:
        width = max(len(t) for t in self.targets)
        head = "Target".ljust(width) + "".join(f"{s:>10}" for s in self.schemes)
        lines = [head]
        for t in self.targets:
            lines.append(t.ljust(width) + "".join(f"{100 * self.wmape[t][s]:>9.2f}%" for s in self.schemes))
        return "\n".join(lines)


@dataclass
class ExperimentResult:
    report: PredictionReport
    snapshots: list[FlowSnapshot]
    risks: list[RiskSnapshot]
    models: dict[str, object]
    predictions: dict[str, pd.DataFrame]
    truth: dict[str, pd.DataFrame]
    test_slots: dict[str, np.ndarray]


def target_nodes(net: Network) -> list[str]:
    return [risk_node("RL", lid) for lid in net.lines] + [GLOBAL_NODE]


def target_label(node: str) -> str:
    return "Global" if node == GLOBAL_NODE else node.split(":", 1)[1]


def evaluate_scheme(net: Network, scheme: str, dataset: SupervisedDataset, cfg: ExperimentConfig):
    """Split, fit and predict one scheme; returns (model, predictions, truth, test)."""
    targets = target_nodes(net)
    n_train, n_test = scaled_split_counts(len(dataset), cfg.train_count, cfg.test_count)
    train, test = split(dataset, n_train, n_test)
    if scheme == "AR":
        model = fit_ar_model(train)
        pred = model.predict(test.inputs)[targets]
    else:
        structure = build_structure(net, lags=1 if scheme == "GBN1" else 2)
        model = GaussianBayesianNetwork(structure, fitter=cfg.fitter).fit(train.training_frame())
        pred = model.predict(test.inputs, nodes=targets)
    return model, pred, test.targets[targets], test


def run_experiment(net: Network, cfg: ExperimentConfig = ExperimentConfig(), flows: Sequence[FlowSnapshot] | None = None) -> ExperimentResult:
    """simulate -> assess -> per-scheme datasets -> fit -> predict -> score."""
    for s in cfg.schemes:
        if s not in SCHEMES:
            raise ValueError(f"unknown scheme {s!r}")
    if flows is None:
        log.info("simulating %d days (seed %d)", cfg.days, cfg.seed)
        flows = run_simulation(net, cfg.profile, cfg.days, cfg.seed, cfg.transfer_penalty)
    risks = assess_series(flows, net, cfg.weight_rule, cfg.logistic, cfg.sw_scale)
    sats = [compute_saturations(f, net) for f in flows]

    targets = target_nodes(net)
    labels = [target_label(t) for t in targets]
    wm: dict[str, dict[str, float]] = {lab: {} for lab in labels}
    mp: dict[str, dict[str, float]] = {lab: {} for lab in labels}
    samples: dict[str, dict[str, int]] = {}
    models, preds, truths, test_slots = {}, {}, {}, {}
    for scheme in cfg.schemes:
        ds = make_supervised(risks, sats, scheme, cfg.horizon)
        model, pred, truth, test = evaluate_scheme(net, scheme, ds, cfg)
        log.info("%s: %d samples, %d test", scheme, len(ds), len(test))
        samples[scheme] = {"total": len(ds), "train": scaled_split_counts(len(ds), cfg.train_count, cfg.test_count)[0], "test": len(test)}
        for node, lab in zip(targets, labels):
            wm[lab][scheme] = wmape(truth[node], pred[node])
            mp[lab][scheme] = mape(truth[node], pred[node])
        models[scheme], preds[scheme], truths[scheme] = model, pred, truth
        test_slots[scheme] = test.target_slots

    report = PredictionReport(labels, list(cfg.schemes), wm, mp, samples, cfg.to_dict())
    return ExperimentResult(report, list(flows), risks, models, preds, truths, test_slots)


def write_plot_data(result: ExperimentResult, path: str | Path) -> None:
    """CSV of slot, true global risk and each scheme's prediction over the test span."""
    per_slot: dict[int, dict[str, float]] = {}
    for scheme, pred in result.predictions.items():
        for slot, y, yhat in zip(result.test_slots[scheme], result.truth[scheme][GLOBAL_NODE], pred[GLOBAL_NODE]):
            row = per_slot.setdefault(int(slot), {"true_RN": float(y)})
            row[scheme] = float(yhat)
    schemes = list(result.predictions)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["slot", "true_RN"] + [f"pred_{s}" for s in schemes])
        for slot in sorted(per_slot):
            row = per_slot[slot]
            w.writerow([slot, f"{row['true_RN']:.6f}"] + [f"{row[s]:.6f}" if s in row else "" for s in schemes])
