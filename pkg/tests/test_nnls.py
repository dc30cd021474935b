import itertools

import numpy as np
import pytest
import scipy.optimize
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from railrisk.lgbn import build_structure, fit_cpd_mle, fit_cpd_nnls, fit_nnls, nnls
from railrisk.lgbn.model import TrainingMatrix
from railrisk.lgbn.nnls import NNLSConvergenceError

from conftest import line_net


def brute_force_nnls(A, b):
    """Best least-squares solution over every support set with a non-negative solution."""
    n = A.shape[1]
    best, best_x = np.inf, np.zeros(n)
    for k in range(n + 1):
        for support in itertools.combinations(range(n), k):
            x = np.zeros(n)
            if support:
                idx = list(support)
                x[idx] = np.linalg.lstsq(A[:, idx], b, rcond=None)[0]
                if np.any(x[idx] < 0):
                    continue
            r = float(np.sum((A @ x - b) ** 2))
            if r < best - 1e-12:
                best, best_x = r, x
    return best_x, best


def test_orthogonal_design():
    A = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    b = np.array([-1.0, 2.0, 0.0])
    x, _ = nnls(A, b)
    assert np.allclose(x, [0.0, 2.0])
    grid = np.linspace(-3, 3, 601)
    vals = [(np.sum((A @ [u, v] - b) ** 2), u, v) for u in grid if u >= 0 for v in grid if v >= 0]
    _, u, v = min(vals)
    assert np.allclose(x, [u, v], atol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_matches_enumeration_and_scipy(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(30, 5))
    b = rng.normal(size=30)
    x, rnorm = nnls(A, b)
    bx, best = brute_force_nnls(A, b)
    assert np.allclose(x, bx, atol=1e-9)
    assert rnorm ** 2 == pytest.approx(best, rel=1e-9)
    sx, _ = scipy.optimize.nnls(A, b)
    assert np.allclose(x, sx, atol=1e-8)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (12, 4), elements=st.floats(-10, 10)), arrays(np.float64, 12, elements=st.floats(-10, 10)))
def test_kkt_property(A, b):
    x, _ = nnls(A, b)
    w = A.T @ (b - A @ x)
    assert np.all(x >= 0)
    scale = 1.0 + np.abs(A).sum() * (1.0 + np.abs(b).sum())
    assert np.all(w <= 1e-10 * scale)
    assert np.all(np.abs(w[x > 0]) <= 1e-8 * scale)


def test_iteration_cap():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(20, 6))
    b = A @ np.ones(6)
    with pytest.raises(NNLSConvergenceError):
        nnls(A, b, max_iter=2)


def test_input_validation():
    with pytest.raises(ValueError):
        nnls(np.ones(3), np.ones(3))
    with pytest.raises(ValueError):
        nnls(np.ones((3, 2)), np.ones(4))


def test_cpd_intercept_free_and_slopes_nonnegative():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(200, 3))
    y = -5.0 + X @ np.array([1.0, -2.0, 0.5]) + 0.01 * rng.normal(size=200)
    cpd = fit_cpd_nnls("y", ["a", "b", "c"], X, y)
    assert cpd.beta[1] == 0.0
    assert np.all(cpd.beta >= 0)
    assert cpd.beta0 < 0
    resid = (y - y.mean()) - (X - X.mean(0)) @ cpd.beta
    assert cpd.sigma2 == pytest.approx(resid @ resid / 200)


def test_cpd_equals_mle_when_unconstrained_optimum_feasible():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(300, 3))
    y = 1.0 + X @ np.array([0.3, 0.6, 0.2]) + 0.1 * rng.normal(size=300)
    a = fit_cpd_nnls("y", ["a", "b", "c"], X, y)
    m = fit_cpd_mle("y", ["a", "b", "c"], X, y)
    assert np.allclose(a.beta, m.beta, atol=1e-8)
    assert a.beta0 == pytest.approx(m.beta0, abs=1e-8)


def test_line_model_has_exact_zero_coefficients():
    # members that move against the line total get a zero influence weight
    net = line_net({"L": ["A", "B"]})
    s = build_structure(net, 1)
    rng = np.random.default_rng(3)
    M = 200
    cols = {r: rng.uniform(0, 1, M) for r in s.roots}
    for n in s.nodes_at("station_risk") + s.nodes_at("section_risk"):
        cols[n] = sum(cols[p] for p in s.parents[n]) + 0.01 * rng.normal(size=M)
    members = s.parents["RL:L"]
    cols["RL:L"] = cols[members[0]] + cols[members[2]] - 0.5 * cols[members[1]] + 0.01 * rng.normal(size=M)
    cols["RN"] = cols["RL:L"]
    model = fit_nnls(s, TrainingMatrix.from_arrays(cols))
    beta = dict(zip(model.cpds["RL:L"].parent_order, model.cpds["RL:L"].beta))
    assert beta[members[1]] == 0.0
    assert all(v >= 0 for cpd in model.cpds.values() for v in cpd.beta)
