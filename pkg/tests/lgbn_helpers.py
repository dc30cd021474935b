"""Planted linear-Gaussian networks shared by the LGBN and acceptance tests."""

import numpy as np

from railrisk.lgbn import BNStructure, GBNModel, LinearGaussianCPD, NodeInfo, TrainingMatrix


def make_structure(parents: dict[str, list[str]], roots: list[str]) -> BNStructure:
    nodes = {r: NodeInfo("feature") for r in roots}
    nodes.update({n: NodeInfo("risk") for n in parents})
    return BNStructure(nodes, {n: tuple(ps) for n, ps in parents.items()})


def planted_model(parents, roots, coefs) -> GBNModel:
    """``coefs[node] = (beta0, [beta...], sigma2)``."""
    s = make_structure(parents, roots)
    cpds = {n: LinearGaussianCPD(n, tuple(parents[n]), b0, np.array(b, float), v) for n, (b0, b, v) in coefs.items()}
    return GBNModel(s, cpds, {r: (0.0, 1.0) for r in roots})


def sample(model: GBNModel, M: int, rng: np.random.Generator, root_scale: float = 1.0) -> TrainingMatrix:
    cols = {}
    for r in model.structure.roots:
        cols[r] = rng.normal(0.0, root_scale, M)
    for n in model.structure.non_roots:
        cpd = model.cpds[n]
        X = np.column_stack([cols[p] for p in cpd.parent_order])
        cols[n] = cpd.beta0 + X @ cpd.beta + rng.normal(0.0, np.sqrt(cpd.sigma2), M)
    return TrainingMatrix.from_arrays(cols)


# five nodes: two roots, a fork-join and a chain
FIVE_PARENTS = {"C": ["A", "B"], "D": ["C"], "E": ["C", "D"]}
FIVE_ROOTS = ["A", "B"]
FIVE_COEFS = {
    "C": (0.5, [1.5, -0.7], 0.4),
    "D": (-1.0, [0.8], 0.25),
    "E": (2.0, [0.3, 1.1], 0.9),
}


def five_node_model() -> GBNModel:
    return planted_model(FIVE_PARENTS, FIVE_ROOTS, FIVE_COEFS)


def random_dag_model(rng: np.random.Generator, n_roots: int = 3, n_inner: int = 6) -> GBNModel:
    roots = [f"r{k}" for k in range(n_roots)]
    inner = [f"n{k}" for k in range(n_inner)]
    parents, coefs = {}, {}
    for k, n in enumerate(inner):
        pool = roots + inner[:k]
        m = int(rng.integers(1, min(4, len(pool)) + 1))
        ps = list(rng.choice(pool, size=m, replace=False))
        parents[n] = ps
        coefs[n] = (float(rng.normal()), list(rng.normal(0, 1, m)), float(rng.uniform(0.1, 1.0)))
    return planted_model(parents, roots, coefs)


def flattened_means(model: GBNModel, evidence: dict[str, float]) -> dict[str, float]:
    """Means via v = (I - B)^-1 (G r + c), with B, G, c read off the CPDs."""
    inner = list(model.structure.non_roots)
    roots = list(model.structure.roots)
    ip = {n: k for k, n in enumerate(inner)}
    rp = {n: k for k, n in enumerate(roots)}
    B = np.zeros((len(inner), len(inner)))
    G = np.zeros((len(inner), len(roots)))
    c = np.zeros(len(inner))
    for n in inner:
        cpd = model.cpds[n]
        c[ip[n]] = cpd.beta0
        for b, p in zip(cpd.beta, cpd.parent_order):
            if p in ip:
                B[ip[n], ip[p]] = b
            else:
                G[ip[n], rp[p]] = b
    r = np.array([evidence[x] for x in roots])
    v = np.linalg.solve(np.eye(len(inner)) - B, G @ r + c)
    return {n: float(v[ip[n]]) for n in inner}
