"""Classical reference models: Chow-Liu trees and uniform noise."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import DisjointSet

from .datasets import BitDataset
from .errors import InvalidArgumentError

__all__ = [
    "TreeModel",
    "mutual_information",
    "mutual_information_matrix",
    "chow_liu_fit",
    "tree_sample",
    "uniform_sample",
    "independent_log_likelihood",
]


def _rows(dataset):
    X = np.asarray(getattr(dataset, "rows", dataset))
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidArgumentError("dataset must be a non-empty N x d bit matrix")
    return X.astype(np.float64)


def _pair_joint(X):
    """Empirical joints of every bit pair: ``P[a, b, i, j] = P(x_i = a, x_j = b)``."""
    n = X.shape[0]
    one = X.T @ X / n
    m = X.mean(axis=0)
    p11 = one
    p10 = m[:, None] - one
    p01 = m[None, :] - one
    p00 = 1.0 - m[:, None] - m[None, :] + one
    return np.array([[p00, p01], [p10, p11]]), m


def mutual_information_matrix(dataset) -> np.ndarray:
    """Plug-in mutual information (nats) of every bit pair; the diagonal holds entropies."""
    X = _rows(dataset)
    P, m = _pair_joint(X)
    P = np.clip(P, 0.0, None)
    marg = np.array([1.0 - m, m])
    outer = marg[:, None, :, None] * marg[None, :, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, P * np.log(P / outer), 0.0)
    mi = terms.sum(axis=(0, 1))
    return np.clip(0.5 * (mi + mi.T), 0.0, None)


def mutual_information(dataset, i: int, j: int) -> float:
    X = _rows(dataset)
    return float(mutual_information_matrix(X[:, [i, j]])[0, 1 if i != j else 0])


@dataclass
class TreeModel:
    """Rooted tree with conditional tables ``cpt[k] = [P(x=1 | parent=0), P(x=1 | parent=1)]``.

    The root's entry holds its marginal ``P(x=1)`` twice. ``order`` lists the
    nodes in breadth-first order so ancestral sampling can run along it.
    """

    d: int
    root: int
    parent: np.ndarray
    cpt: np.ndarray
    edges: list
    order: list
    smoothing: float = 1.0

    def __post_init__(self):
        self.parent = np.asarray(self.parent, dtype=int)
        self.cpt = np.asarray(self.cpt, dtype=float)
        if len(self.edges) != self.d - 1:
            raise InvalidArgumentError(f"a spanning tree on {self.d} nodes needs {self.d - 1} edges")
        if sorted(self.order) != list(range(self.d)) or self.order[0] != self.root:
            raise InvalidArgumentError("order must start at the root and visit every node once")

    def log_likelihood(self, dataset) -> np.ndarray:
        """Per-sample log probability."""
        X = np.asarray(getattr(dataset, "rows", dataset), dtype=int)
        pa = np.where(self.parent >= 0, self.parent, 0)
        cond = X[:, pa] if self.d else X
        p1 = np.where(self.parent[None, :] >= 0, self.cpt[np.arange(self.d), cond], self.cpt[:, 0][None, :])
        return np.where(X == 1, np.log(p1), np.log1p(-p1)).sum(axis=1)

    @property
    def n_params(self) -> int:
        return 1 + 2 * (self.d - 1)

    def to_dict(self) -> dict:
        return {
            "d": self.d, "root": self.root, "parent": self.parent.tolist(), "cpt": self.cpt.tolist(),
            "edges": [list(e) for e in self.edges], "order": list(self.order), "smoothing": self.smoothing,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TreeModel":
        return cls(data["d"], data["root"], data["parent"], data["cpt"],
                   [tuple(e) for e in data["edges"]], data["order"], data.get("smoothing", 1.0))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "TreeModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _spanning_tree(weights):
    """Maximum-weight spanning tree by Kruskal; ties go to the lexicographically smaller edge."""
    d = weights.shape[0]
    i, j = np.triu_indices(d, 1)
    # stable sort on (-w) keeps the (i, j) lexicographic order among equal weights
    order = np.argsort(-weights[i, j], kind="stable")
    forest = DisjointSet(range(d))
    chosen = []
    for k in order:
        a, b = int(i[k]), int(j[k])
        if forest.merge(a, b):
            chosen.append((a, b))
            if len(chosen) == d - 1:
                break
    return chosen


def _bfs(d, undirected, root):
    adj = [[] for _ in range(d)]
    for a, b in undirected:
        adj[a].append(b)
        adj[b].append(a)
    parent = np.full(d, -1)
    order, edges, seen = [root], [], {root}
    head = 0
    while head < len(order):
        u = order[head]
        head += 1
        for v in sorted(adj[u]):
            if v not in seen:
                seen.add(v)
                parent[v] = u
                order.append(v)
                edges.append((u, v))
    return parent, order, edges


def chow_liu_fit(dataset, smoothing: float = 1.0, root: int = 0) -> TreeModel:
    """Maximum mutual-information spanning tree with smoothed maximum-likelihood tables.

    The returned ``edges`` are ``(parent, child)`` pairs in breadth-first order
    from ``root`` and can be fed directly to a graph-layout circuit.
    """
    X = _rows(dataset)
    n, d = X.shape
    if n < 2 or d < 2:
        raise InvalidArgumentError(f"Chow-Liu fit needs at least 2 samples and 2 variables, got N={n}, d={d}")
    if smoothing < 0:
        raise InvalidArgumentError("smoothing must be non-negative")
    mi = mutual_information_matrix(X)
    parent, order, edges = _bfs(d, _spanning_tree(mi), root)
    cpt = np.empty((d, 2))
    ones = X.sum(axis=0)
    cpt[root] = (ones[root] + smoothing) / (n + 2 * smoothing)
    for u, v in edges:
        for a in (0, 1):
            mask = X[:, u] == a
            total = mask.sum()
            hits = X[mask, v].sum()
            denom = total + 2 * smoothing
            cpt[v, a] = (hits + smoothing) / denom if denom > 0 else 0.5
    return TreeModel(d, root, parent, cpt, edges, order, smoothing)


def independent_log_likelihood(dataset, smoothing: float = 1.0) -> np.ndarray:
    """Per-sample log probability under the product of smoothed bit marginals fitted to ``dataset``."""
    X = _rows(dataset)
    p = (X.sum(axis=0) + smoothing) / (X.shape[0] + 2 * smoothing)
    return np.where(X == 1, np.log(p), np.log1p(-p)).sum(axis=1)


def tree_sample(model: TreeModel, n: int, rng) -> BitDataset:
    """Ancestral samples, root first."""
    out = np.zeros((n, model.d), dtype=np.uint8)
    u = rng.random((n, model.d))
    for v in model.order:
        p = model.parent[v]
        p1 = np.full(n, model.cpt[v, 0]) if p < 0 else model.cpt[v, out[:, p]]
        out[:, v] = u[:, v] < p1
    return BitDataset(out, {"generator": "chow_liu", "params": {"edges": [list(e) for e in model.edges]}})


def uniform_sample(d: int, n: int, rng) -> BitDataset:
    return BitDataset(rng.integers(0, 2, size=(n, d), dtype=np.uint8), {"generator": "uniform"}, d)
