"""Parity and threshold operator-string expectation values.

A string on the mode subset ``A`` assigns the eigenvalue ``(-1)^{x_i}`` to the
binary outcome of every mode in ``A``. Parity strings are evaluated in closed
form from the reduced moments; threshold strings by inclusion-exclusion over
vacuum probabilities of all subsets of ``A``.

The batched functions (``parity_expvals``, ``threshold_expvals`` and their
``*_vjp`` counterparts) take a list of sorted index arrays and evaluate
distinct subsets once, grouped by size so that the linear algebra runs as
stacked numpy calls.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import gaussian as gs
from .errors import InvalidArgumentError, LocalityError, StateInvalidError

__all__ = [
    "PARITY",
    "THRESHOLD",
    "DEFAULT_MAX_LOCALITY",
    "OperatorString",
    "KernelConfig",
    "subset_probability",
    "subset_weight",
    "sample_subset",
    "sample_subsets",
    "parity_expval",
    "threshold_expval",
    "expval",
    "parity_expvals",
    "threshold_expvals",
    "expvals",
    "expvals_vjp",
    "empirical_expval",
    "empirical_expvals",
    "bit_moments",
]

PARITY = "parity"
THRESHOLD = "threshold"
KINDS = (PARITY, THRESHOLD)
DEFAULT_MAX_LOCALITY = 7

# bytes of stacked matrices handled per linear-algebra call
_CHUNK_BYTES = 32 * 2**20


@dataclass(frozen=True)
class OperatorString:
    modes: tuple = ()
    kind: str = PARITY

    def __post_init__(self):
        modes = tuple(int(m) for m in self.modes)
        if any(b <= a for a, b in zip(modes, modes[1:])) or any(m < 0 for m in modes):
            raise InvalidArgumentError(f"modes must be strictly increasing and non-negative: {modes}")
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown string kind {self.kind!r}")
        object.__setattr__(self, "modes", modes)

    def __len__(self):
        return len(self.modes)


def subset_probability(sigma: float) -> float:
    """Per-mode inclusion probability ``(1 - exp(-1 / (2 sigma))) / 2``."""
    if not sigma > 0:
        raise InvalidArgumentError(f"kernel bandwidth must be positive, got {sigma}")
    return 0.5 * (1.0 - np.exp(-1.0 / (2.0 * sigma)))


def subset_weight(sigma: float, size: int, d: int) -> float:
    """Probability of one particular subset of the given size."""
    p = subset_probability(sigma)
    return (1 - p) ** (d - size) * p**size


@dataclass(frozen=True)
class KernelConfig:
    bandwidths: tuple

    def __post_init__(self):
        bw = tuple(float(s) for s in self.bandwidths)
        if not bw:
            raise InvalidArgumentError("at least one bandwidth is required")
        for s in bw:
            subset_probability(s)
        object.__setattr__(self, "bandwidths", bw)

    @property
    def probabilities(self) -> tuple:
        return tuple(subset_probability(s) for s in self.bandwidths)


def sample_subset(sigma: float, d: int, rng) -> np.ndarray:
    """Draw one mode subset, each mode included independently."""
    p = subset_probability(sigma)
    return np.flatnonzero(rng.random(d) < p)


def sample_subsets(sigma: float, d: int, n: int, rng, max_locality: int | None = None):
    """Draw ``n`` subsets; with ``max_locality`` set, longer draws are redrawn.

    Returns the list of subsets and the number of redraws that were needed.
    """
    p = subset_probability(sigma)
    masks = rng.random((n, d)) < p
    redrawn = 0
    if max_locality is not None:
        bad = np.flatnonzero(masks.sum(axis=1) > max_locality)
        while bad.size:
            redrawn += bad.size
            masks[bad] = rng.random((bad.size, d)) < p
            bad = bad[masks[bad].sum(axis=1) > max_locality]
    return [np.flatnonzero(row) for row in masks], redrawn


def _check_kind(kind):
    if kind not in KINDS:
        raise InvalidArgumentError(f"unknown string kind {kind!r}")


def _as_subset(A, d):
    if isinstance(A, OperatorString):
        A = A.modes
    A = np.asarray(A, dtype=int).ravel()
    if A.size and (A[0] < 0 or A[-1] >= d or np.any(np.diff(A) <= 0)):
        raise InvalidArgumentError(f"mode subset {A.tolist()} invalid for {d} modes")
    return A


def _group_by_size(subsets):
    """Map size -> (positions in input, stacked index array)."""
    groups: dict = {}
    for pos, A in enumerate(subsets):
        groups.setdefault(len(A), []).append(pos)
    return {
        k: (np.array(pos), np.array([subsets[p] for p in pos], dtype=int).reshape(len(pos), k))
        for k, pos in groups.items()
    }


def _overlaps(mu, M, rows, scale, need_grad=False):
    """``exp(-scale m^T M_A^{-1} m) / sqrt(det M_A)`` for stacked subsets.

    ``rows`` has shape ``(n, k)`` of mode indices; quadrature blocks are
    gathered from the full ``(2d, 2d)`` matrix ``M``. With ``need_grad`` the
    gradients with respect to the gathered mean and matrix are returned too.
    """
    d = mu.size // 2
    n, k = rows.shape
    idx = np.concatenate([rows, rows + d], axis=1)
    chunk = max(1, _CHUNK_BYTES // (8 * 4 * k * k * (3 if need_grad else 1)))
    values = np.empty(n)
    g_mean = np.empty((n, 2 * k)) if need_grad else None
    g_mat = np.empty((n, 2 * k, 2 * k)) if need_grad else None
    for start in range(0, n, chunk):
        sl = slice(start, start + chunk)
        ix = idx[sl]
        Mb = M[ix[:, :, None], ix[:, None, :]]
        mb = mu[ix]
        try:
            L = np.linalg.cholesky(Mb)
        except np.linalg.LinAlgError as exc:
            raise StateInvalidError("reduced covariance is not positive definite") from exc
        logdet = 2.0 * np.log(np.diagonal(L, axis1=1, axis2=2)).sum(axis=1)
        if need_grad:
            inv = np.linalg.inv(Mb)
            v = np.einsum("nij,nj->ni", inv, mb)
        else:
            v = np.linalg.solve(Mb, mb[..., None])[..., 0]
        quad = np.einsum("ni,ni->n", mb, v)
        val = np.exp(-scale * quad - 0.5 * logdet)
        values[sl] = val
        if need_grad:
            g_mean[sl] = -2.0 * scale * v * val[:, None]
            g_mat[sl] = val[:, None, None] * (
                scale * v[:, :, None] * v[:, None, :] - 0.5 * inv
            )
    return values, idx, g_mean, g_mat


def _unique_rows(rows):
    if rows.shape[1] == 0 or rows.shape[0] <= 1:
        inverse = np.zeros(rows.shape[0], dtype=int)
        return rows[:1], inverse
    uniq, inverse = np.unique(rows, axis=0, return_inverse=True)
    return uniq, inverse.ravel()


def parity_expval(state: gs.GaussianState, A) -> float:
    """Expected value of the parity string on ``A`` (1 for the empty string)."""
    A = _as_subset(A, state.d)
    if A.size == 0:
        return 1.0
    val, *_ = _overlaps(state.mu, state.sigma, A[None, :], 1.0)
    return float(val[0])


def _vacuum_probabilities(state, rows):
    return _overlaps(state.mu, gs.husimi(state), rows, 0.5)[0]


def _submask_patterns(k):
    bits = np.arange(k)
    return ((np.arange(2**k)[:, None] >> bits) & 1).astype(bool)


def threshold_expval(state: gs.GaussianState, A, max_locality: int | None = DEFAULT_MAX_LOCALITY) -> float:
    """Expected value of the threshold string on ``A`` by inclusion-exclusion."""
    A = _as_subset(A, state.d)
    if max_locality is not None and A.size > max_locality:
        raise LocalityError(A.size, max_locality)
    return float(threshold_expvals(state, [A], max_locality=None)[0])


def expval(state, A, kind=PARITY, max_locality=DEFAULT_MAX_LOCALITY) -> float:
    _check_kind(kind)
    if kind == PARITY:
        return parity_expval(state, A)
    return threshold_expval(state, A, max_locality)


def parity_expvals(state: gs.GaussianState, subsets: Sequence) -> np.ndarray:
    subsets = [_as_subset(A, state.d) for A in subsets]
    out = np.ones(len(subsets))
    for k, (pos, rows) in _group_by_size(subsets).items():
        if k == 0:
            continue
        uniq, inv = _unique_rows(rows)
        vals, *_ = _overlaps(state.mu, state.sigma, uniq, 1.0)
        out[pos] = vals[inv]
    return out


def _threshold_expansion(subsets, max_locality):
    """Expand every string into its non-empty subsets.

    Returns ``{size: (unique rows, coefficient matrix)}`` where the coefficient
    matrix (sparse as triplets) maps vacuum probabilities onto string values,
    plus the constant term contributed by the empty subset.
    """
    n = len(subsets)
    constant = np.zeros(n)
    pieces: dict = {}
    for k, (pos, rows) in _group_by_size(subsets).items():
        if max_locality is not None and k > max_locality:
            raise LocalityError(k, max_locality)
        sign = (-1.0) ** k
        constant[pos] = sign
        if k == 0:
            continue
        patterns = _submask_patterns(k)
        sizes = patterns.sum(axis=1)
        for pat, s in zip(patterns[1:], sizes[1:]):
            sub = rows[:, pat]
            coef = np.full(len(pos), sign * (-2.0) ** s)
            pieces.setdefault(int(s), []).append((pos, sub, coef))
    expansion = {}
    for s, items in pieces.items():
        pos = np.concatenate([p for p, _, _ in items])
        sub = np.concatenate([r for _, r, _ in items])
        coef = np.concatenate([c for _, _, c in items])
        uniq, inv = _unique_rows(sub)
        expansion[s] = (uniq, pos, inv, coef)
    return constant, expansion


def threshold_expvals(state: gs.GaussianState, subsets: Sequence, max_locality=DEFAULT_MAX_LOCALITY) -> np.ndarray:
    subsets = [_as_subset(A, state.d) for A in subsets]
    out, expansion = _threshold_expansion(subsets, max_locality)
    Q = gs.husimi(state)
    for s, (uniq, pos, inv, coef) in expansion.items():
        p0, *_ = _overlaps(state.mu, Q, uniq, 0.5)
        np.add.at(out, pos, coef * p0[inv])
    return out


def expvals(state, subsets, kind=PARITY, max_locality=DEFAULT_MAX_LOCALITY) -> np.ndarray:
    _check_kind(kind)
    if kind == PARITY:
        return parity_expvals(state, subsets)
    return threshold_expvals(state, subsets, max_locality)


def _scatter(g_mu, g_sigma, idx, gm, gM, weights):
    np.add.at(g_mu, idx, gm * weights[:, None])
    np.add.at(g_sigma, (idx[:, :, None], idx[:, None, :]), gM * weights[:, None, None])


def expvals_vjp(state, subsets, weights, kind=PARITY, max_locality=DEFAULT_MAX_LOCALITY):
    """Expectation values and the pullback of ``weights`` onto the moments.

    Returns ``(values, g_mu, g_sigma)`` where ``g_mu = sum_m w_m d e_m / d mu``
    and ``g_sigma`` likewise (a symmetric matrix, entries treated as independent).
    """
    _check_kind(kind)
    subsets = [_as_subset(A, state.d) for A in subsets]
    weights = np.asarray(weights, dtype=float)
    n2 = 2 * state.d
    g_mu = np.zeros(n2)
    g_sigma = np.zeros((n2, n2))
    if kind == PARITY:
        values = np.ones(len(subsets))
        for k, (pos, rows) in _group_by_size(subsets).items():
            if k == 0:
                continue
            uniq, inv = _unique_rows(rows)
            vals, idx, gm, gM = _overlaps(state.mu, state.sigma, uniq, 1.0, need_grad=True)
            values[pos] = vals[inv]
            w = np.bincount(inv, weights=weights[pos], minlength=len(uniq))
            _scatter(g_mu, g_sigma, idx, gm, gM, w)
        return values, g_mu, g_sigma

    values, expansion = _threshold_expansion(subsets, max_locality)
    Q = gs.husimi(state)
    g_Q = np.zeros_like(g_sigma)
    for s, (uniq, pos, inv, coef) in expansion.items():
        p0, idx, gm, gM = _overlaps(state.mu, Q, uniq, 0.5, need_grad=True)
        np.add.at(values, pos, coef * p0[inv])
        w = np.bincount(inv, weights=coef * weights[pos], minlength=len(uniq))
        _scatter(g_mu, g_Q, idx, gm, gM, w)
    return values, g_mu, 0.5 * g_Q


def _rows_of(dataset):
    rows = getattr(dataset, "rows", dataset)
    return np.asarray(rows)


def empirical_expvals(dataset, subsets) -> np.ndarray:
    """Sample means of ``(-1)^{|x_A|}`` for each subset."""
    X = _rows_of(dataset)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidArgumentError("empirical expectation needs a non-empty dataset")
    n, d = X.shape
    subsets = [_as_subset(A, d) for A in subsets]
    if not subsets:
        return np.zeros(0)
    masks = np.zeros((d, len(subsets)))
    for col, A in enumerate(subsets):
        masks[A, col] = 1.0
    out = np.empty(len(subsets))
    Xf = X.astype(float)
    step = max(1, _CHUNK_BYTES // (8 * n))
    for start in range(0, len(subsets), step):
        counts = Xf @ masks[:, start:start + step]
        odd = np.mod(counts, 2.0)
        out[start:start + step] = 1.0 - 2.0 * odd.mean(axis=0)
    return out


def empirical_expval(dataset, A) -> float:
    return float(empirical_expvals(dataset, [A])[0])


def bit_moments(state: gs.GaussianState, kind=PARITY, max_locality=DEFAULT_MAX_LOCALITY):
    """Exact bit means, second moments and covariance of the model distribution.

    Returns ``(mean, second, cov)``, with ``second[i, j] = E[x_i x_j]``.
    """
    _check_kind(kind)
    if kind == THRESHOLD and max_locality is not None and max_locality < 2:
        raise InvalidArgumentError("pairwise threshold moments need max_locality >= 2")
    d = state.d
    singles = [np.array([i]) for i in range(d)]
    iu, ju = np.triu_indices(d, 1)
    pairs = [np.array([i, j]) for i, j in zip(iu, ju)]
    vals = expvals(state, singles + pairs, kind, max_locality)
    e1, e2 = vals[:d], vals[d:]
    mean = (1.0 - e1) / 2.0
    second = np.diag(mean)
    off = (1.0 - e1[iu] - e1[ju] + e2) / 4.0
    second[iu, ju] = off
    second[ju, iu] = off
    cov = second - np.outer(mean, mean)
    return mean, second, cov
