"""Exact outcome tables and samplers for parity and threshold detection.

Subsets of modes are indexed by bitmask, bit ``i`` standing for mode ``i``.
Joint probabilities follow from the table of all ``2^d`` string values by a
fast Walsh-Hadamard transform (parity) or a subset-sum butterfly over vacuum
probabilities (threshold). Samplers draw modes one at a time from prefix
marginals; the marginal on the first ``n`` modes uses the first ``2^n`` table
entries only, so the whole chain reuses one table.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gaussian as gs
from . import observables as ob
from .errors import InvalidArgumentError, NumericalError, ResourceLimitError

__all__ = [
    "DEFAULT_MODE_LIMIT",
    "OutcomeTable",
    "fwht",
    "subset_rows",
    "parity_table",
    "vacuum_table",
    "parity_probs",
    "threshold_probs",
    "outcome_probs",
    "sample_parity",
    "sample_threshold",
    "sample",
    "bits_to_index",
    "index_to_bits",
]

DEFAULT_MODE_LIMIT = 20
_NEG_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class OutcomeTable:
    """Joint outcome probabilities; entry ``k`` is the bitstring with ``x_i = (k >> i) & 1``."""

    d: int
    kind: str
    probabilities: np.ndarray

    def marginal(self, A) -> np.ndarray:
        """Probabilities of the bits in ``A``, indexed the same way over ``A``."""
        A = list(A)
        idx = np.zeros(2**self.d, dtype=np.int64)
        k = np.arange(2**self.d)
        for pos, mode in enumerate(A):
            idx |= ((k >> mode) & 1) << pos
        return np.bincount(idx, weights=self.probabilities, minlength=2 ** len(A))

    def moments(self):
        """Bit means and second moments ``E[x_i x_j]``."""
        X = index_to_bits(np.arange(2**self.d), self.d).astype(float)
        mean = self.probabilities @ X
        second = (X * self.probabilities[:, None]).T @ X
        return mean, second


def bits_to_index(bits) -> np.ndarray:
    bits = np.atleast_2d(np.asarray(bits, dtype=np.int64))
    return (bits << np.arange(bits.shape[1])).sum(axis=1)


def index_to_bits(index, d: int) -> np.ndarray:
    index = np.asarray(index, dtype=np.int64)
    return ((index[:, None] >> np.arange(d)) & 1).astype(np.uint8)


def fwht(values) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform along the last axis (length a power of two)."""
    a = np.array(values, dtype=float)
    n = a.shape[-1]
    if n & (n - 1):
        raise InvalidArgumentError(f"length {n} is not a power of two")
    h = 1
    lead = a.shape[:-1]
    while h < n:
        a = a.reshape(*lead, n // (2 * h), 2, h)
        x = a[..., 0, :].copy()
        y = a[..., 1, :]
        a[..., 0, :] += y
        a[..., 1, :] = x - y
        a = a.reshape(*lead, n)
        h *= 2
    return a


def _check_limit(d, limit):
    if limit is not None and d > limit:
        raise ResourceLimitError(
            f"exact inference on {d} modes exceeds the configured limit of {limit} modes"
        )


def subset_rows(d: int):
    """Yield ``(size, masks, rows)``: every non-empty subset grouped by size."""
    masks = np.arange(2**d, dtype=np.int64)
    sizes = _popcount(masks)
    for k in range(1, d + 1):
        sel = masks[sizes == k]
        bits = (sel[:, None] >> np.arange(d)) & 1
        rows = np.nonzero(bits)[1].reshape(len(sel), k)
        yield k, sel, rows


def _popcount(x):
    x = x.copy()
    count = np.zeros_like(x)
    while np.any(x):
        count += x & 1
        x >>= 1
    return count


def _table(state, M, scale, limit):
    d = state.d
    _check_limit(d, limit)
    out = np.ones(2**d)
    for _, masks, rows in subset_rows(d):
        out[masks] = ob._overlaps(state.mu, M, rows, scale)[0]
    return out


def parity_table(state: gs.GaussianState, limit=DEFAULT_MODE_LIMIT) -> np.ndarray:
    """Parity-string values for all ``2^d`` subsets, indexed by bitmask."""
    return _table(state, state.sigma, 1.0, limit)


def vacuum_table(state: gs.GaussianState, limit=DEFAULT_MODE_LIMIT) -> np.ndarray:
    """Vacuum probabilities ``p0(S)`` for all ``2^d`` subsets, indexed by bitmask."""
    return _table(state, gs.husimi(state), 0.5, limit)


def _threshold_transform(p0):
    """Map vacuum probabilities (bit set = mode in vacuum) to click-pattern probabilities."""
    a = np.array(p0, dtype=float)
    n = a.size
    h = 1
    while h < n:
        a = a.reshape(n // (2 * h), 2, h)
        without = a[:, 0, :].copy()
        with_ = a[:, 1, :].copy()
        a[:, 0, :] = with_
        a[:, 1, :] = without - with_
        a = a.reshape(n)
        h *= 2
    return a


def _clip(p):
    low = p.min()
    if low < -_NEG_TOL:
        raise NumericalError(f"probability table has a negative entry {low:.3e}")
    return np.clip(p, 0.0, None)


def parity_probs(state: gs.GaussianState, limit=DEFAULT_MODE_LIMIT) -> OutcomeTable:
    table = parity_table(state, limit)
    p = fwht(table) / 2**state.d
    return OutcomeTable(state.d, ob.PARITY, _clip(p))


def threshold_probs(state: gs.GaussianState, limit=DEFAULT_MODE_LIMIT) -> OutcomeTable:
    p = _threshold_transform(vacuum_table(state, limit))
    return OutcomeTable(state.d, ob.THRESHOLD, _clip(p))


def outcome_probs(state, kind=ob.PARITY, limit=DEFAULT_MODE_LIMIT) -> OutcomeTable:
    if kind == ob.PARITY:
        return parity_probs(state, limit)
    if kind == ob.THRESHOLD:
        return threshold_probs(state, limit)
    raise InvalidArgumentError(f"unknown detection kind {kind!r}")


def _chain_sample(marginal, d, n_samples, rng):
    """Draw bitstrings mode by mode; ``marginal(n)`` gives the prefix table on ``n`` modes."""
    index = np.zeros(n_samples, dtype=np.int64)
    prev = np.ones(1)
    u = rng.random((n_samples, d))
    for n in range(d):
        table = np.clip(marginal(n + 1), 0.0, None)
        joint_one = table[index | (1 << n)]
        denom = prev[index]
        with np.errstate(invalid="ignore", divide="ignore"):
            p_one = np.where(denom > 0, joint_one / denom, 0.0)
        index |= (u[:, n] < p_one).astype(np.int64) << n
        prev = table
    return index


def sample_parity(state: gs.GaussianState, n_samples: int, rng, limit=DEFAULT_MODE_LIMIT):
    """Exact parity-detection samples drawn mode by mode."""
    from .datasets import BitDataset

    table = parity_table(state, limit)

    def marginal(n):
        return fwht(table[: 2**n]) / 2**n

    index = _chain_sample(marginal, state.d, n_samples, rng)
    return BitDataset(index_to_bits(index, state.d), {"generator": "sample_parity"})


def sample_threshold(state: gs.GaussianState, n_samples: int, rng, limit=DEFAULT_MODE_LIMIT):
    """Exact threshold-detection samples."""
    from .datasets import BitDataset

    table = vacuum_table(state, limit)

    def marginal(n):
        return _threshold_transform(table[: 2**n])

    index = _chain_sample(marginal, state.d, n_samples, rng)
    return BitDataset(index_to_bits(index, state.d), {"generator": "sample_threshold"})


def sample(state, n_samples, rng, kind=ob.PARITY, limit=DEFAULT_MODE_LIMIT):
    if kind == ob.PARITY:
        return sample_parity(state, n_samples, rng, limit)
    if kind == ob.THRESHOLD:
        return sample_threshold(state, n_samples, rng, limit)
    raise InvalidArgumentError(f"unknown detection kind {kind!r}")
