"""Bitstring datasets: text I/O, synthetic generators and empirical diagnostics.

File format: one sample per line made of ``0``/``1`` characters. Lines starting
with ``#`` are header lines of the form ``# key: value`` where ``value`` is JSON
(plain strings are accepted as-is). The ``width`` key fixes the row width and
makes empty datasets loadable.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetParseError, InvalidArgumentError

try:
    import numba as _nb
except ModuleNotFoundError:  # pragma: no cover
    _nb = None

__all__ = [
    "BitDataset",
    "load",
    "save",
    "split",
    "concatenate",
    "gol_step",
    "gol_generate",
    "ising_generate",
    "binarize_images",
    "empirical_bit_covariance",
    "hamming_histogram",
]


@dataclass(eq=False)
class BitDataset:
    """``N x d`` matrix of bits plus free-form provenance metadata."""

    rows: np.ndarray
    metadata: dict = field(default_factory=dict)
    width: int | None = None

    def __post_init__(self):
        rows = np.asarray(self.rows)
        if rows.ndim == 1 and rows.size == 0:
            rows = rows.reshape(0, self.width or 0)
        if rows.ndim != 2:
            raise InvalidArgumentError(f"dataset rows must be 2-D, got shape {rows.shape}")
        if rows.size and not np.all((rows == 0) | (rows == 1)):
            raise InvalidArgumentError("dataset entries must be 0 or 1")
        if self.width is not None and rows.shape[1] != self.width:
            if rows.shape[0] == 0:
                rows = np.zeros((0, self.width))
            else:
                raise InvalidArgumentError(f"rows have width {rows.shape[1]}, expected {self.width}")
        self.rows = rows.astype(np.uint8)
        self.width = rows.shape[1]

    @property
    def d(self) -> int:
        return self.width

    def __len__(self):
        return self.rows.shape[0]

    def __eq__(self, other):
        if not isinstance(other, BitDataset):
            return NotImplemented
        return self.rows.shape == other.rows.shape and np.array_equal(self.rows, other.rows)

    def __repr__(self):
        return f"BitDataset(N={len(self)}, d={self.d})"


def save(dataset: BitDataset, path) -> None:
    meta = dict(dataset.metadata)
    meta["width"] = dataset.d
    lines = [f"# {key}: {json.dumps(meta[key], sort_keys=True)}" for key in sorted(meta)]
    body = ["".join("1" if b else "0" for b in row) for row in dataset.rows]
    Path(path).write_text("\n".join(lines + body) + "\n")


def load(path) -> BitDataset:
    meta: dict = {}
    rows: list = []
    width = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if line.startswith("#"):
                key, sep, value = line[1:].partition(":")
                if not sep:
                    continue
                key, value = key.strip(), value.strip()
                try:
                    meta[key] = json.loads(value)
                except json.JSONDecodeError:
                    meta[key] = value
                continue
            if not line.strip():
                continue
            bad = set(line) - {"0", "1"}
            if bad:
                raise DatasetParseError(f"unexpected characters {sorted(bad)!r}", lineno)
            if width is None:
                width = len(line)
            elif len(line) != width:
                raise DatasetParseError(f"row has width {len(line)}, expected {width}", lineno)
            rows.append(np.frombuffer(line.encode(), dtype=np.uint8) - ord("0"))
    declared = meta.pop("width", None)
    if declared is not None:
        declared = int(declared)
        if width is not None and width != declared:
            raise DatasetParseError(f"rows have width {width} but header declares {declared}")
    if not rows:
        if declared is None:
            raise DatasetParseError("empty dataset without a width header")
        return BitDataset(np.zeros((0, declared), dtype=np.uint8), meta, declared)
    return BitDataset(np.array(rows, dtype=np.uint8), meta)


def split(dataset: BitDataset, train_fraction: float):
    """Deterministic head/tail split."""
    if not 0 <= train_fraction <= 1:
        raise InvalidArgumentError(f"train fraction must be in [0, 1], got {train_fraction}")
    cut = int(round(train_fraction * len(dataset)))
    meta = dict(dataset.metadata)
    return (
        BitDataset(dataset.rows[:cut], dict(meta, split="train"), dataset.d),
        BitDataset(dataset.rows[cut:], dict(meta, split="test"), dataset.d),
    )


def concatenate(datasets) -> BitDataset:
    datasets = list(datasets)
    return BitDataset(np.concatenate([ds.rows for ds in datasets]), dict(datasets[0].metadata))


def gol_step(grids: np.ndarray, wrap: bool = False) -> np.ndarray:
    """One Game-of-Life update of a stack of grids ``(..., rows, cols)``."""
    g = np.asarray(grids, dtype=np.uint8)
    if wrap:
        n = sum(
            np.roll(np.roll(g, di, axis=-2), dj, axis=-1)
            for di in (-1, 0, 1)
            for dj in (-1, 0, 1)
            if di or dj
        )
    else:
        pad = [(0, 0)] * (g.ndim - 2) + [(1, 1), (1, 1)]
        p = np.pad(g, pad)
        r, c = g.shape[-2:]
        n = sum(
            p[..., 1 + di:1 + di + r, 1 + dj:1 + dj + c]
            for di in (-1, 0, 1)
            for dj in (-1, 0, 1)
            if di or dj
        )
    return ((n == 3) | ((g == 1) & (n == 2))).astype(np.uint8)


def gol_generate(rows: int, cols: int, steps: int, n_samples: int, rng, wrap: bool = False) -> BitDataset:
    """Uniform random grids evolved under Game-of-Life rules; all-dead results are redrawn."""
    if steps < 0:
        raise InvalidArgumentError(f"steps must be non-negative, got {steps}")
    out = np.zeros((0, rows * cols), dtype=np.uint8)
    while len(out) < n_samples:
        need = n_samples - len(out)
        grids = rng.integers(0, 2, size=(need, rows, cols), dtype=np.uint8)
        for _ in range(steps):
            grids = gol_step(grids, wrap)
        flat = grids.reshape(need, rows * cols)
        out = np.concatenate([out, flat[flat.any(axis=1)]])
    meta = {
        "generator": "game_of_life",
        "params": {"rows": rows, "cols": cols, "steps": steps, "boundary": "wrap" if wrap else "dead"},
    }
    return BitDataset(out, meta, rows * cols)


def _metropolis_py(spins, nbrs, field, J, beta, sites, uniforms, thin, out):
    n_rec = 0
    for step in range(sites.shape[0]):
        k = sites[step]
        s = spins[k]
        local = J * (spins[nbrs[k, 0]] + spins[nbrs[k, 1]] + spins[nbrs[k, 2]] + spins[nbrs[k, 3]]) + field[k]
        dE = 2.0 * s * local
        if dE <= 0.0 or uniforms[step] < np.exp(-beta * dE):
            spins[k] = -s
        if thin > 0 and (step + 1) % thin == 0:
            out[n_rec, :] = spins
            n_rec += 1


_metropolis = _nb.njit(cache=False)(_metropolis_py) if _nb is not None else _metropolis_py


def _periodic_neighbors(rows, cols):
    i, j = np.divmod(np.arange(rows * cols), cols)
    return np.stack(
        [((i - 1) % rows) * cols + j, ((i + 1) % rows) * cols + j, i * cols + (j - 1) % cols, i * cols + (j + 1) % cols],
        axis=1,
    ).astype(np.int64)


def ising_generate(
    rows: int,
    cols: int,
    J: float,
    h: float,
    T: float,
    warmup: int,
    thin: int,
    n_samples: int,
    rng,
    init: str = "random",
) -> BitDataset:
    """Single-spin-flip Metropolis snapshots of a periodic 2D Ising model.

    The field is ``+h`` on sites with even ``i + j`` and ``-h`` elsewhere.
    ``warmup`` and ``thin`` count single-spin proposals. Spins map ``-1 -> 0``,
    ``+1 -> 1``. ``T = inf`` accepts every proposal.
    """
    if not T > 0:
        raise InvalidArgumentError(f"temperature must be positive, got {T}")
    if thin < 1:
        raise InvalidArgumentError(f"thin must be >= 1, got {thin}")
    n = rows * cols
    i, j = np.divmod(np.arange(n), cols)
    field = np.where((i + j) % 2 == 0, h, -h).astype(float)
    nbrs = _periodic_neighbors(rows, cols)
    beta = 0.0 if np.isinf(T) else 1.0 / T
    if init == "random":
        spins = rng.choice(np.array([-1, 1], dtype=np.int64), size=n)
    elif init == "up":
        spins = np.ones(n, dtype=np.int64)
    else:
        raise InvalidArgumentError(f"unknown initial state {init!r}")
    spins = spins.astype(np.float64)
    dummy = np.zeros((1, n))
    chunk = 1 << 20
    for start in range(0, warmup, chunk):
        m = min(chunk, warmup - start)
        _metropolis(spins, nbrs, field, float(J), beta, rng.integers(0, n, size=m), rng.random(m), 0, dummy)
    out = np.empty((n_samples, n))
    per_call = max(1, chunk // thin)
    for start in range(0, n_samples, per_call):
        k = min(per_call, n_samples - start)
        _metropolis(
            spins, nbrs, field, float(J), beta, rng.integers(0, n, size=k * thin), rng.random(k * thin), thin,
            out[start:start + k],
        )
    meta = {
        "generator": "ising_metropolis",
        "params": {
            "rows": rows, "cols": cols, "J": J, "h": h, "T": T if np.isfinite(T) else "inf",
            "warmup": warmup, "thin": thin, "field": "checkerboard", "boundary": "periodic", "init": init,
        },
    }
    return BitDataset((out > 0).astype(np.uint8), meta, n)


def binarize_images(images, threshold: float = 0.5) -> BitDataset:
    """Flatten grayscale images, rescale each to ``[0, 1]`` and threshold."""
    X = np.asarray(images, dtype=float).reshape(len(images), -1)
    lo = X.min(axis=1, keepdims=True)
    span = X.max(axis=1, keepdims=True) - lo
    span[span == 0] = 1.0
    return BitDataset(((X - lo) / span > threshold).astype(np.uint8), {"generator": "binarized_images"})


def _rows(dataset):
    return np.asarray(getattr(dataset, "rows", dataset))


def empirical_bit_covariance(dataset) -> np.ndarray:
    """Plug-in covariance ``E[x_i x_j] - E[x_i] E[x_j]`` of the empirical distribution."""
    X = _rows(dataset).astype(float)
    if X.shape[0] < 2:
        raise InvalidArgumentError("covariance needs at least two samples")
    mean = X.mean(axis=0)
    return X.T @ X / X.shape[0] - np.outer(mean, mean)


def hamming_histogram(dataset) -> np.ndarray:
    X = _rows(dataset)
    return np.bincount(X.sum(axis=1).astype(np.int64), minlength=X.shape[1] + 1)
