"""Expectation-value MMD^2 loss, its gradient, Adam and the training loop.

The loss for a batch is the mean squared difference between target and model
string values, averaged with equal weight over bandwidth groups. Gradients
are propagated by hand through the string formulas, the moment updates of
every layer and the interferometer meshes (reverse mode, no tape beyond the
per-layer input moments).
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import ansatz as az
from . import gaussian as gs
from . import observables as ob
from .errors import InvalidArgumentError, TrainingDivergedError

__all__ = [
    "LossBatch",
    "TargetExpvals",
    "TrainConfig",
    "TrainHistory",
    "TrainResult",
    "AdamState",
    "median_heuristic",
    "default_bandwidths",
    "make_batch",
    "mmd2",
    "mmd2_per_bandwidth",
    "loss_and_gradient",
    "finite_difference_gradient",
    "exact_mmd2",
    "adam_step",
    "initial_params",
    "train",
]


def median_heuristic(dataset, pair_budget: int = 10_000, rng=None) -> float:
    """Half the median squared distance over randomly drawn sample pairs."""
    X = np.asarray(getattr(dataset, "rows", dataset), dtype=np.int64)
    n = X.shape[0]
    if n < 2:
        raise InvalidArgumentError("median heuristic needs at least two samples")
    rng = np.random.default_rng(rng)
    if n * (n - 1) // 2 <= pair_budget:
        i, j = np.triu_indices(n, 1)
    else:
        i = rng.integers(0, n, size=pair_budget)
        j = (i + rng.integers(1, n, size=pair_budget)) % n
    dist = np.abs(X[i] - X[j]).sum(axis=1)
    med = float(np.median(dist))
    if med <= 0:
        raise InvalidArgumentError(
            "median pairwise distance is zero (near-constant dataset); set bandwidths explicitly"
        )
    return med / 2.0


def default_bandwidths(sigma_base: float, count: int = 3) -> tuple:
    """Doubling ladder ``sigma_base * 2^k``."""
    return tuple(sigma_base * 2.0**k for k in range(count))


class TargetExpvals:
    """Empirical string values of a dataset, with a full lookup table for small widths."""

    table_limit = 20

    def __init__(self, dataset):
        from .sampler import fwht

        self.X = np.asarray(getattr(dataset, "rows", dataset))
        if self.X.ndim != 2 or self.X.shape[0] == 0:
            raise InvalidArgumentError("target dataset must be non-empty")
        self.d = self.X.shape[1]
        self.table = None
        if self.d <= self.table_limit:
            idx = (self.X.astype(np.int64) << np.arange(self.d)).sum(axis=1)
            hist = np.bincount(idx, minlength=2**self.d) / self.X.shape[0]
            self.table = fwht(hist)

    def __call__(self, subsets) -> np.ndarray:
        if self.table is not None:
            masks = np.array([int((1 << np.asarray(A, dtype=np.int64)).sum()) for A in subsets], dtype=np.int64)
            return self.table[masks] if len(masks) else np.zeros(0)
        return ob.empirical_expvals(self.X, subsets)


@dataclass
class LossBatch:
    """Operator strings grouped by bandwidth with their target values."""

    sigmas: tuple
    subsets: list
    targets: list
    kind: str = ob.PARITY
    max_locality: int | None = ob.DEFAULT_MAX_LOCALITY
    redrawn: int = 0

    def __post_init__(self):
        if not (len(self.sigmas) == len(self.subsets) == len(self.targets)):
            raise InvalidArgumentError("bandwidths, strings and targets must align")
        for S, t in zip(self.subsets, self.targets):
            if len(S) != len(t) or len(S) == 0:
                raise InvalidArgumentError("every bandwidth group needs aligned, non-empty strings")

    @property
    def size(self) -> int:
        return sum(len(S) for S in self.subsets)

    def flat(self):
        subsets = [A for group in self.subsets for A in group]
        targets = np.concatenate(self.targets)
        weights = np.concatenate([np.full(len(S), 1.0 / (len(S) * len(self.subsets))) for S in self.subsets])
        return subsets, targets, weights


def make_batch(targets, d, sigmas, n_strings, rng, kind=ob.PARITY, max_locality=ob.DEFAULT_MAX_LOCALITY):
    """Sample ``n_strings`` strings split evenly over ``sigmas`` and attach target values.

    ``targets`` is a dataset or a :class:`TargetExpvals`. Threshold strings
    longer than ``max_locality`` are redrawn.
    """
    if not isinstance(targets, TargetExpvals):
        targets = TargetExpvals(targets)
    sigmas = tuple(float(s) for s in sigmas)
    per = max(1, n_strings // len(sigmas))
    limit = max_locality if kind == ob.THRESHOLD else None
    groups, values, redrawn = [], [], 0
    for s in sigmas:
        subsets, r = ob.sample_subsets(s, d, per, rng, limit)
        redrawn += r
        groups.append(subsets)
        values.append(targets(subsets))
    return LossBatch(sigmas, groups, values, kind, max_locality, redrawn)


def _model_values(state, batch):
    subsets, _, _ = batch.flat()
    return ob.expvals(state, subsets, batch.kind, batch.max_locality)


def mmd2_per_bandwidth(spec, params, batch: LossBatch) -> np.ndarray:
    state = az.forward(spec, params)
    values = _model_values(state, batch)
    out, start = [], 0
    for t in batch.targets:
        e = values[start:start + len(t)]
        out.append(float(np.mean((t - e) ** 2)))
        start += len(t)
    return np.array(out)


def mmd2(spec, params, batch: LossBatch) -> float:
    """Equal-weight mean over bandwidth groups of the mean squared string residual."""
    return float(np.mean(mmd2_per_bandwidth(spec, params, batch)))


def _forward_tape(spec, params):
    mesh = az.mesh_for(spec)
    state = gs.vacuum(spec.d)
    tape = []
    for lp in az.unpack(spec, params):
        U1, U2, b = az._layer_parts(spec, lp)
        S1 = gs.passive(U1).S
        S2b = gs.passive(U2).S * b
        S = S2b @ S1
        t = np.concatenate([np.sqrt(2.0) * lp.alpha, np.zeros(spec.d)])
        tape.append((state, lp, U1, U2, b, S1, S2b, S))
        state = gs.apply(state, gs.AffineSymplectic(S, t))
    return state, tape, mesh


def _complex_cotangent(gS, d):
    gX = gS[:d, :d] + gS[d:, d:]
    gY = gS[d:, :d] - gS[:d, d:]
    return gX + 1j * gY


def _backward(spec, tape, mesh, g_mu, g_sigma):
    d = spec.d
    grads = []
    for k in range(len(tape) - 1, -1, -1):
        state_in, lp, U1, U2, b, S1, S2b, S = tape[k]
        g_S = np.outer(g_mu, state_in.mu) + 2.0 * (g_sigma @ S) @ state_in.sigma
        g_alpha = np.sqrt(2.0) * g_mu[:d]
        if k > 0:
            g_mu = S.T @ g_mu
            g_sigma = S.T @ g_sigma @ S
        # S = S2 diag(b) S1
        g_S1 = S2b.T @ g_S
        M = (S2b / b).T @ g_S
        g_b = np.einsum("ij,ij->i", M, S1)
        g_S2 = (g_S @ S1.T) * b
        g_r = -np.exp(-lp.r) * g_b[:d] + np.exp(lp.r) * g_b[d:]
        g_t1 = az.interferometer_vjp(mesh, lp.theta1, U1, _complex_cotangent(g_S1, d))
        g_t2 = az.interferometer_vjp(mesh, lp.theta2, U2, _complex_cotangent(g_S2, d))
        grads.append(np.concatenate([g_alpha, g_t1, g_r, g_t2]))
    return np.concatenate(grads[::-1])


def loss_and_gradient(spec, params, batch: LossBatch):
    """MMD^2 estimate and its exact gradient with respect to every parameter."""
    params = np.asarray(params, dtype=float)
    state, tape, mesh = _forward_tape(spec, params)
    subsets, targets, weights = batch.flat()
    # values from the vjp pass are bitwise those of the forward-only pass
    w_dummy = np.zeros(len(subsets))
    values, _, _ = ob.expvals_vjp(state, subsets, w_dummy, batch.kind, batch.max_locality)
    resid = targets - values
    loss = float(np.sum(weights * resid**2))
    upstream = -2.0 * weights * resid
    _, g_mu, g_sigma = ob.expvals_vjp(state, subsets, upstream, batch.kind, batch.max_locality)
    grad = _backward(spec, tape, mesh, g_mu, g_sigma)
    return loss, grad


def finite_difference_gradient(spec, params, batch: LossBatch, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of :func:`mmd2` (for testing)."""
    params = np.array(params, dtype=float)
    grad = np.empty_like(params)
    for k in range(params.size):
        orig = params[k]
        params[k] = orig + step
        up = mmd2(spec, params, batch)
        params[k] = orig - step
        down = mmd2(spec, params, batch)
        params[k] = orig
        grad[k] = (up - down) / (2 * step)
    return grad


def exact_mmd2(state_or_values, target, sigma: float, kind=ob.PARITY, max_locality=None) -> float:
    """MMD^2 summed over every subset with its exact kernel weight (small ``d`` only).

    ``state_or_values`` is a Gaussian state or a dataset/array of samples. With
    ``max_locality`` set, subsets longer than the cutoff are dropped and the
    remaining weights renormalized.
    """
    from .sampler import fwht, parity_table, subset_rows, vacuum_table

    tgt = target if isinstance(target, TargetExpvals) else TargetExpvals(target)
    if tgt.table is None:
        raise InvalidArgumentError("exact MMD^2 needs a width within the lookup-table limit")
    d = tgt.d
    if isinstance(state_or_values, gs.GaussianState):
        if kind == ob.PARITY:
            model = parity_table(state_or_values)
        else:
            # each mode in A contributes a factor (-1) * (p0 without it - 2 p0 with it)
            model = np.array(vacuum_table(state_or_values), dtype=float)
            n = model.size
            h = 1
            while h < n:
                model = model.reshape(n // (2 * h), 2, h)
                model[:, 1, :] = -model[:, 0, :] + 2.0 * model[:, 1, :]
                model = model.reshape(n)
                h *= 2
    else:
        model = TargetExpvals(state_or_values).table
    sizes = np.zeros(2**d, dtype=int)
    for k, masks, _ in subset_rows(d):
        sizes[masks] = k
    p = ob.subset_probability(sigma)
    weight = (1 - p) ** (d - sizes) * p**sizes
    if max_locality is not None:
        weight = np.where(sizes <= max_locality, weight, 0.0)
        weight /= weight.sum()
    return float(np.sum(weight * (tgt.table - model) ** 2))


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(params, gradient, state: AdamState, learning_rate: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update; returns new parameters and optimizer state."""
    g = np.asarray(gradient, dtype=float)
    if not np.all(np.isfinite(g)):
        raise TrainingDivergedError("non-finite gradient entries")
    if g.shape != np.shape(params):
        raise InvalidArgumentError(f"gradient shape {g.shape} does not match parameters {np.shape(params)}")
    step = state.step + 1
    m = beta1 * state.m + (1 - beta1) * g
    v = beta2 * state.v + (1 - beta2) * g * g
    m_hat = m / (1 - beta1**step)
    v_hat = v / (1 - beta2**step)
    new = np.asarray(params, dtype=float) - learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    return new, AdamState(m, v, step)


@dataclass
class TrainConfig:
    spec: az.CircuitSpec
    bandwidths: tuple
    strings_per_step: int = 1024
    learning_rate: float = 1e-3
    episodes: int = 1000
    seed: int = 0
    kind: str = ob.PARITY
    max_locality: int | None = ob.DEFAULT_MAX_LOCALITY
    resample_strings_each_step: bool = True
    eval_interval: int = 10
    lr_schedule: str = "constant"
    init_scale: float = 0.1
    checkpoint_interval: int = 0

    def __post_init__(self):
        if self.strings_per_step < 1:
            raise InvalidArgumentError("strings_per_step must be >= 1")
        if self.episodes < 0:
            raise InvalidArgumentError("episodes must be >= 0")
        if not self.learning_rate > 0:
            raise InvalidArgumentError("learning_rate must be positive")
        if self.eval_interval < 1:
            raise InvalidArgumentError("eval_interval must be >= 1")
        if self.lr_schedule not in ("constant", "cosine"):
            raise InvalidArgumentError(f"unknown learning-rate schedule {self.lr_schedule!r}")
        ob.KernelConfig(self.bandwidths)
        self.bandwidths = tuple(float(s) for s in self.bandwidths)

    def learning_rate_at(self, episode: int) -> float:
        if self.lr_schedule == "cosine" and self.episodes > 0:
            return 0.5 * self.learning_rate * (1 + math.cos(math.pi * episode / self.episodes))
        return self.learning_rate

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "bandwidths": list(self.bandwidths),
            "strings_per_step": self.strings_per_step,
            "learning_rate": self.learning_rate,
            "episodes": self.episodes,
            "seed": self.seed,
            "kind": self.kind,
            "max_locality": self.max_locality,
            "resample_strings_each_step": self.resample_strings_each_step,
            "eval_interval": self.eval_interval,
            "lr_schedule": self.lr_schedule,
            "init_scale": self.init_scale,
            "checkpoint_interval": self.checkpoint_interval,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        data["spec"] = az.CircuitSpec.from_dict(data["spec"])
        data["bandwidths"] = tuple(data["bandwidths"])
        return cls(**data)


@dataclass
class TrainHistory:
    sigmas: tuple
    rows: list = field(default_factory=list)

    def record(self, episode, seconds, per_sigma):
        per_sigma = [float(x) for x in per_sigma]
        if self.rows and episode <= self.rows[-1]["episode"]:
            raise InvalidArgumentError("history episodes must increase")
        self.rows.append({"episode": int(episode), "seconds": float(seconds),
                          "loss": per_sigma, "total": float(np.mean(per_sigma))})

    @property
    def episodes(self) -> np.ndarray:
        return np.array([r["episode"] for r in self.rows])

    @property
    def totals(self) -> np.ndarray:
        return np.array([r["total"] for r in self.rows])

    def columns(self) -> list:
        return ["episode", "seconds"] + [f"loss_sigma_{s:g}" for s in self.sigmas] + ["total"]

    def to_csv(self, path, header_lines=()):
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(self.columns())
            for r in self.rows:
                w.writerow([r["episode"], f"{r['seconds']:.6f}"] + [repr(x) for x in r["loss"]] + [repr(r["total"])])


@dataclass
class TrainResult:
    params: np.ndarray
    history: TrainHistory
    optimizer: AdamState
    rng_state: dict
    episode: int
    config: TrainConfig


def _seeds(seed):
    init_seq, string_seq = np.random.SeedSequence(seed).spawn(2)
    return init_seq, string_seq


def initial_params(config: TrainConfig) -> np.ndarray:
    """Parameters a fresh :func:`train` run starts from."""
    init_seq, _ = _seeds(config.seed)
    return az.init_params(config.spec, np.random.default_rng(init_seq), config.init_scale)


def train(config: TrainConfig, dataset, params=None, optimizer: AdamState | None = None,
          rng_state: dict | None = None, start_episode: int = 0, callback=None) -> TrainResult:
    """Run Adam on the MMD^2 estimate.

    Pass ``params``, ``optimizer``, ``rng_state`` and ``start_episode`` from a
    previous :class:`TrainResult` (or checkpoint) to resume; the continuation
    is identical to an uninterrupted run. ``callback(result)`` is invoked every
    ``checkpoint_interval`` episodes when that is positive.
    """
    spec = config.spec
    X = np.asarray(getattr(dataset, "rows", dataset))
    if X.ndim != 2 or X.shape[1] != spec.d:
        raise InvalidArgumentError(f"dataset width {X.shape[-1]} does not match circuit width {spec.d}")
    targets = TargetExpvals(X)
    _, string_seq = _seeds(config.seed)
    if params is None:
        params = initial_params(config)
    params = np.array(params, dtype=float)
    optimizer = optimizer or AdamState.zeros(params.size)
    rng = np.random.default_rng(string_seq)
    if rng_state is not None:
        rng.bit_generator.state = rng_state
    history = TrainHistory(config.bandwidths)

    def batch_for(generator):
        return make_batch(targets, spec.d, config.bandwidths, config.strings_per_step, generator,
                          config.kind, config.max_locality)

    fixed = None
    if not config.resample_strings_each_step:
        fixed = batch_for(np.random.default_rng(string_seq.spawn(1)[0]))

    def result(ep):
        return TrainResult(params, history, optimizer, rng.bit_generator.state, ep, config)

    t0 = time.perf_counter()
    for ep in range(start_episode, config.episodes):
        batch = fixed or batch_for(rng)
        loss, grad = loss_and_gradient(spec, params, batch)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise TrainingDivergedError(f"non-finite loss or gradient at episode {ep}")
        if ep % config.eval_interval == 0:
            per = mmd2_per_bandwidth(spec, params, batch)
            history.record(ep, time.perf_counter() - t0, per)
        params, optimizer = adam_step(params, grad, optimizer, config.learning_rate_at(ep))
        if config.checkpoint_interval and callback and (ep + 1) % config.checkpoint_interval == 0:
            callback(result(ep + 1))

    # final row uses its own stream so resumed and uninterrupted runs stay aligned
    final_rng = np.random.default_rng([config.seed, max(config.episodes, start_episode), 7])
    per = mmd2_per_bandwidth(spec, params, fixed or batch_for(final_rng))
    last = max(config.episodes, start_episode)
    if not history.rows or history.rows[-1]["episode"] < last:
        history.record(last, time.perf_counter() - t0, per)
    if not np.all(np.isfinite(per)):
        raise TrainingDivergedError("non-finite final loss")
    return result(last)
