"""Gaussian states in the moment picture and the affine-symplectic gate algebra.

Quadratures are ordered ``(x_1, ..., x_d, p_1, ..., p_d)`` and covariances are
normalized so that the vacuum has ``sigma = I``. With this convention a coherent
state of real amplitude ``a`` has position mean ``sqrt(2) * a`` and mean photon
number ``a**2``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError

__all__ = [
    "GaussianState",
    "AffineSymplectic",
    "symplectic_form",
    "symplectic_error",
    "vacuum",
    "identity",
    "phase_shifter",
    "beamsplitter",
    "squeezer",
    "displacement",
    "passive",
    "apply",
    "reduce",
    "husimi",
    "quadrature_indices",
]


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GaussianState:
    """First and second moments of a ``d``-mode Gaussian state."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = _frozen(self.mu)
        sigma = _frozen(self.sigma)
        if mu.ndim != 1 or mu.size % 2 or mu.size == 0:
            raise InvalidArgumentError(f"mean vector must have even positive length, got {mu.shape}")
        if sigma.shape != (mu.size, mu.size):
            raise InvalidArgumentError(
                f"covariance shape {sigma.shape} does not match mean length {mu.size}"
            )
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def d(self) -> int:
        return self.mu.size // 2

    def photon_number(self) -> float:
        """Total mean photon number ``tr(sigma) / 4 + |mu|^2 / 2 - d / 2``."""
        return float(np.trace(self.sigma) / 4 + self.mu @ self.mu / 2 - self.d / 2)

    def __repr__(self):
        return f"GaussianState(d={self.d})"


@dataclass(frozen=True, eq=False)
class AffineSymplectic:
    """Phase-space action ``mu -> S mu + t``, ``sigma -> S sigma S^T``."""

    S: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        S = _frozen(self.S)
        t = _frozen(self.t)
        if S.ndim != 2 or S.shape != (t.size, t.size) or t.size % 2:
            raise InvalidArgumentError(f"incompatible shapes S{S.shape}, t{t.shape}")
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "t", t)

    @property
    def d(self) -> int:
        return self.t.size // 2

    def __matmul__(self, other: "AffineSymplectic") -> "AffineSymplectic":
        """``self @ other`` applies ``other`` first, then ``self``."""
        if other.d != self.d:
            raise InvalidArgumentError(f"mode mismatch: {self.d} vs {other.d}")
        return AffineSymplectic(self.S @ other.S, self.S @ other.t + self.t)

    def __repr__(self):
        return f"AffineSymplectic(d={self.d})"


def _check_modes(d):
    if int(d) != d or d < 1:
        raise InvalidArgumentError(f"mode count must be a positive integer, got {d}")
    return int(d)


def _check_mode(mode, d):
    if int(mode) != mode or not 0 <= mode < d:
        raise InvalidArgumentError(f"mode index {mode} out of range for {d} modes")
    return int(mode)


def _finite_vector(values, name):
    v = np.atleast_1d(np.asarray(values, dtype=float))
    if v.ndim != 1 or v.size == 0:
        raise InvalidArgumentError(f"{name} must be a non-empty vector")
    if not np.all(np.isfinite(v)):
        raise InvalidArgumentError(f"{name} has non-finite entries")
    return v


def symplectic_form(d: int) -> np.ndarray:
    """The canonical form ``[[0, I], [-I, 0]]`` for ``d`` modes."""
    d = _check_modes(d)
    eye = np.eye(d)
    zero = np.zeros((d, d))
    return np.block([[zero, eye], [-eye, zero]])


def symplectic_error(S) -> float:
    """Max-norm of ``S Omega S^T - Omega``."""
    S = np.asarray(S, dtype=float)
    omega = symplectic_form(S.shape[0] // 2)
    return float(np.max(np.abs(S @ omega @ S.T - omega)))


def quadrature_indices(modes, d: int) -> np.ndarray:
    """Row indices of the x and p quadratures of ``modes``, x block first."""
    modes = np.asarray(modes, dtype=int)
    return np.concatenate([modes, modes + d])


def vacuum(d: int) -> GaussianState:
    d = _check_modes(d)
    return GaussianState(np.zeros(2 * d), np.eye(2 * d))


def identity(d: int) -> AffineSymplectic:
    d = _check_modes(d)
    return AffineSymplectic(np.eye(2 * d), np.zeros(2 * d))


def passive(U) -> AffineSymplectic:
    """Real image ``[[X, -Y], [Y, X]]`` of a mode unitary ``U = X + iY``.

    ``U`` acts on annihilation operators as ``a -> U a``.
    """
    U = np.asarray(U, dtype=complex)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise InvalidArgumentError(f"unitary must be square, got {U.shape}")
    X, Y = U.real, U.imag
    S = np.block([[X, -Y], [Y, X]])
    return AffineSymplectic(S, np.zeros(S.shape[0]))


def phase_shifter(theta: float, mode: int, d: int) -> AffineSymplectic:
    """Rotation ``x -> cos(t) x + sin(t) p``, ``p -> -sin(t) x + cos(t) p`` of one mode."""
    d = _check_modes(d)
    mode = _check_mode(mode, d)
    U = np.eye(d, dtype=complex)
    U[mode, mode] = np.exp(-1j * theta)
    return passive(U)


def beamsplitter(theta: float, phi: float, modes: Sequence[int], d: int) -> AffineSymplectic:
    """Two-mode unitary ``[[cos t, -e^{-i phi} sin t], [e^{i phi} sin t, cos t]]``."""
    d = _check_modes(d)
    if len(modes) != 2:
        raise InvalidArgumentError(f"beamsplitter needs two modes, got {modes}")
    i, j = (_check_mode(m, d) for m in modes)
    if i == j:
        raise InvalidArgumentError(f"beamsplitter modes must differ, got {modes}")
    c, s = np.cos(theta), np.sin(theta)
    U = np.eye(d, dtype=complex)
    U[i, i] = c
    U[i, j] = -np.exp(-1j * phi) * s
    U[j, i] = np.exp(1j * phi) * s
    U[j, j] = c
    return passive(U)


def squeezer(r) -> AffineSymplectic:
    """``S = diag(e^{-r}, e^{r})``; positive amplitudes squeeze x."""
    r = _finite_vector(r, "squeezing amplitudes")
    return AffineSymplectic(np.diag(np.concatenate([np.exp(-r), np.exp(r)])), np.zeros(2 * r.size))


def displacement(alpha) -> AffineSymplectic:
    """Position displacement by ``sqrt(2) * alpha`` on every mode."""
    alpha = _finite_vector(alpha, "displacement amplitudes")
    d = alpha.size
    return AffineSymplectic(np.eye(2 * d), np.concatenate([np.sqrt(2.0) * alpha, np.zeros(d)]))


def apply(state: GaussianState, op: AffineSymplectic) -> GaussianState:
    if state.d != op.d:
        raise InvalidArgumentError(f"state has {state.d} modes, operation acts on {op.d}")
    S = op.S
    sigma = S @ state.sigma @ S.T
    # symmetrize away rounding asymmetry
    sigma = 0.5 * (sigma + sigma.T)
    return GaussianState(S @ state.mu + op.t, sigma)


def _check_subset(A, d):
    A = np.asarray(A, dtype=int).ravel()
    if A.size == 0:
        raise InvalidArgumentError("mode subset must be non-empty")
    if np.any(A < 0) or np.any(A >= d):
        raise InvalidArgumentError(f"mode subset {A.tolist()} out of range for {d} modes")
    if np.any(np.diff(A) <= 0):
        raise InvalidArgumentError(f"mode subset {A.tolist()} must be strictly increasing")
    return A


def reduce(state: GaussianState, A) -> GaussianState:
    """Marginal state on the sorted mode subset ``A``."""
    A = _check_subset(A, state.d)
    idx = quadrature_indices(A, state.d)
    return GaussianState(state.mu[idx], state.sigma[np.ix_(idx, idx)])


def husimi(state: GaussianState) -> np.ndarray:
    """Husimi covariance ``(sigma + I) / 2``."""
    return 0.5 * (state.sigma + np.eye(state.sigma.shape[0]))
