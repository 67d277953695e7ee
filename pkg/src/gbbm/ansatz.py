"""Layered circuit ansatz: parameter layout, interferometer meshes and the forward pass.

Each layer applies, in order, an interferometer ``U1``, single-mode squeezers,
an interferometer ``U2`` and position displacements. A layer's parameters are
stored contiguously as ``(alpha, theta1, r, theta2)``; a full parameter vector
is the concatenation of its layers.

Interferometers are built from two-parameter units: a phase shift ``phi`` on the
first arm followed by a real beamsplitter of angle ``theta``. The Clements layout
places ``d(d-1)/2`` units in a rectangular mesh, the graph layout places one
unit per ordered edge. Both end with a column of ``d`` phase shifts.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import gaussian as gs
from .errors import InvalidArgumentError

__all__ = [
    "CircuitSpec",
    "LayerParams",
    "Mesh",
    "clements_spec",
    "graph_spec",
    "complete_graph_spec",
    "mesh_for",
    "interferometer_param_count",
    "layer_param_count",
    "param_count",
    "init_params",
    "unpack",
    "interferometer",
    "interferometer_vjp",
    "layer_gates",
    "layer_to_affine",
    "forward",
]

CLEMENTS = "clements"
GRAPH = "graph"


@dataclass(frozen=True)
class CircuitSpec:
    """Circuit layout: mode count, layer count and interferometer layout.

    ``edges`` is only used by the graph layout; its order is the order in
    which beamsplitters are applied.
    """

    d: int
    layers: int = 1
    layout: str = CLEMENTS
    edges: tuple = ()
    edge_seed: int | None = None

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise InvalidArgumentError(f"mode count must be positive, got {self.d}")
        if int(self.layers) != self.layers or self.layers < 1:
            raise InvalidArgumentError(f"layer count must be >= 1, got {self.layers}")
        if self.layout not in (CLEMENTS, GRAPH):
            raise InvalidArgumentError(f"unknown layout {self.layout!r}")
        edges = tuple((int(i), int(j)) for i, j in self.edges)
        if self.layout == CLEMENTS and edges:
            raise InvalidArgumentError("Clements layout takes no edge list")
        for i, j in edges:
            if i == j or not (0 <= i < self.d and 0 <= j < self.d):
                raise InvalidArgumentError(f"invalid edge ({i}, {j}) for {self.d} modes")
        object.__setattr__(self, "edges", edges)

    def to_dict(self) -> dict:
        out = {"d": self.d, "layers": self.layers, "layout": self.layout}
        if self.layout == GRAPH:
            out["edges"] = [list(e) for e in self.edges]
            if self.edge_seed is not None:
                out["edge_seed"] = self.edge_seed
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "CircuitSpec":
        layout = data.get("layout", CLEMENTS)
        if layout == "complete":
            return complete_graph_spec(data["d"], data.get("layers", 1), data.get("edge_seed", 0))
        return cls(
            d=data["d"],
            layers=data.get("layers", 1),
            layout=layout,
            edges=tuple(tuple(e) for e in data.get("edges", ())),
            edge_seed=data.get("edge_seed"),
        )


def clements_spec(d: int, layers: int = 1) -> CircuitSpec:
    return CircuitSpec(d, layers, CLEMENTS)


def graph_spec(d: int, edges: Sequence[Sequence[int]], layers: int = 1) -> CircuitSpec:
    return CircuitSpec(d, layers, GRAPH, tuple(tuple(e) for e in edges))


def complete_graph_spec(d: int, layers: int = 1, seed: int = 0) -> CircuitSpec:
    """All-to-all layout with edges applied in a seeded uniformly random order."""
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    order = np.random.default_rng(seed).permutation(len(pairs))
    return CircuitSpec(d, layers, GRAPH, tuple(pairs[k] for k in order), edge_seed=seed)


class LayerParams(NamedTuple):
    alpha: np.ndarray
    theta1: np.ndarray
    r: np.ndarray
    theta2: np.ndarray


@dataclass(frozen=True, eq=False)
class Mesh:
    """Unit placement of one interferometer.

    ``pairs[k]`` are the modes of unit ``k``; unit ``k`` reads its beamsplitter
    angle at ``2k`` and its phase at ``2k + 1``; terminal phases follow the units.
    ``groups`` partitions consecutive units into batches acting on disjoint modes.
    """

    d: int
    pairs: np.ndarray
    groups: list = field(default_factory=list)

    @property
    def n_units(self) -> int:
        return len(self.pairs)

    @property
    def n_params(self) -> int:
        return 2 * self.n_units + self.d


def _clements_pairs(d):
    pairs = []
    for col in range(d):
        for i in range(col % 2, d - 1, 2):
            pairs.append((i, i + 1))
    return pairs


def _group_consecutive(pairs):
    groups, current, used = [], [], set()
    for k, (i, j) in enumerate(pairs):
        if i in used or j in used:
            groups.append(np.array(current, dtype=int))
            current, used = [], set()
        current.append(k)
        used.update((i, j))
    if current:
        groups.append(np.array(current, dtype=int))
    return groups


_MESH_CACHE: dict = {}


def mesh_for(spec: CircuitSpec) -> Mesh:
    key = (spec.d, spec.layout, spec.edges)
    mesh = _MESH_CACHE.get(key)
    if mesh is None:
        pairs = _clements_pairs(spec.d) if spec.layout == CLEMENTS else list(spec.edges)
        arr = np.array(pairs, dtype=int).reshape(-1, 2)
        mesh = Mesh(spec.d, arr, _group_consecutive(pairs))
        _MESH_CACHE[key] = mesh
    return mesh


def interferometer_param_count(spec: CircuitSpec) -> int:
    if spec.layout == CLEMENTS:
        return spec.d * spec.d
    return 2 * len(spec.edges) + spec.d


def layer_param_count(spec: CircuitSpec) -> int:
    """Trainable parameters in one layer: two interferometers, squeezers, displacements."""
    return 2 * interferometer_param_count(spec) + 2 * spec.d


def param_count(spec: CircuitSpec) -> int:
    return layer_param_count(spec) * spec.layers


def _layer_slices(spec):
    d, p = spec.d, interferometer_param_count(spec)
    return (
        slice(0, d),
        slice(d, d + p),
        slice(d + p, 2 * d + p),
        slice(2 * d + p, 2 * d + 2 * p),
    )


def _angle_mask(spec):
    mask = np.ones(layer_param_count(spec), dtype=bool)
    a, _, r, _ = _layer_slices(spec)
    mask[a] = False
    mask[r] = False
    return np.tile(mask, spec.layers)


def init_params(spec: CircuitSpec, seed=None, scale: float = 0.1) -> np.ndarray:
    """Angles uniform on ``[0, 2 pi)``; displacement and squeezing ``N(0, scale)``."""
    rng = np.random.default_rng(seed)
    n = param_count(spec)
    angles = _angle_mask(spec)
    params = np.empty(n)
    params[angles] = rng.uniform(0.0, 2 * np.pi, size=int(angles.sum()))
    params[~angles] = rng.normal(0.0, scale, size=int((~angles).sum()))
    return params


def _check_params(spec, params):
    params = np.asarray(params, dtype=float)
    if params.shape != (param_count(spec),):
        raise InvalidArgumentError(
            f"expected {param_count(spec)} parameters for {spec}, got shape {params.shape}"
        )
    return params


def unpack(spec: CircuitSpec, params) -> list[LayerParams]:
    params = _check_params(spec, params)
    n = layer_param_count(spec)
    sl = _layer_slices(spec)
    return [LayerParams(*(params[k * n:(k + 1) * n][s] for s in sl)) for k in range(spec.layers)]


def _as_layer(spec, layer_params):
    if isinstance(layer_params, LayerParams):
        return layer_params
    block = np.asarray(layer_params, dtype=float)
    if block.shape != (layer_param_count(spec),):
        raise InvalidArgumentError(
            f"layer block must have {layer_param_count(spec)} entries, got {block.shape}"
        )
    return LayerParams(*(block[s] for s in _layer_slices(spec)))


def _unit_coefficients(theta, phi):
    c, s = np.cos(theta), np.sin(theta)
    e = np.exp(-1j * phi)
    return c * e, -s, s * e, c


def interferometer(mesh: Mesh, angles) -> np.ndarray:
    """Mode unitary of a mesh, acting on annihilation operators."""
    angles = np.asarray(angles, dtype=float)
    if angles.shape != (mesh.n_params,):
        raise InvalidArgumentError(f"mesh needs {mesh.n_params} angles, got {angles.shape}")
    theta = angles[0:2 * mesh.n_units:2]
    phi = angles[1:2 * mesh.n_units:2]
    V = np.eye(mesh.d, dtype=complex)
    for g in mesh.groups:
        i, j = mesh.pairs[g, 0], mesh.pairs[g, 1]
        t00, t01, t10, t11 = (x[:, None] for x in _unit_coefficients(theta[g], phi[g]))
        Vi, Vj = V[i], V[j]
        V[i] = t00 * Vi + t01 * Vj
        V[j] = t10 * Vi + t11 * Vj
    return np.exp(-1j * angles[2 * mesh.n_units:])[:, None] * V


def interferometer_vjp(mesh: Mesh, angles, U, grad_U) -> np.ndarray:
    """Gradient of a real loss with respect to the mesh angles.

    ``grad_U`` is the complex cotangent ``dL/dRe(U) + i dL/dIm(U)`` so that
    ``dL = Re sum(conj(grad_U) * dU)``. The mesh is unwound from the output side
    using unitarity, so only ``O(d^2)`` memory is used.
    """
    angles = np.asarray(angles, dtype=float)
    n = mesh.n_units
    out = np.zeros_like(angles)
    V = np.array(U, dtype=complex)
    G = np.array(grad_U, dtype=complex)

    psi = angles[2 * n:]
    ph = np.exp(1j * psi)[:, None]
    V *= ph  # input of the terminal column
    w = np.einsum("ij,ij->i", G, V.conj())
    out[2 * n:] = np.real(np.conj(w) * (-1j) * np.exp(-1j * psi))
    G *= ph

    theta = angles[0:2 * n:2]
    phi = angles[1:2 * n:2]
    for g in reversed(mesh.groups):
        i, j = mesh.pairs[g, 0], mesh.pairs[g, 1]
        th, ps = theta[g], phi[g]
        c, s = np.cos(th)[:, None], np.sin(th)[:, None]
        e = np.exp(-1j * ps)[:, None]
        ec = e.conj()
        Vi, Vj = V[i], V[j]
        Vin_i = c * ec * Vi + s * ec * Vj
        Vin_j = -s * Vi + c * Vj
        Gi, Gj = G[i], G[j]
        ci, cj = Vin_i.conj(), Vin_j.conj()
        w_ii = np.einsum("ab,ab->a", Gi, ci)
        w_ij = np.einsum("ab,ab->a", Gi, cj)
        w_ji = np.einsum("ab,ab->a", Gj, ci)
        w_jj = np.einsum("ab,ab->a", Gj, cj)
        c, s, e = c[:, 0], s[:, 0], e[:, 0]
        d_theta = (
            np.conj(w_ii) * (-s * e)
            + np.conj(w_ij) * (-c)
            + np.conj(w_ji) * (c * e)
            + np.conj(w_jj) * (-s)
        )
        d_phi = np.conj(w_ii) * (-1j * c * e) + np.conj(w_ji) * (-1j * s * e)
        out[2 * g] = d_theta.real
        out[2 * g + 1] = d_phi.real
        V[i], V[j] = Vin_i, Vin_j
        c, s, ec = c[:, None], s[:, None], e.conj()[:, None]
        G[i] = c * ec * Gi + s * ec * Gj
        G[j] = -s * Gi + c * Gj
    return out


def layer_gates(spec: CircuitSpec, layer_params) -> list[tuple]:
    """Explicit gate sequence of one layer, in application order.

    Entries are ``("phase", theta, mode)``, ``("beamsplitter", theta, phi, (i, j))``,
    ``("squeeze", r, mode)`` and ``("displace", alpha, mode)``.
    """
    lp = _as_layer(spec, layer_params)
    mesh = mesh_for(spec)
    gates = []

    def mesh_gates(angles):
        for k, (i, j) in enumerate(mesh.pairs):
            gates.append(("phase", angles[2 * k + 1], int(i)))
            gates.append(("beamsplitter", angles[2 * k], 0.0, (int(i), int(j))))
        for m in range(spec.d):
            gates.append(("phase", angles[2 * mesh.n_units + m], m))

    mesh_gates(lp.theta1)
    gates.extend(("squeeze", lp.r[m], m) for m in range(spec.d))
    mesh_gates(lp.theta2)
    gates.extend(("displace", lp.alpha[m], m) for m in range(spec.d))
    return gates


def _layer_parts(spec, lp):
    mesh = mesh_for(spec)
    U1 = interferometer(mesh, lp.theta1)
    U2 = interferometer(mesh, lp.theta2)
    b = np.concatenate([np.exp(-lp.r), np.exp(lp.r)])
    return U1, U2, b


def layer_to_affine(spec: CircuitSpec, layer_params) -> gs.AffineSymplectic:
    lp = _as_layer(spec, layer_params)
    U1, U2, b = _layer_parts(spec, lp)
    S = (gs.passive(U2).S * b) @ gs.passive(U1).S
    t = np.concatenate([np.sqrt(2.0) * lp.alpha, np.zeros(spec.d)])
    return gs.AffineSymplectic(S, t)


def forward(spec: CircuitSpec, params) -> gs.GaussianState:
    """Evolve the vacuum through every layer of the circuit."""
    state = gs.vacuum(spec.d)
    for lp in unpack(spec, params):
        state = gs.apply(state, layer_to_affine(spec, lp))
    return state
