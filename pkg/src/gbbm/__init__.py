"""Gaussian boson Born machines: phase-space simulation and kernel-based training.

Submodules:
    gaussian: Gaussian states and affine symplectic maps.
    ansatz: layered circuit parameterization.
    observables: parity and threshold operator strings.
    training: MMD^2 loss, gradients and the Adam training loop.
    sampler: exact outcome tables and samplers for small widths.
    baselines: Chow-Liu and uniform reference models.
    datasets: bitstring I/O and synthetic generators.
"""
from . import ansatz, baselines, datasets, gaussian, observables, sampler, training
from .ansatz import CircuitSpec, clements_spec, complete_graph_spec, forward, graph_spec, init_params, param_count
from .datasets import BitDataset
from .errors import (
    ConfigError,
    DatasetParseError,
    GBBMError,
    InvalidArgumentError,
    LocalityError,
    NumericalError,
    ResourceLimitError,
    StateInvalidError,
    TrainingDivergedError,
)
from .gaussian import AffineSymplectic, GaussianState, vacuum
from .training import TrainConfig, train

__version__ = "0.1.0"
