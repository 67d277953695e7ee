"""Versioned binary checkpoints for bit-exact resumption.

Layout: 8 magic bytes, little-endian ``u32`` format version, ``u64`` header
length, UTF-8 JSON header, then three little-endian float64 arrays of the
parameter length (parameters, Adam first moment, Adam second moment).
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ansatz import CircuitSpec, param_count
from .errors import ConfigError
from .training import AdamState, TrainConfig

MAGIC = b"GBBMCKPT"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")

__all__ = ["Checkpoint", "save_checkpoint", "load_checkpoint", "MAGIC", "VERSION"]


@dataclass
class Checkpoint:
    spec: CircuitSpec
    params: np.ndarray
    optimizer: AdamState
    episode: int = 0
    rng_state: dict | None = None
    config: TrainConfig | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64)
        n = param_count(self.spec)
        if self.params.shape != (n,):
            raise ConfigError(f"checkpoint has {self.params.size} parameters but the circuit needs {n}")
        if self.optimizer.m.shape != (n,) or self.optimizer.v.shape != (n,):
            raise ConfigError("optimizer moments do not match the parameter length")

    @classmethod
    def from_result(cls, result, extra=None) -> "Checkpoint":
        return cls(result.config.spec, result.params, result.optimizer, result.episode,
                   result.rng_state, result.config, dict(extra or {}))


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    header = {
        "spec": ckpt.spec.to_dict(),
        "n_params": int(ckpt.params.size),
        "episode": int(ckpt.episode),
        "adam_step": int(ckpt.optimizer.step),
        "rng_state": ckpt.rng_state,
        "config": ckpt.config.to_dict() if ckpt.config is not None else None,
        "extra": ckpt.extra,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(blob)))
        fh.write(blob)
        for arr in (ckpt.params, ckpt.optimizer.m, ckpt.optimizer.v):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    tmp.replace(path)


def load_checkpoint(path) -> Checkpoint:
    data = Path(path).read_bytes()
    if len(data) < _PREFIX.size:
        raise ConfigError(f"{path}: file too short to be a checkpoint")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise ConfigError(f"{path}: not a checkpoint file")
    if version != VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {version} (expected {VERSION})")
    start = _PREFIX.size
    header = json.loads(data[start:start + hlen].decode("utf-8"))
    n = int(header["n_params"])
    body = np.frombuffer(data, dtype="<f8", offset=start + hlen)
    if body.size != 3 * n:
        raise ConfigError(f"{path}: expected {3 * n} float64 values, found {body.size}")
    params, m, v = (body[k * n:(k + 1) * n].astype(np.float64) for k in range(3))
    config = TrainConfig.from_dict(header["config"]) if header.get("config") else None
    return Checkpoint(
        CircuitSpec.from_dict(header["spec"]), params, AdamState(m, v, int(header["adam_step"])),
        int(header["episode"]), header.get("rng_state"), config, header.get("extra") or {},
    )
