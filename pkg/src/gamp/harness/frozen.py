"""Frozen-policy binary format.

Little-endian layout: magic "GAMP", u32 version, u32 layer count L, u32
observation dim, L+1 u32 layer dims, L u32 activation ids, then per layer
float32 weights (row-major, out x in) and biases, then the observation
normalizer mean and variance (float32 each, obs dim entries), then float32
action scale and clamp bounds. Inference runs entirely in float32 and never
consults the training-time mode gate.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..nets import MlpParams

MAGIC = b"GAMP"
VERSION = 1

ACT_IDS = {"identity": 0, "tanh": 1, "relu": 2, "elu": 3, "sigmoid": 4}
ACT_NAMES = {v: k for k, v in ACT_IDS.items()}


class FrozenFormatError(RuntimeError):
    """Base class for frozen-policy file errors."""


class BadMagicError(FrozenFormatError):
    pass


class VersionError(FrozenFormatError):
    pass


class TruncationError(FrozenFormatError):
    pass


def _act_f32(name: str, z: np.ndarray) -> np.ndarray:
    one = np.float32(1.0)
    if name == "identity":
        return z
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, np.float32(0.0))
    if name == "elu":
        return np.where(z > 0, z, np.expm1(np.minimum(z, np.float32(0.0))))
    if name == "sigmoid":
        return one / (one + np.exp(-z))
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class FrozenPolicy:
    layer_dims: list
    activations: list  # one name per layer
    weights: list  # float32, row-major (out, in)
    biases: list  # float32
    obs_mean: np.ndarray  # float32, obs dim
    obs_var: np.ndarray  # float32, obs dim
    action_scale: float
    clamp_lo: float
    clamp_hi: float

    @property
    def obs_dim(self) -> int:
        return int(self.layer_dims[0])

    def forward(self, obs: np.ndarray) -> np.ndarray:
        """Float32 network output on a raw observation (normalizer applied)."""
        x = np.asarray(obs, dtype=np.float32)
        if x.shape[-1] != self.obs_dim:
            raise ValueError(f"observation length {x.shape[-1]}, expected {self.obs_dim}")
        x = (x - self.obs_mean) / np.sqrt(self.obs_var + np.float32(1e-8))
        for w, b, act in zip(self.weights, self.biases, self.activations):
            x = _act_f32(act, x @ w.T + b)
        return x

    def act(self, obs: np.ndarray) -> np.ndarray:
        """Clamped action for deployment."""
        return np.clip(self.forward(obs), np.float32(self.clamp_lo), np.float32(self.clamp_hi))


def freeze(
    mean_net: MlpParams,
    obs_mean: np.ndarray,
    obs_var: np.ndarray,
    action_scale: float = 0.5,
    clamp: tuple = (-1.0, 1.0),
) -> FrozenPolicy:
    """Quantize a trained policy-mean network to the 32-bit frozen form."""
    L = mean_net.n_layers
    acts = [
        mean_net.output_activation if l == L - 1 else mean_net.hidden_activation
        for l in range(L)
    ]
    return FrozenPolicy(
        layer_dims=list(mean_net.layer_dims),
        activations=acts,
        weights=[w.astype(np.float32) for w in mean_net.weights],
        biases=[b.astype(np.float32) for b in mean_net.biases],
        obs_mean=np.asarray(obs_mean, dtype=np.float32),
        obs_var=np.asarray(obs_var, dtype=np.float32),
        action_scale=float(action_scale),
        clamp_lo=float(clamp[0]),
        clamp_hi=float(clamp[1]),
    )


def write_frozen(frozen: FrozenPolicy, path) -> None:
    L = len(frozen.weights)
    parts = [MAGIC, struct.pack("<III", VERSION, L, frozen.obs_dim)]
    parts.append(struct.pack(f"<{L + 1}I", *frozen.layer_dims))
    parts.append(struct.pack(f"<{L}I", *(ACT_IDS[a] for a in frozen.activations)))
    for w, b in zip(frozen.weights, frozen.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    parts.append(np.ascontiguousarray(frozen.obs_mean, dtype="<f4").tobytes())
    parts.append(np.ascontiguousarray(frozen.obs_var, dtype="<f4").tobytes())
    parts.append(struct.pack("<fff", frozen.action_scale, frozen.clamp_lo, frozen.clamp_hi))
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def export_policy(
    mean_net: MlpParams,
    obs_mean: np.ndarray,
    obs_var: np.ndarray,
    path,
    action_scale: float = 0.5,
    clamp: tuple = (-1.0, 1.0),
) -> FrozenPolicy:
    frozen = freeze(mean_net, obs_mean, obs_var, action_scale, clamp)
    write_frozen(frozen, path)
    return frozen


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.off = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise TruncationError(
                f"{self.path}: truncated (needed {self.off + n} bytes, have {len(self.data)})"
            )
        out = self.data[self.off : self.off + n]
        self.off += n
        return out

    def f32(self, n: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * n), dtype="<f4").copy()


def load_frozen(path) -> FrozenPolicy:
    with open(path, "rb") as fh:
        data = fh.read()
    r = _Reader(data, path)
    if r.take(4) != MAGIC:
        raise BadMagicError(f"{path}: not a frozen policy file (bad magic)")
    version, L, obs_dim = struct.unpack("<III", r.take(12))
    if version != VERSION:
        raise VersionError(f"{path}: format version {version}, expected {VERSION}")
    dims = list(struct.unpack(f"<{L + 1}I", r.take(4 * (L + 1))))
    if dims[0] != obs_dim:
        raise FrozenFormatError(f"{path}: header obs dim {obs_dim} != first layer dim {dims[0]}")
    act_ids = struct.unpack(f"<{L}I", r.take(4 * L))
    try:
        acts = [ACT_NAMES[i] for i in act_ids]
    except KeyError as exc:
        raise FrozenFormatError(f"{path}: unknown activation id {exc.args[0]}") from exc
    weights, biases = [], []
    for l in range(L):
        weights.append(r.f32(dims[l + 1] * dims[l]).reshape(dims[l + 1], dims[l]))
        biases.append(r.f32(dims[l + 1]))
    obs_mean = r.f32(obs_dim)
    obs_var = r.f32(obs_dim)
    action_scale, lo, hi = struct.unpack("<fff", r.take(12))
    if r.off != len(data):
        raise FrozenFormatError(f"{path}: {len(data) - r.off} unexpected trailing bytes")
    return FrozenPolicy(dims, acts, weights, biases, obs_mean, obs_var, action_scale, lo, hi)
