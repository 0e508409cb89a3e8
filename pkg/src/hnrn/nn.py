"""Small feed-forward networks with exact reverse-mode gradients.

Just enough machinery for a deterministic actor-critic pair: fully connected
layers with rectifier hidden units, a tanh or identity output, bias-corrected
adaptive-moment updates, and soft target blending. Forward and backward accept
a single vector or a batch (rows are samples).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .sim import ContractError

_CHECKPOINT_MAGIC = b"MLPCKPT\x00"
_CHECKPOINT_VERSION = 1


class OptimizerError(RuntimeError):
    """Non-finite gradients reached the optimizer."""


class OutputActivation(Enum):
    TANH = 1
    IDENTITY = 0


class Mlp:
    """Fully connected network; hidden layers use max(0, x)."""

    def __init__(
        self,
        layer_dims: list[int],
        output_activation: OutputActivation = OutputActivation.TANH,
        seed: int = 0,
        final_scale: float = 1.0,
    ):
        if len(layer_dims) < 2:
            raise ContractError("need at least an input and an output dimension")
        self.layer_dims = list(layer_dims)
        self.output_activation = output_activation
        rng = np.random.default_rng(seed)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for i, (d_in, d_out) in enumerate(zip(layer_dims[:-1], layer_dims[1:])):
            bound = 1.0 / np.sqrt(d_in)
            w = rng.uniform(-bound, bound, size=(d_in, d_out))
            b = rng.uniform(-bound, bound, size=d_out)
            if i == len(layer_dims) - 2:
                w *= final_scale
                b *= final_scale
            self.weights.append(w)
            self.biases.append(b)
        self._cache: list[np.ndarray] | None = None

    def parameters(self) -> list[np.ndarray]:
        params: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            params.append(w)
            params.append(b)
        return params

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        h = np.atleast_2d(x)
        if h.shape[1] != self.layer_dims[0]:
            raise ContractError(
                f"input dim {h.shape[1]} does not match layer_dims[0]={self.layer_dims[0]}"
            )
        cache = [h]
        n_layers = len(self.weights)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if i < n_layers - 1:
                h = np.maximum(z, 0.0)
            elif self.output_activation is OutputActivation.TANH:
                h = np.tanh(z)
            else:
                h = z
            cache.append(h)
        self._cache = cache
        return h[0] if squeeze else h

    def backward(
        self, upstream: np.ndarray
    ) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray]:
        """Gradients of sum(upstream * output) for the cached forward pass.

        Returns (weight grads, bias grads, input grad). Requires forward to
        have been called; the cache is consumed.
        """
        if self._cache is None:
            raise ContractError("backward called without a cached forward pass")
        cache = self._cache
        self._cache = None
        g = np.atleast_2d(np.asarray(upstream, dtype=float))
        squeeze = np.asarray(upstream).ndim == 1
        if g.shape != cache[-1].shape and not squeeze:
            raise ContractError("upstream gradient shape does not match cached output")

        if self.output_activation is OutputActivation.TANH:
            g = g * (1.0 - cache[-1] ** 2)
        w_grads: list[np.ndarray] = [np.empty(0)] * len(self.weights)
        b_grads: list[np.ndarray] = [np.empty(0)] * len(self.biases)
        for i in range(len(self.weights) - 1, -1, -1):
            h_in = cache[i]
            w_grads[i] = h_in.T @ g
            b_grads[i] = g.sum(axis=0)
            g = g @ self.weights[i].T
            if i > 0:
                g = g * (cache[i] > 0.0)
        return w_grads, b_grads, (g[0] if squeeze else g)

    def copy(self) -> "Mlp":
        clone = Mlp(self.layer_dims, self.output_activation, seed=0)
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone


@dataclass
class Adam:
    """Bias-corrected adaptive-moment optimizer over a fixed parameter list."""

    step_size: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moments: list[np.ndarray] = field(default_factory=list)
    second_moments: list[np.ndarray] = field(default_factory=list)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if not self.first_moments:
            self.first_moments = [np.zeros_like(p) for p in params]
            self.second_moments = [np.zeros_like(p) for p in params]
        if len(params) != len(grads) or any(
            p.shape != g.shape for p, g in zip(params, grads)
        ):
            raise ContractError("parameter/gradient shape mismatch")
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise OptimizerError("non-finite gradient")
        self.step_count += 1
        correction1 = 1.0 - self.beta1**self.step_count
        correction2 = 1.0 - self.beta2**self.step_count
        for p, g, m, v in zip(params, grads, self.first_moments, self.second_moments):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.step_size * (m / correction1) / (np.sqrt(v / correction2) + self.epsilon)


def soft_update(target: Mlp, online: Mlp, mix: float) -> None:
    """Blend online parameters into the target: t <- (1 - mix) t + mix o."""
    if not 0.0 <= mix <= 1.0:
        raise ContractError("mix must lie in [0, 1]")
    for t_arr, o_arr in zip(target.parameters(), online.parameters()):
        if t_arr.shape != o_arr.shape:
            raise ContractError("network shapes differ")
        t_arr *= 1.0 - mix
        t_arr += mix * o_arr


def save_mlp(path: str, mlp: Mlp) -> None:
    with open(path, "wb") as f:
        f.write(_CHECKPOINT_MAGIC)
        f.write(
            struct.pack(
                "<qqq",
                _CHECKPOINT_VERSION,
                len(mlp.layer_dims),
                mlp.output_activation.value,
            )
        )
        f.write(np.asarray(mlp.layer_dims, dtype="<i8").tobytes())
        for w, b in zip(mlp.weights, mlp.biases):
            f.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_mlp(path: str) -> Mlp:
    with open(path, "rb") as f:
        if f.read(8) != _CHECKPOINT_MAGIC:
            raise ValueError(f"{path} is not a network checkpoint")
        version, n_dims, act = struct.unpack("<qqq", f.read(24))
        if version != _CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        dims = np.frombuffer(f.read(n_dims * 8), dtype="<i8").tolist()
        mlp = Mlp(dims, OutputActivation(act), seed=0)
        for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
            w = np.frombuffer(f.read(d_in * d_out * 8), dtype="<f8").reshape(d_in, d_out)
            b = np.frombuffer(f.read(d_out * 8), dtype="<f8")
            mlp.weights[i] = w.copy()
            mlp.biases[i] = b.copy()
    return mlp
