"""Binarized fully connected layers.

Hidden layers compute ``sign(z - delta)`` where ``z`` is the signed dot
product of +-1 inputs and +-1 weights and ``delta`` is a per-unit threshold.
During training ``delta`` comes from batch normalization:
``z_hat = (z - mu) / sigma`` is shifted by a learned ``beta``, so that at
inference ``delta = mu - beta * sigma``. The output layer keeps real scores
``gamma * z_hat + beta`` for the cross-entropy loss.

Gradients use the straight-through estimator: ``d sign(y) / dy`` is taken as
1 for ``|y| <= 1`` and 0 elsewhere, and a weight's gradient is zeroed when its
hidden real value lies outside ``[-w_clip, w_clip]``.
"""

from __future__ import annotations

import numpy as np

from ..array import SynapseArray
from .optim import quantize_update

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def binarize_activation(pre_activation, delta):
    pre = np.asarray(pre_activation)
    delta = np.asarray(delta)
    if pre.shape[-1] != delta.shape[-1]:
        raise ValueError(f"pre-activation width {pre.shape[-1]} != threshold width {delta.shape[-1]}")
    return np.where(pre - delta >= 0, 1, -1).astype(np.int8)


def popcount_xnor(w_bits: int, a_bits: int, k: int) -> int:
    """Number of agreeing positions between two ``k``-bit words (bit set = +1)."""
    mask = (1 << k) - 1
    return bin(~(w_bits ^ a_bits) & mask).count("1")


def bits_to_signs(bits: int, k: int) -> np.ndarray:
    return np.array([1 if (bits >> i) & 1 else -1 for i in range(k)], dtype=np.int64)


class FloatWeights:
    """Real weight matrix updated directly (no devices)."""

    def __init__(self, w: np.ndarray, w_clip: float):
        self.w = np.asarray(w, dtype=np.float64)
        self.w_clip = w_clip

    @property
    def shape(self):
        return self.w.shape

    def real(self) -> np.ndarray:
        return self.w

    def binary(self) -> np.ndarray:
        return np.where(self.w >= 0, 1, -1).astype(np.int8)

    def update(self, delta_w: np.ndarray, pulse_gain: float) -> int:
        self.w = np.clip(self.w + delta_w, -self.w_clip, self.w_clip)
        return 0


class DeviceWeights:
    """Weights held by a synapse array; updates become pulse counts."""

    def __init__(self, array: SynapseArray):
        self.array = array

    @property
    def shape(self):
        return self.array.shape

    def real(self) -> np.ndarray:
        return self.array.real_weights()

    def binary(self) -> np.ndarray:
        return self.array.binary_weights()

    def update(self, delta_w: np.ndarray, pulse_gain: float) -> int:
        return self.array.apply_updates(quantize_update(delta_w, pulse_gain))


class BnnLinear:
    def __init__(self, weights, output: bool = False, w_clip: float = 1.0):
        self.weights = weights
        self.fan_in, self.fan_out = weights.shape
        self.output = output
        self.w_clip = w_clip
        self.beta = np.zeros(self.fan_out)
        self.gamma = np.ones(self.fan_out)
        self.running_mean = np.zeros(self.fan_out)
        self.running_var = np.ones(self.fan_out)
        self._cache = None

    @property
    def threshold(self) -> np.ndarray:
        """Inference threshold ``delta`` of a hidden layer."""
        return self.running_mean - self.beta * np.sqrt(self.running_var + BN_EPS)

    def pre_activation(self, a: np.ndarray, wb: np.ndarray | None = None) -> np.ndarray:
        if a.shape[-1] != self.fan_in:
            raise ValueError(f"input width {a.shape[-1]} != layer fan-in {self.fan_in}")
        if wb is None:
            wb = self.weights.binary().astype(np.float32)
        return a.astype(np.float32, copy=False) @ wb

    def forward(self, a: np.ndarray, train: bool = False) -> np.ndarray:
        wb = self.weights.binary().astype(np.float32)
        z = self.pre_activation(a, wb).astype(np.float64)
        if not train:
            if self.output:
                return self.gamma * (z - self.running_mean) / np.sqrt(self.running_var + BN_EPS) + self.beta
            return binarize_activation(z, self.threshold).astype(np.float32)
        mu = z.mean(axis=0)
        var = z.var(axis=0)
        n = z.shape[0]
        self.running_mean = (1 - BN_MOMENTUM) * self.running_mean + BN_MOMENTUM * mu
        self.running_var = (1 - BN_MOMENTUM) * self.running_var + BN_MOMENTUM * var * n / max(n - 1, 1)
        std = np.sqrt(var + BN_EPS)
        z_hat = (z - mu) / std
        if self.output:
            out = self.gamma * z_hat + self.beta
            self._cache = (a, wb, z_hat, std, None)
            return out
        y = z_hat + self.beta
        self._cache = (a, wb, z_hat, std, y)
        return np.where(y >= 0, 1.0, -1.0).astype(np.float32)

    def backward(self, d_out: np.ndarray) -> tuple[np.ndarray, dict]:
        if self._cache is None:
            raise RuntimeError("backward called before a training forward pass")
        a, wb, z_hat, std, y = self._cache
        grads = {}
        if self.output:
            grads["gamma"] = (d_out * z_hat).sum(axis=0)
            grads["beta"] = d_out.sum(axis=0)
            d_hat = d_out * self.gamma
        else:
            d_hat = d_out * (np.abs(y) <= 1.0)
            grads["beta"] = d_hat.sum(axis=0)
        dz = (d_hat - d_hat.mean(axis=0) - z_hat * (d_hat * z_hat).mean(axis=0)) / std
        dz32 = dz.astype(np.float32)
        dw = (a.astype(np.float32, copy=False).T @ dz32).astype(np.float64)
        dw[np.abs(self.weights.real()) > self.w_clip] = 0.0
        grads["w"] = dw
        da = dz32 @ wb.T
        return da, grads


def softmax_cross_entropy(scores: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean loss and its gradient with respect to ``scores``."""
    s = scores - scores.max(axis=1, keepdims=True)
    log_p = s - np.log(np.exp(s).sum(axis=1, keepdims=True))
    n = len(labels)
    loss = -float(log_p[np.arange(n), labels].mean())
    grad = np.exp(log_p)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


class BnnModel:
    def __init__(self, layers: list[BnnLinear]):
        if not layers or not layers[-1].output:
            raise ValueError("the last layer must be an output layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.fan_out != nxt.fan_in:
                raise ValueError(f"layer widths do not chain: {prev.fan_out} -> {nxt.fan_in}")
        self.layers = layers

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        a = x
        for layer in self.layers:
            a = layer.forward(a, train)
        return a

    def predict(self, x: np.ndarray, batch: int = 2000) -> np.ndarray:
        return np.concatenate([self.forward(x[i:i + batch]).argmax(axis=1) for i in range(0, len(x), batch)])


def backward_ste(model: BnnModel, d_scores: np.ndarray) -> list[dict]:
    """Per-layer gradient dicts (``w``, ``beta`` and, for the output, ``gamma``)."""
    grads = []
    d = d_scores
    for layer in reversed(model.layers):
        d, g = layer.backward(d)
        grads.append(g)
    return grads[::-1]
