"""Adaptive moment estimation and pulse quantization of its updates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class MomentState:
    """First/second moment accumulators for one parameter tensor."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, shape, **kw) -> MomentState:
        return cls(np.zeros(shape), np.zeros(shape), **kw)


def moment_update(state: MomentState, grad: np.ndarray, lr: float) -> np.ndarray:
    """Advance ``state`` in place and return the bias-corrected step ``-lr * m_hat / (sqrt(v_hat) + eps)``."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grad
    state.v *= b2
    state.v += (1.0 - b2) * (grad * grad)
    m_hat = state.m / (1.0 - b1**state.step)
    v_hat = state.v / (1.0 - b2**state.step)
    return -lr * m_hat / (np.sqrt(v_hat) + state.eps)


def quantize_update(delta_w, pulse_gain: float):
    """Signed pulse count ``sign(dW) * floor(|dW| * gain)``; magnitudes round toward zero."""
    if not pulse_gain > 0:
        raise ValueError(f"pulse_gain must be positive, got {pulse_gain}")
    d = np.asarray(delta_w, dtype=np.float64)
    n = (np.sign(d) * np.floor(np.abs(d) * pulse_gain)).astype(np.int64)
    return int(n) if n.ndim == 0 else n


@dataclass
class Adam:
    """Moment states keyed by parameter name."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    states: dict = field(default_factory=dict)

    def step(self, name: str, grad: np.ndarray, lr: float | None = None) -> np.ndarray:
        st = self.states.get(name)
        if st is None:
            st = self.states[name] = MomentState.zeros(grad.shape, beta1=self.beta1, beta2=self.beta2, eps=self.eps)
        return moment_update(st, grad, self.lr if lr is None else lr)
