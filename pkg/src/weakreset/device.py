"""Weak-RESET dynamics of a single HfOx RRAM cell.

The cell is described by a dimensionless tunnelling gap ``w`` that grows
with the number of weak-RESET pulses ``t``:

    w = w_mean(t) + a*X + alpha * sum_r b_r * omega_r

where ``w_mean`` is piecewise linear in ``t``, ``X`` is a two-state Markov
chain (random telegraph noise) and the last term is FIR-filtered white
noise with a 1/f spectrum. Resistance follows ``R = R0 * exp(w)``.

Only ``w`` is stored; the physical gap length never enters a computation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import _kernels
from .rng import DeviceStream

W_CAP = 50.0


class GapOverflowError(ValueError):
    """The gap variable left the physical range (model divergence)."""


@dataclass(frozen=True)
class MeanModelParams:
    m1: float
    c1: float
    t_star: float
    m2: float

    def __post_init__(self):
        if self.m1 < 0 or self.m2 < 0:
            raise ValueError(f"slopes must be nonnegative, got m1={self.m1}, m2={self.m2}")
        if not self.t_star > 0:
            raise ValueError(f"t_star must be positive, got {self.t_star}")


@dataclass(frozen=True)
class CycleNoiseParams:
    """Ensemble-wide noise constants (cycle-to-cycle variation).

    ``rtn_second_regime_only`` silences the telegraph term while ``t < t_star``.
    """

    p_high: float = 0.0008
    p_low: float = 0.002
    alpha: float = 0.025
    pole: int = 15
    rtn_second_regime_only: bool = False

    def __post_init__(self):
        for name in ("p_high", "p_low"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if int(self.pole) != self.pole or self.pole < 1:
            raise ValueError(f"pole must be a positive integer, got {self.pole}")

    @property
    def rtn_enabled(self) -> bool:
        return self.p_high + self.p_low > 0

    @property
    def pink_enabled(self) -> bool:
        return self.alpha > 0

    @property
    def buffer_len(self) -> int:
        return int(self.pole) + 1

    def silenced(self) -> CycleNoiseParams:
        """Same constants with every fluctuation switched off."""
        return replace(self, p_high=0.0, p_low=0.0, alpha=0.0)


@dataclass(frozen=True)
class DeviceParams:
    mean: MeanModelParams
    rtn_amplitude_a: float
    r0: float

    def __post_init__(self):
        if not self.r0 > 0:
            raise ValueError(f"r0 must be positive, got {self.r0}")
        if self.rtn_amplitude_a < 0:
            raise ValueError(f"rtn amplitude must be >= 0, got {self.rtn_amplitude_a}")


@dataclass
class DeviceState:
    """Mutable per-cell state. ``pink_buffer`` is ordered newest first."""

    t: int
    x: int
    pink_buffer: np.ndarray
    rng: DeviceStream = field(repr=False)

    def copy(self) -> DeviceState:
        return DeviceState(self.t, self.x, self.pink_buffer.copy(), replace(self.rng))


def initial_state(noise: CycleNoiseParams, rng: DeviceStream) -> DeviceState:
    """Fresh cell: no pulses applied, telegraph variable low.

    The pink buffer is filled with ``pole + 1`` fresh Gaussian values, or
    zeros when pink noise is disabled (no draws are consumed then).
    """
    rng = replace(rng)
    if noise.pink_enabled:
        buf = rng.standard_normal(noise.buffer_len)[::-1].copy()
    else:
        buf = np.zeros(noise.buffer_len)
    return DeviceState(t=0, x=0, pink_buffer=buf, rng=rng)


def w_mean(p: MeanModelParams, t) -> np.ndarray | float:
    """Piecewise-linear mean gap after ``t`` pulses.

    The second branch ``m2*t + (m1 - m2)*t_star + c1`` is evaluated as
    ``(m1*t_star + c1) + m2*(t - t_star)`` so both branches give the same
    bits at ``t == t_star``.
    """
    t = np.asarray(t, dtype=np.float64)
    knee = p.m1 * p.t_star + p.c1
    out = np.where(t < p.t_star, p.m1 * t + p.c1, knee + p.m2 * (t - p.t_star))
    return float(out) if out.ndim == 0 else out


def transition_matrix(p: CycleNoiseParams) -> np.ndarray:
    return np.array([[1.0 - p.p_high, p.p_high], [p.p_low, 1.0 - p.p_low]])


def transition_power(p: CycleNoiseParams, n: int) -> np.ndarray:
    """``T**n`` by repeated squaring."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    result = np.eye(2)
    base = transition_matrix(p)
    while n:
        if n & 1:
            result = result @ base
        base = base @ base
        n >>= 1
    return result


def prob_high_after(x, n, p_high: float, p_low: float) -> np.ndarray:
    """Row ``x`` of ``T**n``, column 1, in closed form (vectorized over ``x`` and ``n``).

    For a two-state chain ``T**n = Pi + lam**n (I - Pi)`` with
    ``lam = 1 - p_high - p_low``.
    """
    xb, nb_ = np.broadcast_arrays(np.asarray(x, dtype=np.int64), np.asarray(n, dtype=np.int64))
    out = _kernels.prob_high_flat(xb.ravel(), nb_.ravel(), float(p_high), float(p_low)).reshape(xb.shape)
    return out if out.ndim else float(out)


def rtn_advance(x: int, n: int, p: CycleNoiseParams, rng) -> int:
    """Telegraph state after ``n`` pulses, sampled exactly from ``T**n``.

    Consumes one uniform draw when ``n > 0`` and the chain can move.
    """
    if n == 0 or not p.rtn_enabled:
        return int(x)
    u = rng.random()
    return int(u < prob_high_after(x, n, p.p_high, p.p_low))


def w_rtn(x: int, a: float) -> float:
    return a * x


@lru_cache(maxsize=None)
def _pink_coefficients(pole: int, beta: float) -> tuple[float, ...]:
    b = [1.0]
    for k in range(1, pole + 1):
        b.append(b[-1] * (k - 1 + beta / 2) / k)
    return tuple(b)


def pink_coefficients(pole: int, beta: float = 1.0) -> np.ndarray:
    """Impulse response of the truncated 1/f**beta fractional-differencing filter."""
    if pole < 1:
        raise ValueError("pole must be >= 1")
    return np.array(_pink_coefficients(int(pole), float(beta)))


def pink_sum(buffers: np.ndarray, b: np.ndarray, alpha: float) -> np.ndarray:
    """``alpha * sum_r b_r * buffers[:, r]`` with a fixed accumulation order.

    Shared by the scalar and the vectorized paths so both give identical bits.
    """
    buffers = np.ascontiguousarray(np.atleast_2d(buffers), dtype=np.float64)
    return _kernels.pink_newest_first(buffers, np.asarray(b, dtype=np.float64), float(alpha))


def pink_advance(buffer: np.ndarray, n: int, p: CycleNoiseParams, rng) -> tuple[np.ndarray, float]:
    """Shift ``min(n, pole+1)`` fresh Gaussian values into the buffer and evaluate the filter."""
    buffer = np.asarray(buffer, dtype=np.float64)
    if buffer.shape != (p.buffer_len,):
        raise ValueError(f"buffer must have length {p.buffer_len}, got {buffer.shape}")
    if n > 0 and p.pink_enabled:
        k = min(n, p.buffer_len)
        fresh = rng.standard_normal(k)
        buffer = np.concatenate([fresh[::-1], buffer[: p.buffer_len - k]])
    w = pink_sum(buffer, pink_coefficients(p.pole), p.alpha)[0] if p.pink_enabled else 0.0
    return buffer, float(w)


def compose_w(state: DeviceState, params: DeviceParams, noise: CycleNoiseParams) -> float:
    wm = w_mean(params.mean, state.t)
    wr = w_rtn(state.x, params.rtn_amplitude_a)
    if noise.rtn_second_regime_only and state.t < params.mean.t_star:
        wr = 0.0
    wp = float(pink_sum(state.pink_buffer, pink_coefficients(noise.pole), noise.alpha)[0])
    return (wm + wr) + wp


def apply_pulses(state: DeviceState, params: DeviceParams, noise: CycleNoiseParams, n: int) -> DeviceState:
    """Apply ``n`` weak-RESET pulses; returns a new state and leaves ``state`` untouched.

    The telegraph draw comes before the pink draws on the device stream.
    """
    if n < 0:
        raise ValueError(f"pulse count must be nonnegative, got {n}")
    new = state.copy()
    if n == 0:
        return new
    new.t = state.t + int(n)
    new.x = rtn_advance(state.x, n, noise, new.rng)
    new.pink_buffer, _ = pink_advance(state.pink_buffer, n, noise, new.rng)
    return new


def resistance(params: DeviceParams, w, w_cap: float = W_CAP):
    """``R0 * exp(w)`` in ohms; gaps above ``w_cap`` raise :class:`GapOverflowError`."""
    w_arr = np.asarray(w, dtype=np.float64)
    if np.any(w_arr > w_cap) or not np.all(np.isfinite(w_arr)):
        raise GapOverflowError(f"gap out of physical range: max w = {np.max(w_arr)} (cap {w_cap})")
    out = params.r0 * np.exp(w_arr)
    return float(out) if out.ndim == 0 else out


@dataclass
class Device:
    """A cell bundled with its parameters, for convenience in scripts and tests."""

    params: DeviceParams
    state: DeviceState
    noise: CycleNoiseParams = field(default_factory=CycleNoiseParams)

    @classmethod
    def fresh(cls, params: DeviceParams, noise: CycleNoiseParams, rng: DeviceStream) -> Device:
        return cls(params, initial_state(noise, rng), noise)

    def pulse(self, n: int = 1) -> float:
        self.state = apply_pulses(self.state, self.params, self.noise, n)
        return self.w

    @property
    def w(self) -> float:
        return compose_w(self.state, self.params, self.noise)

    @property
    def resistance(self) -> float:
        return resistance(self.params, self.w)

    def components(self) -> tuple[float, float, float]:
        wm = float(w_mean(self.params.mean, self.state.t))
        wr = w_rtn(self.state.x, self.params.rtn_amplitude_a)
        if self.noise.rtn_second_regime_only and self.state.t < self.params.mean.t_star:
            wr = 0.0
        wp = float(pink_sum(self.state.pink_buffer, pink_coefficients(self.noise.pole), self.noise.alpha)[0])
        return wm, wr, wp


def stationary_high(p: CycleNoiseParams) -> float:
    s = p.p_high + p.p_low
    return math.nan if s == 0 else p.p_high / s
