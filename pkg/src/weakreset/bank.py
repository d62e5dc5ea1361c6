"""Vectorized state of many independent devices.

A :class:`DeviceBank` holds the same per-device quantities as
:class:`~weakreset.device.DeviceState`, stored column-wise. The pink-noise
buffer is a ring: slot ``head`` is the newest value. Updates touch only the
pulsed devices and draw from each device's private counter stream, in the
same order as :func:`~weakreset.device.apply_pulses`, so a bank row is
bit-identical to a scalar device built from the same key.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .device import W_CAP, CycleNoiseParams, DeviceState, GapOverflowError, pink_coefficients
from .rng import DeviceStream, normals
from .variability import ParamArrays


class DeviceBank:
    def __init__(self, params: ParamArrays, keys: np.ndarray, noise: CycleNoiseParams):
        n = len(params)
        keys = np.ascontiguousarray(keys, dtype=np.uint64)
        if keys.shape != (n,):
            raise ValueError(f"need one key per device: {keys.shape} vs {n}")
        self.params = params
        self.noise = noise
        self.keys = keys
        self.b = pink_coefficients(noise.pole)
        L = noise.buffer_len
        self.t = np.zeros(n, dtype=np.int64)
        self.x = np.zeros(n, dtype=np.int64)
        self.counter = np.zeros(n, dtype=np.int64)
        self.head = np.zeros(n, dtype=np.int64)
        self.ring = np.zeros((n, L))
        self.w_pink = np.zeros(n)
        if noise.pink_enabled:
            # same draws as device.initial_state: fresh values in pulse order
            j = np.arange(L, dtype=np.int64)
            self.ring[:, :] = normals(keys[:, None], 2 * j[None, :])
            self.head[:] = L - 1
            self.counter[:] = 2 * L
            self.w_pink = _kernels.pink_rows(self.ring, self.head, np.arange(n), self.b, noise.alpha)

    def __len__(self):
        return len(self.t)

    def _newest_first(self, idx: np.ndarray) -> np.ndarray:
        L = self.noise.buffer_len
        cols = (self.head[idx, None] - np.arange(L)) % L
        return np.take_along_axis(self.ring[idx], cols, axis=1)

    def apply(self, idx, n) -> None:
        """Apply ``n[i]`` pulses to device ``idx[i]``. Indices must be unique."""
        idx = np.ascontiguousarray(idx, dtype=np.int64)
        n = np.ascontiguousarray(np.broadcast_to(np.asarray(n, dtype=np.int64), idx.shape))
        if np.any(n < 0):
            raise ValueError("pulse counts must be nonnegative")
        if idx.size == 0:
            return
        noise = self.noise
        _kernels.bank_apply(
            idx, n, self.keys, self.counter, self.t, self.x, self.ring, self.head, self.w_pink,
            self.b, float(noise.p_high), float(noise.p_low), float(noise.alpha),
            noise.rtn_enabled, noise.pink_enabled,
        )

    def w_mean(self, idx=slice(None)) -> np.ndarray:
        p = self.params
        t = self.t[idx].astype(np.float64)
        m1, c1, ts, m2 = p.m1[idx], p.c1[idx], p.t_star[idx], p.m2[idx]
        return np.where(t < ts, m1 * t + c1, (m1 * ts + c1) + m2 * (t - ts))

    def w_rtn(self, idx=slice(None)) -> np.ndarray:
        wr = self.params.a[idx] * self.x[idx]
        if self.noise.rtn_second_regime_only:
            wr = np.where(self.t[idx] < self.params.t_star[idx], 0.0, wr)
        return wr

    def w(self, idx=slice(None)) -> np.ndarray:
        return (self.w_mean(idx) + self.w_rtn(idx)) + self.w_pink[idx]

    def resistance(self, idx=slice(None), w_cap: float = W_CAP) -> np.ndarray:
        w = self.w(idx)
        if np.any(w > w_cap) or not np.all(np.isfinite(w)):
            raise GapOverflowError(f"gap out of physical range: max w = {np.max(w)} (cap {w_cap})")
        return self.params.r0[idx] * np.exp(w)

    def state(self, i: int) -> DeviceState:
        """Scalar snapshot of device ``i``."""
        return DeviceState(
            t=int(self.t[i]),
            x=int(self.x[i]),
            pink_buffer=self._newest_first(np.array([i]))[0].copy(),
            rng=DeviceStream(int(self.keys[i]), int(self.counter[i])),
        )
