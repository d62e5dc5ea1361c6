"""Counter-based random streams, one per simulated device.

Every device owns a 64-bit key derived from ``(master_seed, device_index,
purpose)``. Draw ``k`` of a stream is a SplitMix64 hash of ``key + k*gamma``,
so a device's draws never depend on how many other devices exist or in which
order they are updated. The same arithmetic serves a single device (scalar
API) and whole banks of devices (vectorized API), bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import _kernels

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)
_PURPOSE_SALT = np.uint64(0xD1B54A32D192ED03)
_S30, _S27, _S31 = (np.uint64(s) for s in (30, 27, 31))


class Purpose(IntEnum):
    """Tags separating the independent streams owned by one device."""

    D2D = 1
    NOISE = 2
    INIT = 3


def mix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer on a uint64 array (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> _S30)) * _MUL1
    z = (z ^ (z >> _S27)) * _MUL2
    return z ^ (z >> _S31)


def stream_keys(master_seed: int, device_index, purpose: int) -> np.ndarray:
    """Derive stream keys for one or many device indices."""
    seed = np.array([master_seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    tag = np.array([int(purpose)], dtype=np.uint64)
    base = mix64(mix64(seed) ^ (tag * _PURPOSE_SALT))
    idx = np.atleast_1d(np.asarray(device_index)).astype(np.uint64)
    return mix64(base + idx * _GAMMA)


def uniforms(keys: np.ndarray, counters: np.ndarray) -> np.ndarray:
    """Uniform draws in the open interval (0, 1).

    ``keys`` and ``counters`` broadcast against each other; counter ``c`` of
    key ``k`` always yields the same value.
    """
    k, c = np.broadcast_arrays(np.asarray(keys, dtype=np.uint64), np.asarray(counters, dtype=np.int64))
    return _kernels.uniforms_flat(k.ravel(), c.ravel()).reshape(k.shape)


def normals(keys: np.ndarray, counters: np.ndarray) -> np.ndarray:
    """Standard normal draws by Box-Muller; the draw at counter ``c`` consumes ``c`` and ``c+1``."""
    k, c = np.broadcast_arrays(np.asarray(keys, dtype=np.uint64), np.asarray(counters, dtype=np.int64))
    return _kernels.normals_flat(k.ravel(), c.ravel()).reshape(k.shape)


@dataclass
class DeviceStream:
    """Private random stream of one device.

    Exposes ``random()`` and ``standard_normal(k)`` so it can stand in for a
    :class:`numpy.random.Generator` wherever the device model draws noise.
    """

    key: int
    counter: int = 0

    def _key(self) -> np.ndarray:
        return np.array([self.key], dtype=np.uint64)

    def random(self) -> float:
        u = uniforms(self._key(), np.array([self.counter]))
        self.counter += 1
        return float(u[0])

    def standard_normal(self, size: int) -> np.ndarray:
        c = self.counter + 2 * np.arange(size, dtype=np.int64)
        z = normals(np.full(size, self.key, dtype=np.uint64), c)
        self.counter += 2 * size
        return z


@dataclass(frozen=True)
class SeedPolicy:
    """Maps ``(device_index, purpose)`` to independent streams under one master seed."""

    master_seed: int

    def keys(self, device_index, purpose: int) -> np.ndarray:
        return stream_keys(self.master_seed, device_index, purpose)

    def stream(self, device_index: int, purpose: int = Purpose.NOISE) -> DeviceStream:
        return DeviceStream(int(self.keys(device_index, purpose)[0]))

    def generator(self, *tags: int) -> np.random.Generator:
        """A numpy Generator for bulk work that is not per-device (data shuffling, init)."""
        return np.random.default_rng([self.master_seed & 0xFFFFFFFFFFFFFFFF, *tags])
