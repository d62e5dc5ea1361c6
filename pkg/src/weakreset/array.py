"""2T2R differential synapses and crossbar arrays of them.

A synapse stores one hidden real weight as the log-ratio of two device
resistances, ``log10(R_BL / R_BLb)``. Its binary weight is what a sense
amplifier reads: +1 when ``R_BL >= R_BLb``. Weak-RESET pulses only ever
increase a device's gap, so positive updates go to BL and negative updates
to BLb.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .bank import DeviceBank
from .device import CycleNoiseParams, Device, DeviceParams, apply_pulses
from .rng import Purpose, SeedPolicy
from .variability import D2DConfig, ParamArrays, sample_devices

BL, BLB = 0, 1


@dataclass
class SynapsePair:
    bl: Device
    blb: Device

    @classmethod
    def fresh(cls, bl: DeviceParams, blb: DeviceParams, noise: CycleNoiseParams, seeds: SeedPolicy, index: int = 0):
        """New pair; BL and BLb use device indices ``2*index`` and ``2*index + 1``."""
        return cls(
            Device.fresh(bl, noise, seeds.stream(2 * index, Purpose.NOISE)),
            Device.fresh(blb, noise, seeds.stream(2 * index + 1, Purpose.NOISE)),
        )

    def swapped(self) -> SynapsePair:
        return SynapsePair(self.blb, self.bl)


def real_weight(pair: SynapsePair) -> float:
    return float(np.log10(pair.bl.resistance) - np.log10(pair.blb.resistance))


def binary_weight(pair: SynapsePair) -> int:
    return 1 if pair.bl.resistance >= pair.blb.resistance else -1


def apply_update(pair: SynapsePair, signed_pulses: int, noise: CycleNoiseParams | None = None) -> SynapsePair:
    """Route ``signed_pulses`` to BL (positive) or BLb (negative); returns a new pair."""
    signed_pulses = int(signed_pulses)
    bl, blb = pair.bl, pair.blb
    if signed_pulses > 0:
        nz = noise or bl.noise
        bl = Device(bl.params, apply_pulses(bl.state, bl.params, nz, signed_pulses), nz)
    elif signed_pulses < 0:
        nz = noise or blb.noise
        blb = Device(blb.params, apply_pulses(blb.state, blb.params, nz, -signed_pulses), nz)
    return SynapsePair(bl, blb)


@dataclass(frozen=True)
class PulseCommand:
    row: int
    col: int
    signed_pulses: int


class SynapseArray:
    """``rows x cols`` grid of 2T2R pairs backed by one :class:`DeviceBank`.

    Device ``((index_offset + row*cols + col) * 2 + side)`` of the seed policy
    backs cell ``(row, col)``; ``side`` 0 is BL and 1 is BLb.
    """

    def __init__(
        self,
        rows: int,
        cols: int,
        config: D2DConfig | None = None,
        noise: CycleNoiseParams | None = None,
        seeds: SeedPolicy | None = None,
        index_offset: int = 0,
        params: ParamArrays | None = None,
    ):
        if rows < 1 or cols < 1:
            raise ValueError(f"array shape must be positive, got {rows}x{cols}")
        self.rows, self.cols = int(rows), int(cols)
        self.noise = noise or CycleNoiseParams()
        self.seeds = seeds or SeedPolicy(0)
        self.index_offset = int(index_offset)
        self.device_index = self.index_offset * 2 + np.arange(2 * rows * cols, dtype=np.int64)
        if params is None:
            params = sample_devices(config or D2DConfig(), self.device_index, self.seeds)
        self.bank = DeviceBank(params, self.seeds.keys(self.device_index, Purpose.NOISE), self.noise)
        self._r = self.bank.resistance()
        self._log10_r = np.log10(self._r)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def _split(self, per_device: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        v = per_device.reshape(self.rows, self.cols, 2)
        return v[..., BL], v[..., BLB]

    def resistances(self) -> tuple[np.ndarray, np.ndarray]:
        return self._split(self._r)

    def real_weights(self) -> np.ndarray:
        lbl, lblb = self._split(self._log10_r)
        return lbl - lblb

    def binary_weights(self) -> np.ndarray:
        r_bl, r_blb = self.resistances()
        return np.where(r_bl >= r_blb, 1, -1).astype(np.int8)

    def apply_updates(self, signed_pulses: np.ndarray) -> int:
        """Apply a full ``rows x cols`` matrix of signed pulse counts; returns pulses issued."""
        signed_pulses = np.asarray(signed_pulses, dtype=np.int64)
        if signed_pulses.shape != self.shape:
            raise ValueError(f"update shape {signed_pulses.shape} does not match array {self.shape}")
        flat = signed_pulses.ravel()
        cells = np.flatnonzero(flat)
        if cells.size == 0:
            return 0
        s = flat[cells]
        dev = 2 * cells + (s < 0)
        n = np.abs(s)
        self.bank.apply(dev, n)
        self._r[dev] = self.bank.resistance(dev)
        self._log10_r[dev] = np.log10(self._r[dev])
        return int(n.sum())

    def batch_update(self, commands: Iterable[PulseCommand]) -> int:
        """Apply a set of commands; at most one per cell, so order does not matter."""
        grid = np.zeros(self.shape, dtype=np.int64)
        seen = set()
        for c in commands:
            key = (c.row, c.col)
            if key in seen:
                raise ValueError(f"duplicate command for cell {key}")
            if not (0 <= c.row < self.rows and 0 <= c.col < self.cols):
                raise IndexError(f"cell {key} outside {self.shape} array")
            seen.add(key)
            grid[key] = c.signed_pulses
        return self.apply_updates(grid)

    def pair(self, row: int, col: int) -> SynapsePair:
        """Scalar snapshot of one cell; evolving it reproduces the array bit for bit."""
        devices = []
        for side in (BL, BLB):
            i = 2 * (row * self.cols + col) + side
            devices.append(Device(self.bank.params.device(i), self.bank.state(i), self.noise))
        return SynapsePair(*devices)

    def total_pulses(self) -> int:
        return int(self.bank.t.sum())

    def write_snapshot(self, path) -> None:
        """CSV with one line per device: ``row,col,side,t,x,w_total,resistance_ohm,real_weight,binary_weight``."""
        w = self.bank.w()
        r = self.bank.resistance()
        rw = self.real_weights()
        bw = self.binary_weights()
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["row", "col", "side", "t", "x", "w_total", "resistance_ohm", "real_weight", "binary_weight"])
            for i in range(len(self.bank)):
                cell, side = divmod(i, 2)
                row, col = divmod(cell, self.cols)
                out.writerow([
                    row, col, "BL" if side == BL else "BLb", int(self.bank.t[i]), int(self.bank.x[i]),
                    repr(float(w[i])), repr(float(r[i])), repr(float(rw[row, col])), int(bw[row, col]),
                ])

