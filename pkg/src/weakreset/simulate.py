"""Pulse-by-pulse trajectories of device ensembles and their CSV form."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .bank import DeviceBank
from .device import CycleNoiseParams
from .rng import Purpose, SeedPolicy
from .variability import D2DConfig, sample_devices

TRAJECTORY_HEADER = ["device_id", "pulse", "t", "w_mean", "w_rtn", "w_pink", "w_total", "resistance_ohm"]


class TrajectoryFormatError(ValueError):
    pass


@dataclass
class Trajectories:
    """Readings taken after every pulse; arrays are ``n_devices x n_pulses``."""

    t: np.ndarray
    w_mean: np.ndarray
    w_rtn: np.ndarray
    w_pink: np.ndarray
    w_total: np.ndarray
    resistance: np.ndarray

    @property
    def n_devices(self) -> int:
        return self.w_total.shape[0]

    @property
    def n_pulses(self) -> int:
        return self.w_total.shape[1]


def make_bank(n_devices: int, seed: int, config: D2DConfig | None = None,
              noise: CycleNoiseParams | None = None) -> DeviceBank:
    seeds = SeedPolicy(seed)
    idx = np.arange(n_devices)
    params = sample_devices(config or D2DConfig(), idx, seeds)
    return DeviceBank(params, seeds.keys(idx, Purpose.NOISE), noise or CycleNoiseParams())


def simulate_ensemble(n_devices: int, n_pulses: int, seed: int, config: D2DConfig | None = None,
                      noise: CycleNoiseParams | None = None, pulses_per_step: int = 1) -> Trajectories:
    """Pulse every device ``n_pulses`` times (``pulses_per_step`` at a time) and record each reading."""
    if n_devices < 1 or n_pulses < 1:
        raise ValueError("need at least one device and one pulse")
    bank = make_bank(n_devices, seed, config, noise)
    idx = np.arange(n_devices)
    shape = (n_devices, n_pulses)
    t = np.empty(shape, dtype=np.int64)
    wr = np.empty(shape)
    wp = np.empty(shape)
    for step in range(n_pulses):
        bank.apply(idx, pulses_per_step)
        t[:, step] = bank.t
        wr[:, step] = bank.w_rtn()
        wp[:, step] = bank.w_pink
    p = bank.params
    tf = t.astype(np.float64)
    m1, c1, ts, m2 = (v[:, None] for v in (p.m1, p.c1, p.t_star, p.m2))
    wm = np.where(tf < ts, m1 * tf + c1, (m1 * ts + c1) + m2 * (tf - ts))
    wt = (wm + wr) + wp
    return Trajectories(t, wm, wr, wp, wt, p.r0[:, None] * np.exp(wt))


def write_trajectories(traj: Trajectories, path) -> None:
    n_dev, n_p = traj.w_total.shape
    dev = np.repeat(np.arange(n_dev), n_p)
    pulse = np.tile(np.arange(1, n_p + 1), n_dev)
    cols = [traj.t, traj.w_mean, traj.w_rtn, traj.w_pink, traj.w_total, traj.resistance]
    table = np.column_stack([dev, pulse] + [c.ravel() for c in cols])
    fmt = ["%d", "%d", "%d"] + ["%.17g"] * 5
    with open(path, "w") as fh:
        fh.write(",".join(TRAJECTORY_HEADER) + "\n")
        np.savetxt(fh, table, fmt=fmt, delimiter=",")


def read_trajectories(path) -> Trajectories:
    """Parse a trajectory CSV; every device must carry the same pulse axis."""
    rows: dict[int, list] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRAJECTORY_HEADER:
            raise TrajectoryFormatError(f"{path}: line 1: expected header {','.join(TRAJECTORY_HEADER)}")
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(TRAJECTORY_HEADER):
                raise TrajectoryFormatError(f"{path}: line {lineno}: expected 8 fields, got {len(rec)}")
            try:
                dev, pulse, t = int(rec[0]), int(rec[1]), int(rec[2])
                vals = [float(v) for v in rec[3:]]
            except ValueError as exc:
                raise TrajectoryFormatError(f"{path}: line {lineno}: {exc}") from None
            if not all(np.isfinite(vals)):
                raise TrajectoryFormatError(f"{path}: line {lineno}: non-finite value")
            rows.setdefault(dev, []).append((pulse, t, *vals))
    if not rows:
        raise TrajectoryFormatError(f"{path}: no data rows")
    devices = sorted(rows)
    lengths = {len(rows[d]) for d in devices}
    if len(lengths) != 1:
        raise TrajectoryFormatError(f"{path}: devices have unequal pulse counts {sorted(lengths)}")
    data = np.array([sorted(rows[d]) for d in devices])
    return Trajectories(
        t=data[:, :, 1].astype(np.int64),
        w_mean=data[:, :, 2],
        w_rtn=data[:, :, 3],
        w_pink=data[:, :, 4],
        w_total=data[:, :, 5],
        resistance=data[:, :, 6],
    )
