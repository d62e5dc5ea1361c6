"""Device-to-device variability: per-device parameter sampling.

Densities follow the forms used for the fitted 64-device population::

    uniform(x; a1, a2)     = 1/(a2 - a1),                 a1 <= x <= a2
    exponential(x; x0, l)  = exp(-(x - x0)/l) / l,        x >= x0
    gaussian(x; mu, s)     = exp(-((x - mu)/s)**2 / 2) / (s sqrt(2 pi))
    lognormal(x; s, scale) = exp(-(log(x/scale)/s)**2 / 2) / (s x sqrt(2 pi))

Every sampler is an inverse CDF applied to one uniform draw, so a device's
parameters are a pure function of ``(master_seed, device_index)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.special import ndtr, ndtri

from .device import DeviceParams, MeanModelParams
from .rng import Purpose, SeedPolicy, uniforms

KINDS = ("uniform", "exponential", "gaussian", "lognormal", "constant")
_NPARAMS = {"uniform": 2, "exponential": 2, "gaussian": 2, "lognormal": 2, "constant": 1}


class ConfigError(ValueError):
    """Invalid distribution or configuration parameters."""


@dataclass(frozen=True)
class DistributionSpec:
    """A named density and its parameters.

    ``lower`` truncates the density from below (exclusive); sampling then
    stays exact by rescaling the uniform draw onto ``(F(lower), 1)``.
    """

    kind: str
    params: tuple[float, ...]
    lower: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(v) for v in self.params))
        if self.kind not in KINDS:
            raise ConfigError(f"unknown distribution kind {self.kind!r}; expected one of {KINDS}")
        if len(self.params) != _NPARAMS[self.kind]:
            raise ConfigError(f"{self.kind} takes {_NPARAMS[self.kind]} parameters, got {len(self.params)}")
        p = self.params
        if self.kind == "uniform" and not p[0] <= p[1]:
            raise ConfigError(f"uniform needs a1 <= a2, got {p}")
        if self.kind == "exponential" and not p[1] > 0:
            raise ConfigError(f"exponential needs lambda > 0, got {p}")
        if self.kind == "gaussian" and not p[1] > 0:
            raise ConfigError(f"gaussian needs sigma > 0, got {p}")
        if self.kind == "lognormal" and not (p[0] > 0 and p[1] > 0):
            raise ConfigError(f"lognormal needs s > 0 and scale > 0, got {p}")
        if not all(math.isfinite(v) for v in p):
            raise ConfigError(f"non-finite parameters {p}")

    @classmethod
    def uniform(cls, a1, a2):
        return cls("uniform", (a1, a2))

    @classmethod
    def exponential(cls, x0, lam):
        return cls("exponential", (x0, lam))

    @classmethod
    def gaussian(cls, mu, sigma, lower=None):
        return cls("gaussian", (mu, sigma), lower)

    @classmethod
    def lognormal(cls, s, scale):
        return cls("lognormal", (s, scale))

    @classmethod
    def constant(cls, value):
        return cls("constant", (value,))

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        p = self.params
        if self.kind == "uniform":
            if p[0] == p[1]:
                return (x >= p[0]).astype(np.float64)
            return np.clip((x - p[0]) / (p[1] - p[0]), 0.0, 1.0)
        if self.kind == "exponential":
            return np.where(x < p[0], 0.0, -np.expm1(-(x - p[0]) / p[1]))
        if self.kind == "gaussian":
            return ndtr((x - p[0]) / p[1])
        if self.kind == "lognormal":
            with np.errstate(divide="ignore"):
                return np.where(x <= 0, 0.0, ndtr(np.log(np.maximum(x, 1e-300) / p[1]) / p[0]))
        return (x >= p[0]).astype(np.float64)

    def ppf(self, u):
        """Inverse CDF for ``u`` in (0, 1), honouring ``lower``."""
        u = np.asarray(u, dtype=np.float64)
        if self.lower is not None:
            f_lo = float(self.cdf(self.lower))
            u = f_lo + u * (1.0 - f_lo)
        p = self.params
        if self.kind == "uniform":
            return p[0] + (p[1] - p[0]) * u
        if self.kind == "exponential":
            return p[0] - p[1] * np.log1p(-u)
        if self.kind == "gaussian":
            return p[0] + p[1] * ndtri(u)
        if self.kind == "lognormal":
            return p[1] * np.exp(p[0] * ndtri(u))
        return np.full_like(u, p[0])

    def median(self) -> float:
        if self.lower is not None:
            return float(self.ppf(0.5))
        p = self.params
        if self.kind == "uniform":
            return 0.5 * (p[0] + p[1])
        if self.kind == "exponential":
            return p[0] + p[1] * math.log(2.0)
        if self.kind == "lognormal":
            return p[1]
        return p[0]

    def point_mass(self) -> DistributionSpec:
        return DistributionSpec.constant(self.median())

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "params": list(self.params)}
        if self.lower is not None:
            d["lower"] = self.lower
        return d


def sample(spec: DistributionSpec, rng, size=None):
    """Draw from ``spec`` using any object exposing ``random()`` (e.g. a numpy Generator)."""
    u = rng.random() if size is None else rng.random(size)
    # numpy's random() is on [0, 1); keep inverse CDFs finite
    u = np.clip(u, 2.0**-54, 1.0 - 2.0**-54)
    out = spec.ppf(u)
    return float(out) if np.ndim(out) == 0 else out


FIELDS = ("a", "m1", "c1", "t_star", "m2", "r0")


@dataclass(frozen=True)
class D2DConfig:
    """Per-field distributions for the sampled device parameters."""

    a: DistributionSpec = field(default_factory=lambda: DistributionSpec.uniform(0.0, 0.5))
    m1: DistributionSpec = field(default_factory=lambda: DistributionSpec.exponential(3.74e-5, 6.56e-4))
    c1: DistributionSpec = field(default_factory=lambda: DistributionSpec.gaussian(5.29e-3, 5.32e-2))
    t_star: DistributionSpec = field(default_factory=lambda: DistributionSpec.lognormal(0.80, 542.5))
    m2: DistributionSpec = field(default_factory=lambda: DistributionSpec.exponential(1.64e-34, 2.89e-5))
    r0: DistributionSpec = field(default_factory=lambda: DistributionSpec.gaussian(6988.0, 381.7, lower=0.0))

    def __post_init__(self):
        probe = np.array([1e-12, 0.5, 1.0 - 1e-12])
        for name, strictly in (("a", False), ("m1", False), ("m2", False), ("t_star", True), ("r0", True)):
            lo = float(np.min(getattr(self, name).ppf(probe)))
            if lo < 0 or (strictly and lo == 0):
                raise ConfigError(f"{name} distribution reaches {lo}, outside its physical support")

    def specs(self) -> dict[str, DistributionSpec]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def at_medians(self) -> D2DConfig:
        """Every field collapsed onto its median: all devices identical."""
        return D2DConfig(**{k: s.point_mass() for k, s in self.specs().items()})

    def without_rtn(self) -> D2DConfig:
        return D2DConfig(**{**self.specs(), "a": DistributionSpec.constant(0.0)})

    def to_flat(self) -> dict:
        out = {}
        for name, spec in self.specs().items():
            out[f"{name}.kind"] = spec.kind
            out[f"{name}.params"] = list(spec.params)
            if spec.lower is not None:
                out[f"{name}.lower"] = spec.lower
        return out

    @classmethod
    def from_flat(cls, flat: dict) -> D2DConfig:
        """Build from flat ``field.kind`` / ``field.params`` keys; missing fields keep defaults."""
        defaults = cls().specs()
        unknown = {k.split(".")[0] for k in flat} - set(FIELDS)
        if unknown:
            raise ConfigError(f"unknown D2D fields: {sorted(unknown)}")
        specs = {}
        for name in FIELDS:
            if f"{name}.kind" not in flat and f"{name}.params" not in flat:
                specs[name] = defaults[name]
                continue
            try:
                kind = flat[f"{name}.kind"]
                params = flat[f"{name}.params"]
            except KeyError as exc:
                raise ConfigError(f"field {name!r} needs both .kind and .params") from exc
            lower = flat.get(f"{name}.lower", defaults[name].lower if kind == defaults[name].kind else None)
            if not isinstance(params, (list, tuple)):
                params = [params]
            specs[name] = DistributionSpec(kind, tuple(params), lower)
        return cls(**specs)

    @classmethod
    def load(cls, path) -> D2DConfig:
        try:
            flat = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read D2D config {path}: {exc}") from exc
        return cls.from_flat(flat)

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_flat(), indent=2) + "\n")


@dataclass(frozen=True)
class ParamArrays:
    """Column-wise parameters of many devices."""

    a: np.ndarray
    m1: np.ndarray
    c1: np.ndarray
    t_star: np.ndarray
    m2: np.ndarray
    r0: np.ndarray

    def __len__(self):
        return len(self.r0)

    def device(self, i: int) -> DeviceParams:
        return DeviceParams(
            MeanModelParams(float(self.m1[i]), float(self.c1[i]), float(self.t_star[i]), float(self.m2[i])),
            float(self.a[i]),
            float(self.r0[i]),
        )

    @classmethod
    def from_devices(cls, devices) -> ParamArrays:
        devices = list(devices)
        return cls(
            a=np.array([d.rtn_amplitude_a for d in devices]),
            m1=np.array([d.mean.m1 for d in devices]),
            c1=np.array([d.mean.c1 for d in devices]),
            t_star=np.array([d.mean.t_star for d in devices]),
            m2=np.array([d.mean.m2 for d in devices]),
            r0=np.array([d.r0 for d in devices]),
        )


def sample_devices(config: D2DConfig, device_indices, seeds: SeedPolicy) -> ParamArrays:
    """Vectorized :func:`sample_device`; row ``i`` depends only on ``device_indices[i]``."""
    idx = np.atleast_1d(np.asarray(device_indices, dtype=np.int64))
    keys = seeds.keys(idx, Purpose.D2D)
    cols = {}
    for j, name in enumerate(FIELDS):
        u = uniforms(keys, np.full(idx.shape, j))
        cols[name] = np.asarray(getattr(config, name).ppf(u), dtype=np.float64)
    return ParamArrays(**cols)


def sample_device(config: D2DConfig, device_index: int, seeds: SeedPolicy) -> DeviceParams:
    return sample_devices(config, [device_index], seeds).device(0)


def median_device(config: D2DConfig) -> DeviceParams:
    s = config.specs()
    return DeviceParams(
        MeanModelParams(s["m1"].median(), s["c1"].median(), s["t_star"].median(), s["m2"].median()),
        s["a"].median(),
        s["r0"].median(),
    )
