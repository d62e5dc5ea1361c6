"""Acceptance battery.

Each check returns deterministic text (no timings) so that reruns with the
same seed print byte-identical reports. Runtime limits are reported only as
pass/fail.
"""

from __future__ import annotations

import hashlib
import math
import tempfile
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import stats as sps

from . import _kernels
from .array import SynapsePair, apply_update, real_weight
from .device import (
    CycleNoiseParams,
    Device,
    apply_pulses,
    initial_state,
    pink_advance,
    pink_coefficients,
    pink_sum,
    prob_high_after,
    transition_power,
    w_mean,
)
from .rng import DeviceStream, Purpose, SeedPolicy
from .simulate import make_bank, simulate_ensemble, write_trajectories
from .stats import correlation, delta_w_fit, ensemble_psd, fit_slope, parseval_variance, periodogram
from .trainer.optim import quantize_update
from .variability import D2DConfig, median_device, sample_devices

PROPERTY_CASES = 1000


@dataclass
class Check:
    criterion: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] C{self.criterion} {self.name}: {self.detail}"


def _g(x) -> str:
    return f"{x:.6g}"


def ensemble_checks(seed: int, n_devices: int = 64, n_pulses: int = 10_000) -> list[Check]:
    t0 = time.perf_counter()
    traj = simulate_ensemble(n_devices, n_pulses, seed)
    elapsed = time.perf_counter() - t0
    w = traj.w_total
    psd = ensemble_psd(w)
    fit = delta_w_fit(w)
    corr = correlation(w)
    lo, hi = psd.low_band, psd.high_band
    return [
        Check(1, "simulation under 30 s", elapsed < 30.0, f"{n_devices} devices x {n_pulses} pulses"),
        Check(1, "slope_low in [-2.4, -1.6]", -2.4 <= psd.slope_low <= -1.6,
              f"slope {_g(psd.slope_low)} over [{_g(lo[0])}, {_g(lo[1])}]"),
        Check(1, "slope_high in [-1.4, -0.6]", -1.4 <= psd.slope_high <= -0.6,
              f"slope {_g(psd.slope_high)} over [{_g(hi[0])}, {_g(hi[1])}]"),
        Check(1, "AIC(Cauchy) < AIC(Gaussian)", fit.aic_cauchy < fit.aic_gauss,
              f"AIC Cauchy {_g(fit.aic_cauchy)}, Gaussian {_g(fit.aic_gauss)}"),
        Check(1, "|x0| < gamma/10", abs(fit.cauchy_x0) < fit.cauchy_gamma / 10,
              f"x0 {_g(fit.cauchy_x0)}, gamma {_g(fit.cauchy_gamma)}"),
        Check(1, "auto(0)/cross(0) in [1.5, 3.0]", 1.5 <= corr.ratio0 <= 3.0,
              f"ratio {_g(corr.ratio0)} (auto {_g(corr.auto[0])}, cross {_g(corr.cross[0])})"),
    ]


def rtn_checks(seed: int, n_pairs: int = 200, n_trace: int = 10**6) -> list[Check]:
    noise = CycleNoiseParams()
    rng = np.random.default_rng([seed, 2])
    worst = 0.0
    for n1, n2 in rng.integers(0, 10**6 + 1, size=(n_pairs, 2)):
        prod = transition_power(noise, int(n1)) @ transition_power(noise, int(n2))
        worst = max(worst, float(np.max(np.abs(prod - transition_power(noise, int(n1 + n2))))))
    key = int(SeedPolicy(seed).keys(0, Purpose.NOISE)[0])
    occ = float(_kernels.rtn_trace(np.uint64(key), 0, 0, n_trace, noise.p_high, noise.p_low).mean())
    target = noise.p_high / (noise.p_high + noise.p_low)
    return [
        Check(2, "T^n1 T^n2 = T^(n1+n2) within 1e-12", worst <= 1e-12, f"max error {_g(worst)} over {n_pairs} pairs"),
        Check(2, "stationary occupancy 0.2857 +- 0.05", abs(occ - target) <= 0.05,
              f"occupancy {_g(occ)} over {n_trace} pulses (exact {_g(target)})"),
    ]


def pink_output(seed: int, n: int, noise: CycleNoiseParams = CycleNoiseParams()) -> np.ndarray:
    """``n`` consecutive filter outputs driven by fresh Gaussian samples."""
    L = noise.buffer_len
    xi = SeedPolicy(seed).stream(0, Purpose.NOISE).standard_normal(n + L - 1)
    windows = np.ascontiguousarray(sliding_window_view(xi, L)[:, ::-1])
    return pink_sum(windows, pink_coefficients(noise.pole), noise.alpha)


def pink_band(pole: int) -> tuple[float, float]:
    """One decade centred (geometrically) on the filter's corner ``1/(pole+1)``."""
    fc = 1.0 / (pole + 1)
    return fc / math.sqrt(10.0), fc * math.sqrt(10.0)


def pink_checks(seed: int, n: int = 2**18) -> list[Check]:
    noise = CycleNoiseParams()
    y = pink_output(seed, n, noise)
    freqs, p = periodogram(y - y.mean())
    band = pink_band(noise.pole)
    slope = fit_slope(freqs, p, band)
    b = pink_coefficients(noise.pole)
    expected = noise.alpha**2 * float(np.sum(b * b))
    rel = float(y.var()) / expected - 1.0
    return [
        Check(3, "mid-band slope -1.0 +- 0.3", abs(slope + 1.0) <= 0.3,
              f"slope {_g(slope)} over [{_g(band[0])}, {_g(band[1])}]"),
        Check(3, "Var(w_pink) within 5% of alpha^2 sum b^2", abs(rel) <= 0.05,
              f"variance {_g(y.var())}, expected {_g(expected)}"),
    ]


def reference_distribution(spec):
    """The same density built from scipy.stats, for an independent comparison."""
    p = spec.params
    if spec.kind == "uniform":
        base = sps.uniform(loc=p[0], scale=p[1] - p[0])
    elif spec.kind == "exponential":
        base = sps.expon(loc=p[0], scale=p[1])
    elif spec.kind == "gaussian":
        base = sps.norm(loc=p[0], scale=p[1])
        if spec.lower is not None:
            base = sps.truncnorm((spec.lower - p[0]) / p[1], np.inf, loc=p[0], scale=p[1])
    elif spec.kind == "lognormal":
        base = sps.lognorm(s=p[0], scale=p[1])
    else:
        raise ValueError(f"no reference for {spec.kind}")
    return base


def sampler_checks(seed: int, n: int = 10**4, n_median: int = 4 * 10**6) -> list[Check]:
    config = D2DConfig()
    seeds = SeedPolicy(seed)
    small = sample_devices(config, np.arange(n), seeds)
    large = sample_devices(config, np.arange(n, n + n_median), seeds)
    med = median_device(config)
    analytic = {"a": med.rtn_amplitude_a, "m1": med.mean.m1, "c1": med.mean.c1,
                "t_star": med.mean.t_star, "m2": med.mean.m2, "r0": med.r0}
    out = []
    for name, spec in config.specs().items():
        pval = float(sps.kstest(getattr(small, name), reference_distribution(spec).cdf).pvalue)
        out.append(Check(4, f"KS {name}", pval > 0.01, f"p = {_g(pval)} with {n} samples"))
    for name, value in analytic.items():
        mc = float(np.median(getattr(large, name)))
        rel = abs(mc - value) / abs(value)
        out.append(Check(4, f"median {name} within 2%", rel <= 0.02,
                         f"analytic {_g(value)}, Monte Carlo {_g(mc)} ({n_median} samples)"))
    return out


def determinism_checks(seed: int) -> list[Check]:
    digests = []
    with tempfile.TemporaryDirectory() as tmp:
        for i in range(2):
            path = Path(tmp) / f"run{i}.csv"
            write_trajectories(simulate_ensemble(8, 2000, seed), path)
            digests.append(hashlib.sha256(path.read_bytes()).hexdigest())
    return [Check(6, "device trajectories byte-identical on rerun", digests[0] == digests[1],
                  f"sha256 {digests[0][:16]}")]


class _LabelStream:
    """Fake stream handing out increasing labels instead of Gaussian values."""

    def __init__(self):
        self.next = 1.0

    def standard_normal(self, size):
        out = self.next + np.arange(size, dtype=np.float64)
        self.next += size
        return out

    def random(self):
        return 0.5


def pink_provenance(n1: int, n2: int, noise: CycleNoiseParams) -> bool:
    """Splitting pulses keeps every surviving old value in the same slot, and fresh values newest first."""
    L = noise.buffer_len
    old = -np.arange(1.0, L + 1)
    split, _ = pink_advance(old, n1, noise, _LabelStream())
    s2 = _LabelStream()
    s2.next = 10_000.0
    split, _ = pink_advance(split, n2, noise, s2)
    joint, _ = pink_advance(old, n1 + n2, noise, _LabelStream())
    old_mask = split < 0
    if not np.array_equal(old_mask, joint < 0) or not np.array_equal(split[old_mask], joint[old_mask]):
        return False
    k = int((~old_mask).sum())
    if k != min(n1 + n2, L) or not np.all(~old_mask[:k]):
        return False
    return bool(np.all(np.diff(split[:k]) < 0) and np.all(np.diff(joint[:k]) < 0))


def rtn_split_error(x0: int, n1: int, n2: int, noise: CycleNoiseParams) -> float:
    p1 = prob_high_after(x0, n1, noise.p_high, noise.p_low)
    via = p1 * prob_high_after(1, n2, noise.p_high, noise.p_low) + (1 - p1) * prob_high_after(0, n2, noise.p_high, noise.p_low)
    return abs(via - prob_high_after(x0, n1 + n2, noise.p_high, noise.p_low))


def additivity_ks(seed: int, n_devices: int = 2000, n1: int = 37, n2: int = 58) -> float:
    """KS p-value between gaps after ``n1`` then ``n2`` pulses and after ``n1 + n2`` at once."""
    idx = np.arange(n_devices)
    a = make_bank(n_devices, seed)
    a.apply(idx, n1)
    a.apply(idx, n2)
    b = make_bank(n_devices, seed + 1)
    b.apply(idx, n1 + n2)
    return float(sps.ks_2samp(a.w(), b.w()).pvalue)


def property_checks(seed: int, cases: int = PROPERTY_CASES) -> list[Check]:
    rng = np.random.default_rng([seed, 7])
    config = D2DConfig()
    seeds = SeedPolicy(seed)
    params = sample_devices(config, np.arange(2 * cases), seeds)
    out = []

    bad = 0
    for i in range(cases):
        m = params.device(i).mean
        eps = m.t_star * 1e-12
        gap = abs(w_mean(m, m.t_star + eps) - w_mean(m, m.t_star - eps))
        bad += gap > 1e-9 * max(1.0, abs(m.m1 * m.t_star + m.c1))
    out.append(Check(7, "continuity at t_star", bad == 0, f"{cases} devices, {bad} violations"))

    quiet = CycleNoiseParams().silenced()
    bad = 0
    for i in range(cases):
        bl = Device.fresh(replace(params.device(2 * i), rtn_amplitude_a=0.0), quiet, seeds.stream(2 * i))
        blb = Device.fresh(replace(params.device(2 * i + 1), rtn_amplitude_a=0.0), quiet, seeds.stream(2 * i + 1))
        pair = SynapsePair(bl, blb)
        pair = apply_update(pair, int(rng.integers(-300, 301)))
        before = real_weight(pair)
        n = int(rng.integers(1, 101))
        bad += real_weight(apply_update(pair, n)) < before
        bad += real_weight(apply_update(pair, -n)) > before
    out.append(Check(7, "noise-free weights monotone in pulses", bad == 0, f"{cases} pairs, {bad} violations"))

    noise = CycleNoiseParams()
    bad, worst = 0, 0.0
    for _ in range(cases):
        n1, n2 = (int(v) for v in rng.integers(0, 3 * noise.buffer_len, 2))
        x0 = int(rng.integers(0, 2))
        st = initial_state(noise, DeviceStream(int(rng.integers(0, 2**63)), 0))
        st = replace(st, x=x0)
        dev = params.device(0)
        split = apply_pulses(apply_pulses(st, dev, noise, n1), dev, noise, n2)
        joint = apply_pulses(st, dev, noise, n1 + n2)
        bad += split.t != joint.t
        bad += not pink_provenance(n1, n2, noise)
        worst = max(worst, rtn_split_error(x0, n1, n2, noise))
    pval = additivity_ks(seed)
    out.append(Check(7, "pulse additivity", bad == 0 and worst <= 1e-12 and pval > 0.01,
                     f"{cases} splits, {bad} structural violations, RTN error {_g(worst)}, KS p = {_g(pval)}"))

    bad = 0
    for i in range(cases):
        pair = SynapsePair(Device.fresh(params.device(2 * i), noise, seeds.stream(2 * i)),
                           Device.fresh(params.device(2 * i + 1), noise, seeds.stream(2 * i + 1)))
        pair = apply_update(apply_update(pair, int(rng.integers(0, 200))), -int(rng.integers(0, 200)))
        bad += real_weight(pair.swapped()) != -real_weight(pair)
    out.append(Check(7, "real_weight antisymmetric under swap", bad == 0, f"{cases} pairs, {bad} violations"))

    bad = 0
    for _ in range(cases):
        d = float(rng.normal() * 10.0 ** rng.uniform(-6, 0))
        g = float(10.0 ** rng.uniform(0, 5))
        q = quantize_update(d, g)
        bad += quantize_update(-d, g) != -q
        bad += abs(q) != math.floor(abs(d) * g)
    out.append(Check(7, "quantize floor and odd symmetry", bad == 0, f"{cases} cases, {bad} violations"))

    worst = 0.0
    for _ in range(cases):
        n = int(rng.integers(16, 513))
        x = rng.normal(size=n).cumsum() * rng.uniform(0.1, 10)
        _, p = periodogram(x - x.mean())
        worst = max(worst, abs(parseval_variance(p, n) / x.var() - 1.0))
    out.append(Check(7, "Parseval", worst <= 1e-9, f"{cases} series, max relative error {_g(worst)}"))
    return out


def ablation_checks(seed: int, data_dir=None, out_dir=None, epochs: int | None = None, progress=None) -> list[Check]:
    from .trainer import MODES, TrainerConfig, load_mnist_dir, train, write_metrics

    train_set, test_set = load_mnist_dir(data_dir)
    t0 = time.perf_counter()
    final = {}
    for mode in MODES:
        cfg = TrainerConfig(mode=mode, master_seed=seed)
        if epochs is not None:
            cfg = replace(cfg, epochs=epochs)
        history, _ = train(cfg, train_set, test_set, progress=progress)
        final[mode] = 100.0 * history[-1].test_accuracy
        if out_dir is not None:
            write_metrics(history, Path(out_dir) / f"metrics_{mode}.csv")
    elapsed = time.perf_counter() - t0
    base, ideal, full = final["float_baseline"], final["device_no_noise_no_d2d"], final["device_full"]
    summary = ", ".join(f"{m} {final[m]:.2f}" for m in MODES)
    return [
        Check(5, "float baseline >= 97%", base >= 97.0, f"{base:.2f}%"),
        Check(5, "no-noise-no-D2D within 0.5 pt of baseline", abs(base - ideal) <= 0.5, f"{ideal:.2f}% vs {base:.2f}%"),
        Check(5, "full-device deficit <= 5 pt", base - full <= 5.0, f"{full:.2f}% vs {base:.2f}%"),
        Check(5, "ordering baseline >= ideal >= full (0.5 pt slack)",
              base >= ideal - 0.5 and ideal >= full - 0.5, summary),
        Check(5, "all five modes within 30 min", elapsed <= 1800.0, "five modes, 10 epochs each"),
    ]


def run(seed: int = 0, full: bool = False, data_dir=None, out_dir=None, progress=None) -> list[Check]:
    checks = []
    checks += ensemble_checks(seed)
    checks += rtn_checks(seed)
    checks += pink_checks(seed)
    checks += sampler_checks(seed)
    if full:
        checks += ablation_checks(seed, data_dir, out_dir, progress=progress)
    checks += determinism_checks(seed)
    checks += property_checks(seed)
    return checks


def summarize(checks: list[Check]) -> dict[int, bool]:
    verdict: dict[int, bool] = {}
    for c in checks:
        verdict[c.criterion] = verdict.get(c.criterion, True) and c.passed
    return verdict


def format_report(checks: list[Check]) -> str:
    lines = [c.line() for c in checks]
    lines.append("")
    for crit, ok in sorted(summarize(checks).items()):
        lines.append(f"criterion {crit}: {'PASS' if ok else 'FAIL'}")
    return "\n".join(lines) + "\n"
