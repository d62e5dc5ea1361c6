"""Ensemble statistics of gap trajectories.

Frequencies are in cycles per pulse (Nyquist = 0.5). Correlations are raw
sums of products, not normalized.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import optimize, signal, stats


class DegenerateFitError(ValueError):
    """Pooled increments carry no continuous spread to fit."""


@dataclass
class PsdReport:
    frequencies: np.ndarray
    psd: np.ndarray
    slope_low: float
    slope_high: float
    low_band: tuple[float, float]
    high_band: tuple[float, float]

    def summary(self) -> dict:
        return {
            "slope_low": self.slope_low,
            "slope_high": self.slope_high,
            "low_band": list(self.low_band),
            "high_band": list(self.high_band),
        }


@dataclass
class DeltaWFit:
    cauchy_x0: float
    cauchy_gamma: float
    gauss_mu: float
    gauss_sigma: float
    aic_cauchy: float
    aic_gauss: float
    n: int

    def summary(self) -> dict:
        return asdict(self)


@dataclass
class CorrelationReport:
    lags: np.ndarray
    auto: np.ndarray
    cross: np.ndarray | None

    @property
    def ratio0(self) -> float:
        return float(self.auto[0] / self.cross[0])


def _as_ensemble(w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.ndim == 1:
        w = w[None, :]
    if w.ndim != 2 or w.shape[0] == 0:
        raise ValueError("ensemble must be a non-empty devices x pulses matrix")
    if not np.all(np.isfinite(w)):
        raise ValueError("ensemble contains non-finite values")
    return w


def periodogram(series, detrend=None) -> tuple[np.ndarray, np.ndarray]:
    """``|DFT|**2 / N`` at ``k/N`` for ``k = 1..N//2`` (DC dropped).

    ``detrend`` may be an array of the same length to subtract first.
    Works row-wise on 2-D input.
    """
    x = np.asarray(series, dtype=np.float64)
    if detrend is not None:
        x = x - np.asarray(detrend, dtype=np.float64)
    n = x.shape[-1]
    if n < 16:
        raise ValueError(f"series too short for a periodogram: {n} < 16")
    spec = np.abs(np.fft.rfft(x, axis=-1)) ** 2 / n
    freqs = np.arange(n // 2 + 1) / n
    return freqs[1:], spec[..., 1:]


def parseval_variance(psd: np.ndarray, n: int) -> np.ndarray:
    """Population variance implied by a one-sided periodogram from :func:`periodogram`."""
    psd = np.asarray(psd)
    if n % 2 == 0:
        total = 2.0 * psd[..., :-1].sum(axis=-1) + psd[..., -1]
    else:
        total = 2.0 * psd.sum(axis=-1)
    return total / n


def fit_slope(freqs, psd, band: tuple[float, float]) -> float:
    """Least-squares slope of ``log10 psd`` against ``log10 f`` inside ``band`` (inclusive)."""
    freqs, psd = np.asarray(freqs), np.asarray(psd)
    sel = (freqs >= band[0] * (1 - 1e-12)) & (freqs <= band[1] * (1 + 1e-12)) & (psd > 0)
    if sel.sum() < 3:
        raise ValueError(f"band {band} holds fewer than 3 usable bins")
    slope, _ = np.polyfit(np.log10(freqs[sel]), np.log10(psd[sel]), 1)
    return float(slope)


def default_bands(n: int) -> tuple[tuple[float, float], tuple[float, float]]:
    """Lowest decade above DC and the decade ending at Nyquist."""
    return (1.0 / n, 10.0 / n), (0.05, 0.5)


def ensemble_psd(ensemble, low_band=None, high_band=None, detrend=None, welch_nperseg: int | None = None) -> PsdReport:
    """Mean periodogram over devices plus log-log slopes in two bands.

    ``welch_nperseg`` switches to Welch averaging of boxcar segments.
    """
    w = _as_ensemble(ensemble)
    if detrend is not None:
        w = w - np.asarray(detrend, dtype=np.float64)
    n = w.shape[1]
    if welch_nperseg:
        freqs, p = signal.welch(w, fs=1.0, window="boxcar", nperseg=welch_nperseg, detrend=False,
                                scaling="density", return_onesided=True, axis=-1)
        freqs, p = freqs[1:], p[..., 1:] / 2.0
        n = welch_nperseg
    else:
        freqs, p = periodogram(w)
    mean_psd = p.mean(axis=0)
    lo_default, hi_default = default_bands(n)
    low_band = tuple(low_band or lo_default)
    high_band = tuple(high_band or hi_default)
    return PsdReport(freqs, mean_psd, fit_slope(freqs, mean_psd, low_band),
                     fit_slope(freqs, mean_psd, high_band), low_band, high_band)


def pooled_increments(ensemble) -> np.ndarray:
    w = _as_ensemble(ensemble)
    if w.shape[1] < 2:
        raise ValueError("need at least two pulses per device")
    return np.diff(w, axis=1).ravel()


def _has_atoms(d: np.ndarray) -> bool:
    """True when most values repeat up to rounding, i.e. the pool is a handful of atoms."""
    s = np.sort(d)
    scale = max(float(np.max(np.abs(s))), np.finfo(float).tiny)
    ties = np.diff(s) <= 64 * np.finfo(float).eps * scale
    return bool(ties.mean() > 0.5) if ties.size else True


def delta_w_fit(ensemble=None, increments=None, per_device: bool = False):
    """Fit Cauchy (maximum likelihood) and Gaussian (moments) laws to gap increments.

    Increments are pooled over devices and pulses unless ``per_device`` is set,
    in which case a list with one fit per device is returned.
    """
    if per_device:
        w = _as_ensemble(ensemble)
        return [delta_w_fit(increments=np.diff(row)) for row in w]
    d = pooled_increments(ensemble) if increments is None else np.asarray(increments, dtype=np.float64).ravel()
    if d.size < 2 or np.ptp(d) == 0 or _has_atoms(d):
        raise DegenerateFitError("increments are (piecewise) constant; no noise to fit")
    mu, sigma = float(d.mean()), float(d.std())
    ll_gauss = float(stats.norm.logpdf(d, mu, sigma).sum())

    med = float(np.median(d))
    q75, q25 = np.percentile(d, [75, 25])
    g0 = max(float(q75 - q25) / 2.0, 1e-12)

    def nll(theta):
        x0, log_g = theta
        g = np.exp(log_g)
        z = (d - x0) / g
        return d.size * np.log(np.pi * g) + np.log1p(z * z).sum()

    def grad(theta):
        x0, log_g = theta
        g = np.exp(log_g)
        z = (d - x0) / g
        k = 2.0 * z / (1.0 + z * z)
        return np.array([-k.sum() / g, d.size - (k * z).sum()])

    res = optimize.minimize(nll, [med, np.log(g0)], jac=grad, method="BFGS",
                            options={"gtol": 1e-10 * d.size, "maxiter": 500})
    x0, gamma = float(res.x[0]), float(np.exp(res.x[1]))
    return DeltaWFit(
        cauchy_x0=x0,
        cauchy_gamma=gamma,
        gauss_mu=mu,
        gauss_sigma=sigma,
        aic_cauchy=2 * 2 + 2 * float(res.fun),
        aic_gauss=2 * 2 - 2 * ll_gauss,
        n=int(d.size),
    )


def increment_histogram(increments, bins: int = 201, span: float | None = None):
    d = np.asarray(increments)
    span = span or float(np.percentile(np.abs(d), 99.5))
    counts, edges = np.histogram(d, bins=bins, range=(-span, span))
    return 0.5 * (edges[1:] + edges[:-1]), counts


def _lagged_sums(a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """``sum_t a[t] * b[t + lag]`` for lags ``0..N-1`` (rows summed), via FFT."""
    n = a.shape[-1]
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    fa = np.fft.rfft(a, nfft, axis=-1)
    fb = fa if b is None else np.fft.rfft(b, nfft, axis=-1)
    spec = np.conj(fa) * fb
    if spec.ndim == 2:
        spec = spec.sum(axis=0)
    return np.fft.irfft(spec, nfft)[:n]


def correlation(ensemble, mode: str = "cross") -> CorrelationReport:
    """Mean auto-correlation and, for ``mode='cross'``, mean cross-correlation over ordered pairs.

    For each lag ``l``: ``auto(l) = mean_i sum_t w_i(t) w_i(t+l)`` and
    ``cross(l) = mean_{i != j} sum_t w_i(t) w_j(t+l)``.
    """
    w = _as_ensemble(ensemble)
    if mode not in ("auto", "cross"):
        raise ValueError(f"mode must be 'auto' or 'cross', got {mode!r}")
    n_dev, n = w.shape
    auto_total = _lagged_sums(w)
    lags = np.arange(n)
    auto = auto_total / n_dev
    if mode == "auto":
        return CorrelationReport(lags, auto, None)
    if n_dev < 2:
        raise ValueError("cross-correlation needs at least two devices")
    s = w.sum(axis=0)
    all_pairs = _lagged_sums(s)
    cross = (all_pairs - auto_total) / (n_dev * (n_dev - 1))
    return CorrelationReport(lags, auto, cross)
