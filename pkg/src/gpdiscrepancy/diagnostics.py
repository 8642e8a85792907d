"""Autocorrelation and spectral summaries of prediction-error series."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

__all__ = ["ResidualSeries", "Spectrum", "sample_acf", "periodogram", "peak_pick"]


@dataclass(frozen=True)
class ResidualSeries:
    values: np.ndarray
    dt: float
    label: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        object.__setattr__(self, "values", v)
        if not np.all(np.isfinite(v)):
            raise ValueError("residual series must be finite")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    @property
    def n(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class Spectrum:
    frequencies: np.ndarray  # Hz
    power: np.ndarray  # units^2 / Hz, one-sided

    @property
    def df(self) -> float:
        return float(self.frequencies[1] - self.frequencies[0])


def _values(series):
    return series.values if isinstance(series, ResidualSeries) else np.asarray(series, dtype=float).ravel()


def sample_acf(series, max_lag: int) -> np.ndarray:
    """Biased sample autocorrelation at lags 0..max_lag."""
    e = _values(series)
    n = e.size
    if not 0 <= max_lag < n:
        raise ValueError("max_lag must satisfy 0 <= max_lag < n")
    d = e - e.mean()
    denom = float(d @ d)
    if not denom > 0:
        raise ValueError("autocorrelation is undefined for a constant series")
    full = signal.correlate(d, d, mode="full", method="auto")
    return full[n - 1: n + max_lag] / denom


def periodogram(series, dt: float | None = None) -> Spectrum:
    """Hann-tapered one-sided periodogram, scaled so the power integrates to the variance."""
    e = _values(series)
    if e.size < 8:
        raise ValueError("periodogram needs at least 8 samples")
    step = series.dt if isinstance(series, ResidualSeries) else dt
    if step is None or not step > 0:
        raise ValueError("sampling step required")
    f, p = signal.periodogram(e, fs=1.0 / step, window="hann", detrend="constant", scaling="density")
    return Spectrum(f, p)


def peak_pick(psd: Spectrum, max_peaks: int | None = None, factor: float = 10.0) -> np.ndarray:
    """Frequencies of local maxima above ``factor`` x median power, strongest first."""
    p = np.asarray(psd.power, dtype=float)
    if p.size < 3:
        return np.empty(0)
    med = np.median(p)
    if not med > 0:
        return np.empty(0)
    idx, _ = signal.find_peaks(p, height=factor * med)
    idx = idx[np.argsort(p[idx], kind="stable")[::-1]]
    if max_peaks is not None:
        idx = idx[:max_peaks]
    return np.asarray(psd.frequencies)[idx]
