"""Filtering and spectral estimation shared by the EMG, CoP and force analyses.

Filters are Butterworth applied forward-backward (zero phase). Spectra come
from Welch's method with Hann windows, 50% overlap and per-segment linear
detrending unless callers override those defaults.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .core import UniformSeries, time_axis
from .errors import (
    DataError,
    DegenerateSpectrumError,
    DesignError,
    ParameterError,
    WindowError,
)

FILTER_KINDS = ("lowpass", "highpass", "bandpass")

# Welch defaults: Hann window, half-overlapping 256-sample segments,
# linear detrend per segment.
DEFAULT_SEGMENT_LEN = 256
DEFAULT_OVERLAP = 0.5
DEFAULT_WINDOW = "hann"


@dataclass(frozen=True)
class IirCoefficients:
    """Designed IIR filter with its design metadata. a[0] is always 1."""

    b: np.ndarray
    a: np.ndarray
    kind: str
    order: int
    cutoffs_hz: tuple[float, ...]
    fs_hz: float

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float)
        a = np.asarray(self.a, dtype=float)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "a", a)
        if abs(a[0] - 1.0) > 1e-12:
            raise DesignError("denominator must be normalized to a[0] = 1")
        poles = np.roots(a)
        if poles.size and np.abs(poles).max() >= 1.0:
            raise DesignError("designed filter is unstable (pole on/outside unit circle)")

    def response_at(self, freq_hz: float) -> complex:
        """Transfer function evaluated on the unit circle at freq_hz."""
        w = 2 * np.pi * freq_hz / self.fs_hz
        z = np.exp(1j * w)
        # Polynomials are in z^-1, highest order first in scipy convention.
        num = np.polyval(self.b[::-1], 1 / z)
        den = np.polyval(self.a[::-1], 1 / z)
        return num / den

    @property
    def pad_len(self) -> int:
        return 3 * (self.order + 1)


@dataclass(frozen=True)
class Spectrum:
    """One-sided power spectral density with equally spaced bins from 0."""

    freqs_hz: np.ndarray
    psd: np.ndarray
    df: float
    segment_len: int
    overlap: float
    window_kind: str

    def __post_init__(self):
        f = np.asarray(self.freqs_hz, dtype=float)
        p = np.asarray(self.psd, dtype=float)
        object.__setattr__(self, "freqs_hz", f)
        object.__setattr__(self, "psd", p)
        if f.shape != p.shape:
            raise ParameterError("freqs and psd must have equal length")
        if f.size and abs(f[0]) > 1e-12:
            raise ParameterError("spectrum must start at 0 Hz")
        if (p < 0).any():
            raise ParameterError("psd must be non-negative")

    @property
    def total_power(self) -> float:
        return float(np.sum(self.psd) * self.df)


def butter_design(
    kind: str, order: int, cutoffs_hz: float | tuple[float, float], fs_hz: float
) -> IirCoefficients:
    """Butterworth design with -3 dB gain at each cutoff.

    Raises DesignError for cutoffs at/above Nyquist and ParameterError for
    an order outside [1, 8].
    """
    if kind not in FILTER_KINDS:
        raise ParameterError(f"kind must be one of {FILTER_KINDS}, got {kind!r}")
    if not (1 <= order <= 8):
        raise ParameterError(f"order must be in [1, 8], got {order}")
    cut = np.atleast_1d(np.asarray(cutoffs_hz, dtype=float))
    if kind == "bandpass":
        if cut.size != 2 or not (cut[0] < cut[1]):
            raise ParameterError("bandpass needs an ascending (low, high) cutoff pair")
    elif cut.size != 1:
        raise ParameterError(f"{kind} takes a single cutoff")
    nyq = fs_hz / 2.0
    if (cut <= 0).any() or (cut >= nyq).any():
        raise DesignError(f"cutoffs {cut.tolist()} Hz must lie strictly inside (0, {nyq}) Hz")
    wn = cut / nyq if cut.size > 1 else float(cut[0]) / nyq
    b, a = signal.butter(order, wn, btype=kind)
    return IirCoefficients(
        b=b, a=a, kind=kind, order=order, cutoffs_hz=tuple(cut.tolist()), fs_hz=fs_hz
    )


def filtfilt(coeffs: IirCoefficients, series: UniformSeries) -> UniformSeries:
    """Zero-phase forward-backward filtering with reflective edge padding."""
    n = len(series)
    if n <= 3 * (coeffs.order + 1):
        raise ParameterError(
            f"series of {n} samples is too short for order {coeffs.order} "
            f"(needs > {3 * (coeffs.order + 1)})"
        )
    if abs(series.rate_hz - coeffs.fs_hz) > 1e-9 * coeffs.fs_hz:
        raise ParameterError(
            f"filter designed at {coeffs.fs_hz} Hz applied to {series.rate_hz} Hz data"
        )
    out = signal.filtfilt(
        coeffs.b, coeffs.a, series.values, padtype="even", padlen=coeffs.pad_len
    )
    return UniformSeries(out, series.rate_hz, series.t0_s)


def rectify(series: UniformSeries) -> UniformSeries:
    """Full-wave rectification: out[k] = |in[k]|."""
    return UniformSeries(
        np.abs(series.values), series.rate_hz, series.t0_s, gap_mask=series.gap_mask
    )


def moving_rms(series: UniformSeries, window_s: float) -> UniformSeries:
    """Centered moving RMS; edge windows shrink symmetrically so they stay centered."""
    n = len(series)
    win = int(round(window_s * series.rate_hz))
    if win < 2:
        raise ParameterError(f"RMS window of {window_s} s is shorter than 2 samples")
    half = win // 2
    sq = series.values**2
    csum = np.concatenate(([0.0], np.cumsum(sq)))
    k = np.arange(n)
    h = np.minimum(half, np.minimum(k, n - 1 - k))
    lo = k - h
    hi = k + h + 1
    means = (csum[hi] - csum[lo]) / (hi - lo)
    return UniformSeries(np.sqrt(means), series.rate_hz, series.t0_s)


def welch_psd(
    series: UniformSeries,
    segment_len: int = DEFAULT_SEGMENT_LEN,
    overlap_fraction: float = DEFAULT_OVERLAP,
    window_kind: str = DEFAULT_WINDOW,
    detrend: str = "linear",
) -> Spectrum:
    """One-sided Welch PSD (units^2/Hz): averaged windowed segment periodograms."""
    n = len(series)
    segment_len = int(segment_len)
    if segment_len > n:
        raise ParameterError(f"segment of {segment_len} samples exceeds series length {n}")
    if segment_len < 4:
        raise ParameterError("segment must be at least 4 samples")
    if not (0 <= overlap_fraction < 1):
        raise ParameterError(f"overlap fraction must be in [0, 1), got {overlap_fraction}")
    if not np.isfinite(series.values).all():
        raise DataError("welch_psd input contains non-finite samples")
    freqs, psd = signal.welch(
        series.values,
        fs=series.rate_hz,
        window=window_kind,
        nperseg=segment_len,
        noverlap=int(segment_len * overlap_fraction),
        detrend=detrend,
        scaling="density",
        return_onesided=True,
    )
    psd = np.maximum(psd, 0.0)
    return Spectrum(
        freqs_hz=freqs,
        psd=psd,
        df=float(freqs[1] - freqs[0]),
        segment_len=segment_len,
        overlap=overlap_fraction,
        window_kind=window_kind,
    )


def _cumulative_power_quantile(spec: Spectrum, fraction: float) -> float:
    power = spec.psd * spec.df
    total = float(power.sum())
    if total <= 0:
        raise DegenerateSpectrumError("spectrum has zero total power")
    target = fraction * total
    csum = np.cumsum(power)
    if target <= csum[0]:
        return float(spec.freqs_hz[0])
    # Piecewise-linear cumulative power over the bin grid.
    return float(np.interp(target, csum, spec.freqs_hz))


def median_frequency(spec: Spectrum) -> float:
    """Frequency splitting the spectrum's power in half, interpolated between bins."""
    return _cumulative_power_quantile(spec, 0.5)


def power_quantile_frequency(spec: Spectrum, fraction: float) -> float:
    """Frequency below which `fraction` of the total power lies."""
    if not (0 < fraction < 1):
        raise ParameterError(f"fraction must be in (0, 1), got {fraction}")
    return _cumulative_power_quantile(spec, fraction)


def stft_median_frequency(
    series: UniformSeries,
    win_s: float,
    overlap_fraction: float = DEFAULT_OVERLAP,
    window_kind: str = DEFAULT_WINDOW,
) -> UniformSeries:
    """Median-frequency track over sliding windows, timestamped at window centers.

    Windows with zero power are emitted as gaps so fatigue trends survive
    silent stretches.
    """
    n = len(series)
    win = int(round(win_s * series.rate_hz))
    if win < 4:
        raise ParameterError(f"window of {win_s} s is shorter than 4 samples")
    if win > n:
        raise ParameterError(f"window of {win} samples exceeds series length {n}")
    if not (0 <= overlap_fraction < 1):
        raise ParameterError(f"overlap fraction must be in [0, 1), got {overlap_fraction}")
    hop = max(1, int(round(win * (1 - overlap_fraction))))
    starts = range(0, n - win + 1, hop)
    track = []
    gaps = []
    for s in starts:
        chunk = UniformSeries(series.values[s : s + win], series.rate_hz)
        spec = welch_psd(chunk, segment_len=win, overlap_fraction=0.0, window_kind=window_kind)
        try:
            track.append(median_frequency(spec))
            gaps.append(False)
        except DegenerateSpectrumError:
            track.append(np.nan)
            gaps.append(True)
    if not track:
        raise ParameterError("no complete windows fit in the series")
    out_rate = series.rate_hz / hop
    t_center0 = series.t0_s + (win - 1) / (2 * series.rate_hz)
    mask = np.asarray(gaps) if any(gaps) else None
    return UniformSeries(np.asarray(track), out_rate, t_center0, gap_mask=mask)


def spectral_moments(
    spec: Spectrum, band_hz: tuple[float, float] | None = None
) -> tuple[float, float, float]:
    """Zeroth, first and second spectral moments over the analysis band.

    moment n = sum(f^n * psd * df) for bins inside the band (inclusive).
    """
    f = spec.freqs_hz
    p = spec.psd
    if band_hz is not None:
        lo, hi = band_hz
        sel = (f >= lo - 1e-12) & (f <= hi + 1e-12)
        f = f[sel]
        p = p[sel]
    mu0 = float(np.sum(p) * spec.df)
    mu1 = float(np.sum(f * p) * spec.df)
    mu2 = float(np.sum(f**2 * p) * spec.df)
    return mu0, mu1, mu2


def trapz(series: UniformSeries, a_s: float, b_s: float) -> float:
    """Trapezoidal integral of the signal over [a_s, b_s]."""
    if not (a_s < b_s):
        raise WindowError(f"inverted integration window [{a_s}, {b_s}]")
    t = time_axis(series)
    if a_s < series.t0_s - 1e-12 or b_s > t[-1] + 1e-12:
        raise WindowError(
            f"integration window [{a_s}, {b_s}] outside series [{series.t0_s}, {t[-1]}]"
        )
    sel = (t >= a_s - 1e-12) & (t <= b_s + 1e-12)
    return float(np.trapezoid(series.values[sel], t[sel]))
