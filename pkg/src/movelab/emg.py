"""EMG processing: bandpass filter, full-wave rectification, moving-RMS
envelope, median-frequency trend, and Welch PSD, per channel.

Defaults follow surface-EMG convention: 20-450 Hz order-4 bandpass applied
zero-phase, 50 ms RMS window, 1 s median-frequency windows at 50% overlap.
A silent channel is not an error: the flat artifacts are still produced and
the degenerate median-frequency condition is recorded on the result.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .core import UniformSeries, require_no_gaps, time_axis, trim
from .dsp import (
    Spectrum,
    butter_design,
    filtfilt,
    moving_rms,
    rectify,
    stft_median_frequency,
    welch_psd,
)
from .errors import DegenerateSpectrumError, ParameterError, SchemaError
from .svgplot import emit_plot


@dataclass(frozen=True)
class EmgConfig:
    rate_hz: float | None = None  # None: derive from the time column
    band_hz: tuple = (20.0, 450.0)
    order: int = 4
    rms_window_s: float = 0.05
    mdf_window_s: float = 1.0
    mdf_overlap: float = 0.5
    welch_segment: int = 256
    analysis_window_s: tuple | None = None  # (start, end) in seconds

    def as_params(self) -> dict:
        return {
            "band_hz": f"{self.band_hz[0]}-{self.band_hz[1]}",
            "order": self.order,
            "rms_window_s": self.rms_window_s,
            "mdf_window_s": self.mdf_window_s,
            "mdf_overlap": self.mdf_overlap,
            "welch_segment": self.welch_segment,
            "analysis_window_s": (
                "full" if self.analysis_window_s is None
                else f"{self.analysis_window_s[0]}-{self.analysis_window_s[1]}"
            ),
        }


@dataclass(frozen=True)
class EmgResult:
    source: str
    channel: str
    filtered: UniformSeries
    rectified: UniformSeries
    rms_envelope: UniformSeries
    mdf_track: UniformSeries | None
    psd: Spectrum
    summary: dict = field(default_factory=dict)
    notes: tuple = ()


def read_timeseries_csv(text: str, source: str = "<memory>") -> tuple:
    """Wide numeric CSV -> (time array or None, ordered {column: values}).

    The first column named ``time`` (case-insensitive) is treated as the
    time axis; every other column is an independent channel.
    """
    try:
        frame = pd.read_csv(io.StringIO(text))
    except (pd.errors.ParserError, pd.errors.EmptyDataError, ValueError) as exc:
        raise SchemaError(f"unreadable CSV: {exc}", source=source) from exc
    if frame.shape[1] == 0 or frame.shape[0] == 0:
        raise SchemaError("CSV has no data rows", source=source)
    columns = [str(c).strip() for c in frame.columns]
    time_col = None
    if columns and columns[0].lower() in ("time", "time_s", "t"):
        time_col = frame.iloc[:, 0].to_numpy(dtype=float)
    channels = {}
    start = 1 if time_col is not None else 0
    for i in range(start, frame.shape[1]):
        vals = pd.to_numeric(frame.iloc[:, i], errors="coerce").to_numpy(dtype=float)
        if np.isnan(vals).all():
            raise SchemaError(f"column {columns[i]!r} is not numeric", source=source)
        channels[columns[i]] = vals
    if not channels:
        raise SchemaError("no channel columns", source=source)
    return time_col, channels


def rate_from_time(time_s: np.ndarray, source: str = "<memory>") -> float:
    dt = np.diff(time_s)
    if len(dt) == 0 or not np.isfinite(dt).all() or dt.min() <= 0:
        raise SchemaError("time column is not strictly increasing", source=source)
    spread = dt.max() - dt.min()
    if spread > 1e-4 * dt.mean():
        raise SchemaError(
            f"time column is not uniformly sampled (dt spread {spread:.3g} s)",
            source=source,
        )
    return float(1.0 / dt.mean())


def emg_pipeline(series: UniformSeries, cfg: EmgConfig, source: str = "", channel: str = "") -> EmgResult:
    """Run the full per-channel chain; degenerate MDF is recorded, not raised."""
    require_no_gaps(series, "EMG channel")
    work = series
    if cfg.analysis_window_s is not None:
        work = trim(series, cfg.analysis_window_s[0], cfg.analysis_window_s[1])
    coeffs = butter_design("bandpass", cfg.order, cfg.band_hz, work.rate_hz)
    filtered = filtfilt(coeffs, work)
    rect = rectify(filtered)
    rms = moving_rms(filtered, cfg.rms_window_s)
    notes = []
    try:
        mdf = stft_median_frequency(filtered, cfg.mdf_window_s, cfg.mdf_overlap)
    except DegenerateSpectrumError as exc:
        mdf = None
        notes.append(f"median-frequency track unavailable: {exc}")
    except ParameterError as exc:
        mdf = None
        notes.append(f"median-frequency track unavailable: {exc}")
    if mdf is not None and mdf.has_gaps():
        notes.append("median-frequency track has silent windows recorded as gaps")
    psd = welch_psd(filtered, segment_len=min(cfg.welch_segment, len(filtered)))
    summary = {
        "rms_mean": float(rms.values.mean()),
        "rms_peak": float(rms.values.max()),
    }
    try:
        from .dsp import median_frequency

        summary["mdf_hz"] = float(median_frequency(psd))
    except DegenerateSpectrumError as exc:
        summary["mdf_hz"] = float("nan")
        notes.append(f"whole-window median frequency unavailable: {exc}")
    return EmgResult(
        source=source,
        channel=channel,
        filtered=filtered,
        rectified=rect,
        rms_envelope=rms,
        mdf_track=mdf,
        psd=psd,
        summary=summary,
        notes=tuple(notes),
    )


def series_csv_text(series: UniformSeries, value_name: str) -> str:
    t = time_axis(series).tolist()
    vals = series.values
    if np.isnan(vals).any():
        body = "\n".join(
            f"{a:.9g}," + ("" if b != b else f"{b:.9g}")
            for a, b in zip(t, vals.tolist())
        )
    else:
        body = "\n".join(f"{a:.9g},{b:.9g}" for a, b in zip(t, vals.tolist()))
    return f"time,{value_name}\n{body}\n"


def spectrum_csv_text(spec: Spectrum) -> str:
    body = "\n".join(
        f"{f:.9g},{p:.9g}" for f, p in zip(spec.freqs_hz, spec.psd)
    )
    return f"freq_hz,psd\n{body}\n"


def write_emg_outputs(result: EmgResult, out_dir) -> list[Path]:
    """The five per-channel artifacts as CSV plus their SVG panels."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = result.channel
    files = []

    def put(name: str, text: str):
        path = out_dir / name
        path.write_text(text, encoding="utf-8")
        files.append(path)
        return path

    def put_plot(name: str, series_list, labels, **kw):
        path = out_dir / name
        path.write_bytes(emit_plot(series_list, labels, **kw))
        files.append(path)

    t = time_axis(result.filtered)
    put(f"{stem}_filtered.csv", series_csv_text(result.filtered, "filtered"))
    put_plot(
        f"{stem}_filtered.svg",
        [(t, result.filtered.values)],
        ["filtered"],
        title=f"{stem}: bandpass-filtered signal",
        y_label="amplitude (mV)",
    )
    put(f"{stem}_rectified.csv", series_csv_text(result.rectified, "rectified"))
    put_plot(
        f"{stem}_rectified.svg",
        [(t, result.rectified.values)],
        ["rectified"],
        title=f"{stem}: full-wave rectified signal",
        y_label="amplitude (mV)",
    )
    put(f"{stem}_rms.csv", series_csv_text(result.rms_envelope, "rms"))
    put_plot(
        f"{stem}_rms.svg",
        [(t, result.rms_envelope.values)],
        ["RMS"],
        title=f"{stem}: moving-RMS envelope",
        y_label="RMS (mV)",
    )
    if result.mdf_track is not None:
        put(f"{stem}_mdf.csv", series_csv_text(result.mdf_track, "mdf_hz"))
        put_plot(
            f"{stem}_mdf.svg",
            [(time_axis(result.mdf_track), result.mdf_track.values)],
            ["MDF"],
            title=f"{stem}: median-frequency trend",
            y_label="frequency (Hz)",
        )
    else:
        put(f"{stem}_mdf.csv", "time,mdf_hz\n")
    put(f"{stem}_psd.csv", spectrum_csv_text(result.psd))
    put_plot(
        f"{stem}_psd.svg",
        [(result.psd.freqs_hz, result.psd.psd)],
        ["PSD"],
        title=f"{stem}: Welch power spectral density",
        x_label="frequency (Hz)",
        y_label="PSD (mV^2/Hz)",
    )
    return files
