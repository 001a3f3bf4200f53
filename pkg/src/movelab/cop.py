"""Center-of-pressure posturography: sway metrics, 95% confidence ellipse,
spectral descriptors, and the five-artifact report.

Directions follow force-plate convention: Cx mediolateral, Cy
anteroposterior, both in centimeters. Spectral descriptors are computed on
demeaned signals over the 0.15-5 Hz band; the 95% ellipse uses the
chi-square(2 dof) scaling constant 5.991 (large-sample convention).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import UniformSeries, time_axis
from .dsp import (
    Spectrum,
    butter_design,
    filtfilt,
    power_quantile_frequency,
    spectral_moments,
    welch_psd,
)
from .errors import ParameterError, ValidationError
from .svgplot import emit_plot

ELLIPSE_CHI2_95 = 5.991  # chi-square 95% quantile, 2 dof
SPECTRAL_BAND_HZ = (0.15, 5.0)
DEFAULT_LOWPASS_HZ = 10.0
DEFAULT_LOWPASS_ORDER = 4
# long Welch segments so the 0.15 Hz band edge stays resolvable
DEFAULT_SEGMENT_LEN = 1024

COP_METRIC_COLUMNS = (
    "trial",
    "n_samples",
    "duration_s",
    "mean_ml_cm",
    "mean_ap_cm",
    "rms_ml_cm",
    "rms_ap_cm",
    "amplitude_ml_cm",
    "amplitude_ap_cm",
    "total_path_length_cm",
    "mean_speed_cm_s",
    "mean_speed_ml_cm_s",
    "mean_speed_ap_cm_s",
    "ellipse_center_ml_cm",
    "ellipse_center_ap_cm",
    "ellipse_semi_major_cm",
    "ellipse_semi_minor_cm",
    "ellipse_angle_deg",
    "ellipse_area_cm2",
    "ellipse_degenerate",
    "total_power_ml",
    "centroidal_freq_ml_hz",
    "median_freq_ml_hz",
    "f95_ml_hz",
    "freq_dispersion_ml",
    "total_power_ap",
    "centroidal_freq_ap_hz",
    "median_freq_ap_hz",
    "f95_ap_hz",
    "freq_dispersion_ap",
)


@dataclass(frozen=True)
class CopTrial:
    """One balance trial: mediolateral and anteroposterior CoP tracks in cm."""

    cx: UniformSeries
    cy: UniformSeries

    def __post_init__(self):
        if len(self.cx) != len(self.cy):
            raise ValidationError(
                f"cx has {len(self.cx)} samples, cy has {len(self.cy)}"
            )
        if abs(self.cx.rate_hz - self.cy.rate_hz) > 1e-9:
            raise ValidationError("cx and cy must share a sampling rate")

    @property
    def rate_hz(self) -> float:
        return self.cx.rate_hz

    @property
    def duration_s(self) -> float:
        return self.cx.duration_s


@dataclass(frozen=True)
class EllipseFit:
    center: tuple
    semi_major: float
    semi_minor: float
    angle_deg: float
    area: float
    degenerate: bool


def preprocess_cop(
    trial: CopTrial,
    lowpass_hz: float | None = DEFAULT_LOWPASS_HZ,
    order: int = DEFAULT_LOWPASS_ORDER,
) -> CopTrial:
    """Optional zero-phase lowpass; pass lowpass_hz=None to skip filtering."""
    if trial.rate_hz <= 0:
        raise ParameterError("rate must be positive")
    if lowpass_hz is None:
        return trial
    coeffs = butter_design("lowpass", order, lowpass_hz, trial.rate_hz)
    return CopTrial(cx=filtfilt(coeffs, trial.cx), cy=filtfilt(coeffs, trial.cy))


def sway_metrics(trial: CopTrial) -> dict:
    """Time-domain sway metrics; RMS is computed on demeaned tracks."""
    if len(trial.cx) < 2:
        raise ParameterError("sway metrics need at least 2 samples")
    cx = trial.cx.values
    cy = trial.cy.values
    dx = np.diff(cx)
    dy = np.diff(cy)
    path = float(np.sum(np.hypot(dx, dy)))
    duration = trial.duration_s
    mean_ml = float(cx.mean())
    mean_ap = float(cy.mean())
    return {
        "mean_ml_cm": mean_ml,
        "mean_ap_cm": mean_ap,
        "rms_ml_cm": float(np.sqrt(np.mean((cx - mean_ml) ** 2))),
        "rms_ap_cm": float(np.sqrt(np.mean((cy - mean_ap) ** 2))),
        "amplitude_ml_cm": float(cx.max() - cx.min()),
        "amplitude_ap_cm": float(cy.max() - cy.min()),
        "total_path_length_cm": path,
        "mean_speed_cm_s": path / duration,
        "mean_speed_ml_cm_s": float(np.sum(np.abs(dx))) / duration,
        "mean_speed_ap_cm_s": float(np.sum(np.abs(dy))) / duration,
    }


def ellipse_95(trial: CopTrial) -> EllipseFit:
    """95% confidence ellipse from the eigen-decomposition of the 2x2 covariance.

    Collinear data yields a degenerate fit (minor axis 0, flagged) instead of
    an error.
    """
    cx = trial.cx.values
    cy = trial.cy.values
    if len(cx) < 3:
        raise ParameterError("ellipse fit needs at least 3 samples")
    cov = np.cov(np.vstack([cx, cy]))
    evals, evecs = np.linalg.eigh(cov)  # ascending
    evals = np.maximum(evals, 0.0)
    major_val = evals[1]
    minor_val = evals[0]
    major_vec = evecs[:, 1]
    angle = math.degrees(math.atan2(major_vec[1], major_vec[0]))
    if angle <= -90.0:
        angle += 180.0
    elif angle > 90.0:
        angle -= 180.0
    rel_minor = minor_val / major_val if major_val > 0 else 0.0
    degenerate = major_val <= 0 or rel_minor < 1e-12
    return EllipseFit(
        center=(float(cx.mean()), float(cy.mean())),
        semi_major=float(np.sqrt(ELLIPSE_CHI2_95 * major_val)),
        semi_minor=float(np.sqrt(ELLIPSE_CHI2_95 * minor_val)),
        angle_deg=float(angle),
        area=float(np.pi * ELLIPSE_CHI2_95 * np.sqrt(major_val * minor_val)),
        degenerate=bool(degenerate),
    )


def spectral_descriptors(
    spec: Spectrum, band_hz: tuple[float, float] = SPECTRAL_BAND_HZ
) -> dict:
    """Moment-based descriptors over the analysis band.

    total power = mu0; centroidal frequency = sqrt(mu2/mu0); dispersion =
    sqrt(1 - mu1^2/(mu0*mu2)), which is 0 for a pure tone and 0.5 for a flat
    band.
    """
    mu0, mu1, mu2 = spectral_moments(spec, band_hz=band_hz)
    if mu0 <= 0 or mu2 <= 0:
        from .errors import DegenerateSpectrumError

        raise DegenerateSpectrumError(
            f"no spectral power inside the {band_hz} Hz band"
        )
    lo, hi = band_hz
    sel = (spec.freqs_hz >= lo - 1e-12) & (spec.freqs_hz <= hi + 1e-12)
    band_spec = Spectrum(
        freqs_hz=spec.freqs_hz[sel] - spec.freqs_hz[sel][0],
        psd=spec.psd[sel],
        df=spec.df,
        segment_len=spec.segment_len,
        overlap=spec.overlap,
        window_kind=spec.window_kind,
    )
    f_offset = spec.freqs_hz[sel][0]
    return {
        "total_power": mu0,
        "centroidal_freq_hz": float(np.sqrt(mu2 / mu0)),
        "median_freq_hz": f_offset + power_quantile_frequency(band_spec, 0.5),
        "f95_hz": f_offset + power_quantile_frequency(band_spec, 0.95),
        "freq_dispersion": float(np.sqrt(max(0.0, 1.0 - mu1**2 / (mu0 * mu2)))),
    }


def cop_frequency_metrics(
    trial: CopTrial,
    segment_len: int = DEFAULT_SEGMENT_LEN,
    overlap: float = 0.5,
    band_hz: tuple[float, float] = SPECTRAL_BAND_HZ,
) -> tuple[dict, Spectrum, Spectrum]:
    """Per-direction spectral descriptors on demeaned tracks, plus both spectra."""
    seg = min(segment_len, len(trial.cx))
    out = {}
    spectra = []
    for suffix, series in (("ml", trial.cx), ("ap", trial.cy)):
        demeaned = UniformSeries(
            series.values - series.values.mean(), series.rate_hz, series.t0_s
        )
        spec = welch_psd(demeaned, segment_len=seg, overlap_fraction=overlap)
        desc = spectral_descriptors(spec, band_hz=band_hz)
        spectra.append(spec)
        if suffix == "ml":
            out.update(
                {
                    "total_power_ml": desc["total_power"],
                    "centroidal_freq_ml_hz": desc["centroidal_freq_hz"],
                    "median_freq_ml_hz": desc["median_freq_hz"],
                    "f95_ml_hz": desc["f95_hz"],
                    "freq_dispersion_ml": desc["freq_dispersion"],
                }
            )
        else:
            out.update(
                {
                    "total_power_ap": desc["total_power"],
                    "centroidal_freq_ap_hz": desc["centroidal_freq_hz"],
                    "median_freq_ap_hz": desc["median_freq_hz"],
                    "f95_ap_hz": desc["f95_hz"],
                    "freq_dispersion_ap": desc["freq_dispersion"],
                }
            )
    return out, spectra[0], spectra[1]


def compute_cop_metrics(trial: CopTrial, trial_name: str = "trial") -> dict:
    """All CopMetrics fields as a flat dict keyed by COP_METRIC_COLUMNS."""
    metrics = {
        "trial": trial_name,
        "n_samples": len(trial.cx),
        "duration_s": trial.duration_s,
    }
    metrics.update(sway_metrics(trial))
    ellipse = ellipse_95(trial)
    metrics.update(
        {
            "ellipse_center_ml_cm": ellipse.center[0],
            "ellipse_center_ap_cm": ellipse.center[1],
            "ellipse_semi_major_cm": ellipse.semi_major,
            "ellipse_semi_minor_cm": ellipse.semi_minor,
            "ellipse_angle_deg": ellipse.angle_deg,
            "ellipse_area_cm2": ellipse.area,
            "ellipse_degenerate": int(ellipse.degenerate),
        }
    )
    freq, _, _ = cop_frequency_metrics(trial)
    metrics.update(freq)
    return metrics


def _ellipse_polyline(ellipse: EllipseFit, n: int = 128) -> tuple[np.ndarray, np.ndarray]:
    t = np.linspace(0, 2 * np.pi, n)
    ang = math.radians(ellipse.angle_deg)
    ex = ellipse.semi_major * np.cos(t)
    ey = ellipse.semi_minor * np.sin(t)
    x = ellipse.center[0] + ex * math.cos(ang) - ey * math.sin(ang)
    y = ellipse.center[1] + ex * math.sin(ang) + ey * math.cos(ang)
    return x, y


def metrics_csv_text(rows: list[dict]) -> str:
    lines = [",".join(COP_METRIC_COLUMNS)]
    for row in rows:
        cells = []
        for col in COP_METRIC_COLUMNS:
            v = row.get(col, "")
            if isinstance(v, float):
                cells.append(f"{v:.9g}")
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def cop_report(trial: CopTrial, out_dir, stem: str) -> tuple[dict, list[Path]]:
    """Compute metrics and emit the five report artifacts.

    Artifacts: overview plot, final figure (CoP path + 95% ellipse), metrics
    CSV, PSD plot, stabilogram. Returns the metrics and the file list.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = compute_cop_metrics(trial, trial_name=stem)
    freq, spec_ml, spec_ap = cop_frequency_metrics(trial)
    ellipse = ellipse_95(trial)
    t = time_axis(trial.cx)

    files = []

    overview = out_dir / f"{stem}_overview.svg"
    overview.write_bytes(
        emit_plot(
            [(t, trial.cx.values), (t, trial.cy.values)],
            ["Cx (ML)", "Cy (AP)"],
            title=(
                f"path {metrics['total_path_length_cm']:.1f} cm, "
                f"mean speed {metrics['mean_speed_cm_s']:.2f} cm/s, "
                f"ellipse {metrics['ellipse_area_cm2']:.2f} cm^2"
            ),
            y_label="displacement (cm)",
        )
    )
    files.append(overview)

    ex, ey = _ellipse_polyline(ellipse)
    final = out_dir / f"{stem}_final.svg"
    final.write_bytes(
        emit_plot(
            [(trial.cx.values, trial.cy.values), (ex, ey)],
            ["CoP path", "95% ellipse"],
            title="CoP path with 95% ellipse",
            x_label="Cx mediolateral (cm)",
            y_label="Cy anteroposterior (cm)",
        )
    )
    files.append(final)

    metrics_path = out_dir / f"{stem}_metrics.csv"
    metrics_path.write_text(metrics_csv_text([metrics]), encoding="utf-8")
    files.append(metrics_path)

    psd_path = out_dir / f"{stem}_psd.svg"
    psd_path.write_bytes(
        emit_plot(
            [(spec_ml.freqs_hz, spec_ml.psd), (spec_ap.freqs_hz, spec_ap.psd)],
            ["ML", "AP"],
            title="CoP power spectral density",
            x_label="frequency (Hz)",
            y_label="PSD (cm^2/Hz)",
        )
    )
    files.append(psd_path)

    stab_path = out_dir / f"{stem}_stabilogram.svg"
    stab_path.write_bytes(
        emit_plot(
            [(t, trial.cx.values - trial.cx.values.mean()),
             (t, trial.cy.values - trial.cy.values.mean())],
            ["ML (demeaned)", "AP (demeaned)"],
            title="Stabilogram",
            y_label="displacement (cm)",
        )
    )
    files.append(stab_path)

    return metrics, files
