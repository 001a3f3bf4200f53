"""Vertical ground-reaction-force analysis: body weight, contact and peak
detection, body-weight-normalized impulses, rates of force development,
loading rate, and two-segment vertical stiffness.

All *_BW quantities are force divided by body weight in newtons
(dimensionless); impulses are BW*s; times are seconds relative to contact
onset, computed at the trace's sampling rate. g = 9.81 m/s^2 throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.signal import find_peaks

from .core import UniformSeries, trim
from .errors import (
    InsufficientDataError,
    NoContactError,
    ParameterError,
    UnstableWindowError,
    ValidationError,
)

G_M_S2 = 9.81

# Output ledger, one row per trial, column names and order fixed.
FORCECUBE_COLUMNS = (
    "FileName",
    "TimeStamp",
    "Trial",
    "BW_kg",
    "SideFoot_RL",
    "Dominance_RL",
    "Quality",
    "Num_Samples",
    "Index_40ms",
    "Index_100ms",
    "Index_ITransient",
    "Index_VIP",
    "Index_Max",
    "Test_Duration_s",
    "CumSum_Times_s",
    "Contact_Time_s",
    "Time_40ms_s",
    "Time_100ms_s",
    "Time_ITransient_s",
    "Time_VIP_s",
    "Time_Peak_VMax_s",
    "VPeak_40ms_BW",
    "VPeak_100ms_BW",
    "Peak_VITransient_BW",
    "Peak_VIP_BW",
    "Peak_VMax_BW",
    "Total_Imp_BW.s",
    "Imp_40ms_BW.s",
    "Imp_100ms_BW.s",
    "Imp_ITransient_BW.s",
    "Imp_Brake_VMax_BW.s",
    "Imp_Propulsion_BW.s",
    "RFD_40ms_BW.s⁻¹",
    "RFD_100ms_BW.s⁻¹",
    "RFD_ITransient_BW.s⁻¹",
    "RFD_Brake_VMax_BW.s⁻¹",
    "RFD_Propulsion_BW.s⁻¹",
    "Simple_stiffness_constant",
    "High_stiffness",
    "Low_stiffness",
    "Transition_time",
    "Average_loading_rate",
)


@dataclass(frozen=True)
class ContactConfig:
    threshold_n: float = 20.0
    hold_ms: float = 10.0


@dataclass(frozen=True)
class ForceSelections:
    """Per-trial inputs: quiet-standing window, analysis windows, peak picks."""

    bw_window: tuple  # (start_s, end_s)
    analysis_windows: tuple = ()
    picked_peaks: tuple | None = None  # absolute sample indices, ascending
    side_foot: str = ""
    dominance: str = ""
    quality: float | None = None
    trial: int = 1

    def __post_init__(self):
        if self.quality is not None and not (0 <= self.quality <= 10):
            raise ValidationError(f"quality must be within 0-10, got {self.quality}")
        for a, b in self.analysis_windows:
            if not (a < b):
                raise ValidationError(f"analysis window ({a}, {b}) is inverted")


@dataclass(frozen=True)
class ForceContact:
    onset: int
    toeoff: int


@dataclass(frozen=True)
class ForceLandmarks:
    itransient: int
    vip: int
    vmax: int


def body_weight(fz: UniformSeries, bw_window: tuple) -> tuple:
    """(BW in newtons, BW in kg) from the mean over a quiet-standing window."""
    start, end = bw_window
    if end - start < 0.2:
        raise ParameterError(
            f"body-weight window of {end - start:.3f} s is shorter than 0.2 s"
        )
    window = trim(fz, start, end)
    mean = float(window.values.mean())
    std = float(window.values.std())
    if mean <= 0:
        raise UnstableWindowError(f"body-weight window mean {mean:.1f} N is not positive")
    if std > 0.05 * mean:
        raise UnstableWindowError(
            f"body-weight window is not quiet standing "
            f"(std {std:.1f} N > 5% of mean {mean:.1f} N)"
        )
    return mean, mean / G_M_S2


def _first_sustained(mask: np.ndarray, hold: int, start: int = 0) -> int | None:
    if hold <= 1:
        hits = np.flatnonzero(mask[start:])
        return start + int(hits[0]) if hits.size else None
    ok = np.convolve(mask.astype(int), np.ones(hold, dtype=int), mode="valid") == hold
    hits = np.flatnonzero(ok[start:])
    return start + int(hits[0]) if hits.size else None


def detect_contact(
    fz: UniformSeries, bw_n: float, cfg: ContactConfig = ContactConfig()
) -> ForceContact:
    """Threshold crossing with sustained-hold debouncing.

    Onset is the first sample above threshold that stays above for hold_ms;
    toe-off is the first later sample below threshold that stays below.
    """
    if bw_n <= 0:
        raise ParameterError(f"body weight must be positive, got {bw_n}")
    hold = max(1, int(round(cfg.hold_ms / 1000.0 * fz.rate_hz)))
    above = fz.values > cfg.threshold_n
    onset = _first_sustained(above, hold)
    if onset is None:
        raise NoContactError(
            f"no {cfg.hold_ms} ms sustained crossing of {cfg.threshold_n} N"
        )
    toeoff = _first_sustained(~above, hold, start=onset + 1)
    if toeoff is None:
        raise NoContactError(
            f"no sustained return below {cfg.threshold_n} N after onset"
        )
    return ForceContact(onset=onset, toeoff=toeoff)


def detect_force_landmarks(
    fz: UniformSeries,
    contact: ForceContact,
    bw_n: float,
    picked_peaks=None,
    vip_window_fraction: float = 0.3,
    itransient_window_ms: float = 50.0,
    vip_prominence_bw: float = 0.1,
) -> ForceLandmarks:
    """Impact transient, vertical impact peak and absolute maximum.

    User picks (from the interactive selection step) take precedence over
    the automatic rules and are used verbatim after range validation: three
    picks map to (itransient, vip, max); two to (itransient=vip, max); one
    to all three. A single-peak trace degenerates to itransient = vip = max.
    """
    onset, toeoff = contact.onset, contact.toeoff
    if not (0 <= onset < toeoff < len(fz)):
        raise ValidationError(f"contact [{onset}, {toeoff}] outside trace of {len(fz)}")
    if picked_peaks is not None:
        picks = sorted(int(p) for p in picked_peaks)
        if not 1 <= len(picks) <= 3:
            raise ValidationError(f"expected 1-3 picked peaks, got {len(picks)}")
        for p in picks:
            if not (onset <= p <= toeoff):
                raise ValidationError(
                    f"picked index {p} outside contact [{onset}, {toeoff}]"
                )
        if len(picks) == 3:
            return ForceLandmarks(*picks)
        if len(picks) == 2:
            return ForceLandmarks(picks[0], picks[0], picks[1])
        return ForceLandmarks(picks[0], picks[0], picks[0])

    seg = fz.values[onset : toeoff + 1]
    i_max = onset + int(np.argmax(seg))
    peaks, _ = find_peaks(seg, prominence=vip_prominence_bw * bw_n)
    vip_limit = onset + int(vip_window_fraction * (toeoff - onset))
    vip_candidates = [onset + int(p) for p in peaks if onset + p <= vip_limit]
    vip = vip_candidates[0] if vip_candidates else i_max
    any_peaks, _ = find_peaks(seg)
    itr_limit = onset + int(round(itransient_window_ms / 1000.0 * fz.rate_hz))
    itr_candidates = [onset + int(p) for p in any_peaks if onset + p <= itr_limit]
    itransient = itr_candidates[0] if itr_candidates else vip
    return ForceLandmarks(itransient=itransient, vip=vip, vmax=i_max)


def _segment_fit_stats(x: np.ndarray, y: np.ndarray):
    """Prefix/suffix least-squares slope and SSE for every breakpoint, O(n)."""
    n = len(x)
    ones = np.arange(1, n + 1, dtype=float)
    Sx = np.cumsum(x)
    Sy = np.cumsum(y)
    Sxx = np.cumsum(x * x)
    Sxy = np.cumsum(x * y)
    Syy = np.cumsum(y * y)

    def stats(m, sx, sy, sxx, sxy, syy):
        with np.errstate(divide="ignore", invalid="ignore"):
            denom = m * sxx - sx * sx
            slope = (m * sxy - sx * sy) / denom
            sse = (syy - sy * sy / m) - slope * (sxy - sx * sy / m)
        bad = ~np.isfinite(slope)
        slope[bad] = np.nan
        sse[bad] = np.inf
        return slope, np.maximum(sse, 0.0)

    slope_pre, sse_pre = stats(ones, Sx, Sy, Sxx, Sxy, Syy)
    mT, sxT, syT, sxxT, sxyT, syyT = n, Sx[-1], Sy[-1], Sxx[-1], Sxy[-1], Syy[-1]
    # suffix starting at index k (inclusive) = totals minus prefix[k-1]
    m_suf = mT - ones + 1
    sx_suf = sxT - np.concatenate(([0.0], Sx[:-1]))
    sy_suf = syT - np.concatenate(([0.0], Sy[:-1]))
    sxx_suf = sxxT - np.concatenate(([0.0], Sxx[:-1]))
    sxy_suf = sxyT - np.concatenate(([0.0], Sxy[:-1]))
    syy_suf = syyT - np.concatenate(([0.0], Syy[:-1]))
    slope_suf, sse_suf = stats(m_suf, sx_suf, sy_suf, sxx_suf, sxy_suf, syy_suf)
    return slope_pre, sse_pre, slope_suf, sse_suf


def two_segment_stiffness(
    fz: UniformSeries, bw_n: float, contact: ForceContact, vmax_index: int | None = None
) -> dict:
    """Stiffness of the loading phase from force vs integrated displacement.

    Center-of-mass compression comes from double trapezoidal integration of
    a = Fz/m - g with zero initial velocity and displacement at onset (no
    kinematic input needed). The loading phase runs onset -> force maximum.
    Low/High are the slopes of the earlier/later loading segment from an
    exhaustive two-segment breakpoint search; Transition_time is the
    breakpoint in seconds after onset.
    """
    mass = bw_n / G_M_S2
    onset = contact.onset
    i_max = (
        vmax_index
        if vmax_index is not None
        else onset + int(np.argmax(fz.values[onset : contact.toeoff + 1]))
    )
    load = fz.values[onset : i_max + 1]
    n = len(load)
    if n < 10:
        raise InsufficientDataError(
            f"loading phase of {n} samples is too short for a stiffness fit (needs >= 10)"
        )
    dt = 1.0 / fz.rate_hz
    accel = load / mass - G_M_S2
    vel = cumulative_trapezoid(accel, dx=dt, initial=0.0)
    disp = cumulative_trapezoid(vel, dx=dt, initial=0.0)
    compression = -disp  # downward CoM travel, positive during loading

    x = compression
    y = load
    denom = n * np.sum(x * x) - np.sum(x) ** 2
    if abs(denom) < 1e-30:
        raise InsufficientDataError("no compression range to fit stiffness against")
    simple = (n * np.sum(x * y) - np.sum(x) * np.sum(y)) / denom

    slope_pre, sse_pre, slope_suf, sse_suf = _segment_fit_stats(x, y)
    # breakpoint k: first segment [0..k], second [k..n-1]; interior only
    ks = np.arange(2, n - 2)
    total_sse = sse_pre[ks] + sse_suf[ks]
    best = int(ks[np.argmin(total_sse)])
    low = float(slope_pre[best])
    high = float(slope_suf[best])
    return {
        "Simple_stiffness_constant": float(simple),
        "Low_stiffness": low,
        "High_stiffness": high,
        "Transition_time": best * dt,
        "transition_index": onset + best,
    }


def _trapz_bw(fz: UniformSeries, bw_n: float, a: int, b: int) -> float:
    return float(
        np.trapezoid(fz.values[a : b + 1] / bw_n, dx=1.0 / fz.rate_hz)
    )


def compute_metrics(
    fz: UniformSeries,
    selections: ForceSelections,
    contact: ForceContact,
    landmarks: ForceLandmarks,
    bw_n: float,
    file_name: str = "",
    timestamp: str = "",
    prior_contact_time_s: float = 0.0,
) -> tuple[dict, dict]:
    """Assemble the full output row. Per-field failures (degenerate
    intervals, landmarks outside the trace) are recorded in the returned
    error map and the field is emitted as NaN; the row always comes out.
    """
    rate = fz.rate_hz
    onset, toeoff = contact.onset, contact.toeoff
    for name, idx in (
        ("Index_ITransient", landmarks.itransient),
        ("Index_VIP", landmarks.vip),
        ("Index_Max", landmarks.vmax),
    ):
        if not (onset <= idx <= toeoff):
            raise ValidationError(f"{name}={idx} outside contact [{onset}, {toeoff}]")
    n = len(fz)
    i40 = onset + int(round(0.040 * rate))
    i100 = onset + int(round(0.100 * rate))
    errors: dict = {}
    row: dict = {col: math.nan for col in FORCECUBE_COLUMNS}
    row.update(
        {
            "FileName": file_name,
            "TimeStamp": timestamp,
            "Trial": selections.trial,
            "BW_kg": bw_n / G_M_S2,
            "SideFoot_RL": selections.side_foot,
            "Dominance_RL": selections.dominance,
            "Quality": "" if selections.quality is None else selections.quality,
            "Num_Samples": n,
            "Index_40ms": i40,
            "Index_100ms": i100,
            "Index_ITransient": landmarks.itransient,
            "Index_VIP": landmarks.vip,
            "Index_Max": landmarks.vmax,
            "Test_Duration_s": n / rate,
            "Contact_Time_s": (toeoff - onset) / rate,
            "CumSum_Times_s": prior_contact_time_s + (toeoff - onset) / rate,
            "Time_40ms_s": (i40 - onset) / rate,
            "Time_100ms_s": (i100 - onset) / rate,
            "Time_ITransient_s": (landmarks.itransient - onset) / rate,
            "Time_VIP_s": (landmarks.vip - onset) / rate,
            "Time_Peak_VMax_s": (landmarks.vmax - onset) / rate,
        }
    )

    def force_at(col: str, idx: int):
        if 0 <= idx < n:
            row[col] = fz.values[idx] / bw_n
        else:
            errors[col] = f"index {idx} outside trace of {n} samples"

    force_at("VPeak_40ms_BW", i40)
    force_at("VPeak_100ms_BW", i100)
    force_at("Peak_VITransient_BW", landmarks.itransient)
    force_at("Peak_VIP_BW", landmarks.vip)
    force_at("Peak_VMax_BW", landmarks.vmax)

    intervals = {
        "Total": (onset, toeoff),
        "40ms": (onset, i40),
        "100ms": (onset, i100),
        "ITransient": (onset, landmarks.itransient),
        "Brake_VMax": (onset, landmarks.vmax),
        "Propulsion": (landmarks.vmax, toeoff),
    }
    imp_cols = {
        "Total": "Total_Imp_BW.s",
        "40ms": "Imp_40ms_BW.s",
        "100ms": "Imp_100ms_BW.s",
        "ITransient": "Imp_ITransient_BW.s",
        "Brake_VMax": "Imp_Brake_VMax_BW.s",
        "Propulsion": "Imp_Propulsion_BW.s",
    }
    rfd_cols = {
        "40ms": "RFD_40ms_BW.s⁻¹",
        "100ms": "RFD_100ms_BW.s⁻¹",
        "ITransient": "RFD_ITransient_BW.s⁻¹",
        "Brake_VMax": "RFD_Brake_VMax_BW.s⁻¹",
        "Propulsion": "RFD_Propulsion_BW.s⁻¹",
    }
    for key, (a, b) in intervals.items():
        imp_col = imp_cols[key]
        if not (0 <= a <= b < n):
            errors[imp_col] = f"interval [{a}, {b}] outside trace"
            continue
        if a == b:
            errors[imp_col] = "degenerate interval (dt = 0)"
        else:
            row[imp_col] = _trapz_bw(fz, bw_n, a, b)
        if key in rfd_cols:
            rfd_col = rfd_cols[key]
            if a == b:
                errors[rfd_col] = "degenerate interval (dt = 0)"
            else:
                row[rfd_col] = float(
                    (fz.values[b] - fz.values[a]) / ((b - a) / rate * bw_n)
                )

    try:
        stiff = two_segment_stiffness(fz, bw_n, contact, vmax_index=landmarks.vmax)
        for col in (
            "Simple_stiffness_constant",
            "High_stiffness",
            "Low_stiffness",
            "Transition_time",
        ):
            row[col] = stiff[col]
    except InsufficientDataError as exc:
        for col in (
            "Simple_stiffness_constant",
            "High_stiffness",
            "Low_stiffness",
            "Transition_time",
        ):
            errors[col] = str(exc)

    try:
        row["Average_loading_rate"] = average_loading_rate(
            fz, bw_n, onset, landmarks.vip
        )
    except (ParameterError, InsufficientDataError) as exc:
        errors["Average_loading_rate"] = str(exc)

    return row, errors


def average_loading_rate(
    fz: UniformSeries, bw_n: float, onset: int, vip: int
) -> float:
    """Least-squares slope of Fz/BW between 20% and 80% of the impact-peak
    force on the rising limb, in BW/s."""
    if vip <= onset:
        raise ParameterError("impact peak does not follow onset")
    v = fz.values[onset : vip + 1] / bw_n
    peak = v[-1]
    if peak <= 0:
        raise ParameterError("impact-peak force is not positive")
    k20 = np.flatnonzero(v >= 0.2 * peak)
    k80 = np.flatnonzero(v >= 0.8 * peak)
    if k20.size == 0 or k80.size == 0 or k80[0] <= k20[0]:
        raise InsufficientDataError("no rising 20-80% span before the impact peak")
    a, b = int(k20[0]), int(k80[0])
    t = np.arange(a, b + 1) / fz.rate_hz
    slope = np.polyfit(t, v[a : b + 1], 1)[0]
    return float(slope)


def results_csv_text(rows: list[dict]) -> str:
    lines = [",".join(FORCECUBE_COLUMNS)]
    for row in rows:
        cells = []
        for col in FORCECUBE_COLUMNS:
            v = row.get(col, "")
            if isinstance(v, float):
                cells.append("" if math.isnan(v) else f"{v:.9g}")
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
