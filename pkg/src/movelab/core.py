"""Shared time-series and geometry value types.

Conventions used everywhere: seconds, meters, newtons; angles are radians
internally and degrees in exported columns. Gaps are explicit NaNs paired
with a boolean gap mask; analyses reject windows containing gaps instead of
interpolating.

All value types are immutable after construction (arrays are marked
read-only) and safe to share between concurrent batch workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, GeometryError, ValidationError, WindowError

ROTATION_TOL = 1e-9
QUAT_NORM_TOL = 1e-9

# Snap tolerance for mapping window edges onto the sample grid, in samples.
_GRID_EPS = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.asarray(a, dtype=float)
    out = out.copy() if not out.flags.owndata else out
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class UniformSeries:
    """One channel of uniformly sampled values.

    Sample k lives at time ``t0_s + k / rate_hz``. ``gap_mask`` marks samples
    that are gaps; NaN values are only legal where the mask is True.
    """

    values: np.ndarray
    rate_hz: float
    t0_s: float = 0.0
    gap_mask: np.ndarray | None = None

    def __post_init__(self):
        if not (self.rate_hz > 0):
            raise ValidationError(f"rate_hz must be > 0, got {self.rate_hz}")
        vals = _readonly(np.atleast_1d(self.values))
        if vals.ndim != 1:
            raise ValidationError("values must be one-dimensional")
        object.__setattr__(self, "values", vals)
        if self.gap_mask is not None:
            mask = np.asarray(self.gap_mask, dtype=bool).copy()
            if mask.shape != vals.shape:
                raise ValidationError("gap_mask must match values in length")
            mask.setflags(write=False)
            object.__setattr__(self, "gap_mask", mask)
        bad = ~np.isfinite(vals)
        if self.gap_mask is None:
            if bad.any():
                raise DataError(
                    f"non-finite sample at index {int(np.flatnonzero(bad)[0])} with no gap mask"
                )
        elif (bad & ~self.gap_mask).any():
            idx = int(np.flatnonzero(bad & ~self.gap_mask)[0])
            raise DataError(f"non-finite sample at index {idx} not covered by gap mask")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def duration_s(self) -> float:
        """Length of the sampled extent, one sample period per sample."""
        return len(self) / self.rate_hz

    @property
    def end_s(self) -> float:
        return self.t0_s + self.duration_s

    def has_gaps(self) -> bool:
        return self.gap_mask is not None and bool(self.gap_mask.any())


def time_axis(series: UniformSeries) -> np.ndarray:
    """Per-sample timestamps: element k equals t0 + k/rate."""
    n = len(series)
    return series.t0_s + np.arange(n) / series.rate_hz


def trim(series: UniformSeries, start_s: float, end_s: float) -> UniformSeries:
    """Samples with time in [start_s, end_s); t0 snaps to the sample grid.

    Raises WindowError when the window is inverted or falls outside the
    series extent.
    """
    if not (start_s < end_s):
        raise WindowError(f"inverted window: start {start_s} >= end {end_s}")
    if start_s < series.t0_s - _GRID_EPS / series.rate_hz or end_s > series.end_s + _GRID_EPS:
        raise WindowError(
            f"window [{start_s}, {end_s}) outside series extent "
            f"[{series.t0_s}, {series.end_s})"
        )
    rel_start = (start_s - series.t0_s) * series.rate_hz
    rel_end = (end_s - series.t0_s) * series.rate_hz
    k_start = int(np.ceil(rel_start - _GRID_EPS))
    k_end = int(np.ceil(rel_end - _GRID_EPS))
    k_start = max(k_start, 0)
    k_end = min(k_end, len(series))
    if k_end <= k_start:
        raise WindowError(f"window [{start_s}, {end_s}) contains no samples")
    mask = None if series.gap_mask is None else series.gap_mask[k_start:k_end]
    return UniformSeries(
        values=series.values[k_start:k_end].copy(),
        rate_hz=series.rate_hz,
        t0_s=series.t0_s + k_start / series.rate_hz,
        gap_mask=mask,
    )


def require_no_gaps(series: UniformSeries, context: str = "analysis window") -> None:
    if series.has_gaps():
        raise DataError(f"{context} contains gaps; gap interpolation is not supported")


@dataclass(frozen=True)
class MarkerFrameSet:
    """Time-indexed 3D positions of named markers.

    ``positions`` has shape (frames, markers, 3); a gap is a frame/marker
    slot whose three coordinates are all NaN. Units are meters unless the
    producing loader says otherwise.
    """

    marker_names: tuple[str, ...]
    positions: np.ndarray
    rate_hz: float

    def __post_init__(self):
        names = tuple(str(n) for n in self.marker_names)
        object.__setattr__(self, "marker_names", names)
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 3 or pos.shape[2] != 3:
            raise ValidationError(f"positions must be (frames, markers, 3), got {pos.shape}")
        if pos.shape[1] != len(names):
            raise ValidationError(
                f"{len(names)} marker names but {pos.shape[1]} position columns"
            )
        if len(set(names)) != len(names):
            raise ValidationError("marker names must be unique")
        if not (self.rate_hz > 0):
            raise ValidationError(f"rate_hz must be > 0, got {self.rate_hz}")
        partial = np.isnan(pos).any(axis=2) & ~np.isnan(pos).all(axis=2)
        if partial.any():
            f, m = np.argwhere(partial)[0]
            raise ValidationError(
                f"marker {names[m]!r} frame {f}: gaps must blank all three coordinates"
            )
        pos = pos.copy() if not pos.flags.owndata else pos
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def n_frames(self) -> int:
        return self.positions.shape[0]

    @property
    def n_markers(self) -> int:
        return self.positions.shape[1]

    def gap_mask(self) -> np.ndarray:
        """(frames, markers) boolean mask of gap slots."""
        return np.isnan(self.positions).all(axis=2)

    def marker(self, name: str) -> np.ndarray:
        try:
            i = self.marker_names.index(name)
        except ValueError:
            raise KeyError(f"unknown marker {name!r}") from None
        return self.positions[:, i, :]


def is_rotation(R: np.ndarray, tol: float = ROTATION_TOL) -> bool:
    """True when R is orthonormal with determinant +1 within tol."""
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.isfinite(R).all():
        return False
    err = np.abs(R.T @ R - np.eye(3)).max()
    return bool(err < tol and abs(np.linalg.det(R) - 1.0) < tol)


def require_rotation(R: np.ndarray, tol: float = ROTATION_TOL) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if not is_rotation(R, tol):
        raise ValidationError("matrix is not a proper rotation (orthonormal, det +1)")
    return R


def quat_normalize(q: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) with the w >= 0 sign convention."""
    q = np.asarray(q, dtype=float)
    n = float(np.linalg.norm(q))
    if n < 1e-300 or not np.isfinite(n):
        raise GeometryError("cannot normalize a zero quaternion")
    q = q / n
    if q[0] < 0:
        q = -q
    return q
