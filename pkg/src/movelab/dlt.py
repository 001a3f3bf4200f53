"""Direct linear transformation: planar (8-parameter) and volumetric
(11-parameter) camera calibration and point reconstruction.

Linear systems are solved with SVD-backed least squares rather than normal
equations so near-coplanar control volumes degrade gracefully into an
explicit conditioning diagnostic instead of silent noise amplification.
Time-varying (per frame) calibrations support moving cameras.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import MarkerFrameSet
from .errors import CalibrationError, CoverageError, ReconstructionError

CONDITION_LIMIT = 1e8


@dataclass(frozen=True)
class Dlt2dParams:
    """Planar projective map u = (L1 x + L2 y + L3)/(L7 x + L8 y + 1)."""

    L: np.ndarray  # 8 coefficients
    residual_rms: float
    condition: float

    def __post_init__(self):
        L = np.asarray(self.L, dtype=float)
        if L.shape != (8,):
            raise CalibrationError(f"expected 8 coefficients, got {L.shape}")
        if not np.isfinite(L).all():
            raise CalibrationError("non-finite calibration coefficients")
        object.__setattr__(self, "L", L)


@dataclass(frozen=True)
class Dlt3dParams:
    """Volumetric projective map u = (L1 X + L2 Y + L3 Z + L4)/(L9 X + L10 Y + L11 Z + 1)."""

    L: np.ndarray  # 11 coefficients
    residual_rms: float
    condition: float

    def __post_init__(self):
        L = np.asarray(self.L, dtype=float)
        if L.shape != (11,):
            raise CalibrationError(f"expected 11 coefficients, got {L.shape}")
        if not np.isfinite(L).all():
            raise CalibrationError("non-finite calibration coefficients")
        object.__setattr__(self, "L", L)


def project_2d(params: Dlt2dParams, xy: np.ndarray) -> np.ndarray:
    """Forward map of planar object points (n, 2) to image points (n, 2)."""
    xy = np.atleast_2d(np.asarray(xy, dtype=float))
    L = params.L
    den = L[6] * xy[:, 0] + L[7] * xy[:, 1] + 1.0
    u = (L[0] * xy[:, 0] + L[1] * xy[:, 1] + L[2]) / den
    v = (L[3] * xy[:, 0] + L[4] * xy[:, 1] + L[5]) / den
    return np.column_stack([u, v])


def project_3d(params: Dlt3dParams, xyz: np.ndarray) -> np.ndarray:
    """Forward map of object points (n, 3) to image points (n, 2)."""
    xyz = np.atleast_2d(np.asarray(xyz, dtype=float))
    L = params.L
    den = L[8] * xyz[:, 0] + L[9] * xyz[:, 1] + L[10] * xyz[:, 2] + 1.0
    u = (L[0] * xyz[:, 0] + L[1] * xyz[:, 1] + L[2] * xyz[:, 2] + L[3]) / den
    v = (L[4] * xyz[:, 0] + L[5] * xyz[:, 1] + L[6] * xyz[:, 2] + L[7]) / den
    return np.column_stack([u, v])


def _lstsq(A: np.ndarray, rhs: np.ndarray) -> tuple[np.ndarray, float]:
    sv = np.linalg.svd(A, compute_uv=False)
    condition = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    return sol, condition


def dlt2d_calibrate(object_pts, image_pts) -> Dlt2dParams:
    """Fit the 8 planar coefficients from >= 4 non-collinear point pairs."""
    obj = np.atleast_2d(np.asarray(object_pts, dtype=float))
    img = np.atleast_2d(np.asarray(image_pts, dtype=float))
    if obj.shape[0] != img.shape[0]:
        raise CalibrationError(
            f"{obj.shape[0]} object points but {img.shape[0]} image points"
        )
    if obj.shape[0] < 4:
        raise CalibrationError(f"planar calibration needs >= 4 points, got {obj.shape[0]}")
    if obj.shape[1] != 2 or img.shape[1] != 2:
        raise CalibrationError("planar calibration takes (x, y) and (u, v) pairs")
    n = obj.shape[0]
    A = np.zeros((2 * n, 8))
    rhs = np.zeros(2 * n)
    x, y = obj[:, 0], obj[:, 1]
    u, v = img[:, 0], img[:, 1]
    A[0::2, 0] = x
    A[0::2, 1] = y
    A[0::2, 2] = 1.0
    A[0::2, 6] = -u * x
    A[0::2, 7] = -u * y
    A[1::2, 3] = x
    A[1::2, 4] = y
    A[1::2, 5] = 1.0
    A[1::2, 6] = -v * x
    A[1::2, 7] = -v * y
    rhs[0::2] = u
    rhs[1::2] = v
    sol, condition = _lstsq(A, rhs)
    if condition > CONDITION_LIMIT:
        raise CalibrationError(
            f"ill-conditioned planar calibration (condition {condition:.2e}); "
            "control points are collinear or nearly so"
        )
    params = Dlt2dParams(L=sol, residual_rms=0.0, condition=condition)
    resid = project_2d(params, obj) - img
    rms = float(np.sqrt(np.mean(np.sum(resid**2, axis=1))))
    return Dlt2dParams(L=sol, residual_rms=rms, condition=condition)


def dlt2d_reconstruct(params: Dlt2dParams, uv) -> np.ndarray:
    """Invert the planar map for one image point; fails on horizon points."""
    u, v = np.asarray(uv, dtype=float)
    L = params.L
    A = np.array(
        [
            [L[0] - u * L[6], L[1] - u * L[7]],
            [L[3] - v * L[6], L[4] - v * L[7]],
        ]
    )
    rhs = np.array([u - L[2], v - L[5]])
    det = np.linalg.det(A)
    if not np.isfinite(det) or abs(det) < 1e-12 * max(1.0, np.abs(A).max() ** 2):
        raise ReconstructionError(f"image point ({u}, {v}) maps to the horizon")
    return np.linalg.solve(A, rhs)


def dlt3d_calibrate(object_pts, image_pts) -> Dlt3dParams:
    """Fit the 11 volumetric coefficients from >= 6 non-coplanar point pairs."""
    obj = np.atleast_2d(np.asarray(object_pts, dtype=float))
    img = np.atleast_2d(np.asarray(image_pts, dtype=float))
    if obj.shape[0] != img.shape[0]:
        raise CalibrationError(
            f"{obj.shape[0]} object points but {img.shape[0]} image points"
        )
    if obj.shape[0] < 6:
        raise CalibrationError(f"volumetric calibration needs >= 6 points, got {obj.shape[0]}")
    if obj.shape[1] != 3 or img.shape[1] != 2:
        raise CalibrationError("volumetric calibration takes (x, y, z) and (u, v) pairs")
    n = obj.shape[0]
    A = np.zeros((2 * n, 11))
    rhs = np.zeros(2 * n)
    X, Y, Z = obj[:, 0], obj[:, 1], obj[:, 2]
    u, v = img[:, 0], img[:, 1]
    A[0::2, 0] = X
    A[0::2, 1] = Y
    A[0::2, 2] = Z
    A[0::2, 3] = 1.0
    A[0::2, 8] = -u * X
    A[0::2, 9] = -u * Y
    A[0::2, 10] = -u * Z
    A[1::2, 4] = X
    A[1::2, 5] = Y
    A[1::2, 6] = Z
    A[1::2, 7] = 1.0
    A[1::2, 8] = -v * X
    A[1::2, 9] = -v * Y
    A[1::2, 10] = -v * Z
    rhs[0::2] = u
    rhs[1::2] = v
    sol, condition = _lstsq(A, rhs)
    if condition > CONDITION_LIMIT:
        raise CalibrationError(
            f"ill-conditioned volumetric calibration (condition {condition:.2e}); "
            "control points are coplanar or nearly so"
        )
    params = Dlt3dParams(L=sol, residual_rms=0.0, condition=condition)
    resid = project_3d(params, obj) - img
    rms = float(np.sqrt(np.mean(np.sum(resid**2, axis=1))))
    return Dlt3dParams(L=sol, residual_rms=rms, condition=condition)


def dlt3d_reconstruct(views: list[tuple[Dlt3dParams, np.ndarray]]) -> tuple[np.ndarray, float]:
    """Triangulate one 3D point from (params, (u, v)) pairs of >= 2 views.

    Returns the point and the image-space residual RMS of the stacked system.
    """
    if len(views) < 2:
        raise ReconstructionError(f"3D reconstruction needs >= 2 views, got {len(views)}")
    A = np.zeros((2 * len(views), 3))
    rhs = np.zeros(2 * len(views))
    for i, (params, uv) in enumerate(views):
        L = params.L
        u, v = np.asarray(uv, dtype=float)
        A[2 * i] = [L[0] - u * L[8], L[1] - u * L[9], L[2] - u * L[10]]
        A[2 * i + 1] = [L[4] - v * L[8], L[5] - v * L[9], L[6] - v * L[10]]
        rhs[2 * i] = u - L[3]
        rhs[2 * i + 1] = v - L[7]
    sol, condition = _lstsq(A, rhs)
    if not np.isfinite(sol).all() or condition > CONDITION_LIMIT:
        raise ReconstructionError(
            f"near-parallel rays: reconstruction condition {condition:.2e}"
        )
    residual = float(np.sqrt(np.mean((A @ sol - rhs) ** 2)))
    return sol, residual


@dataclass(frozen=True)
class DltSeries:
    """Per-camera calibration over frames.

    ``per_camera`` maps camera name to either a single Dlt3dParams (static
    camera) or a dict of frame -> Dlt3dParams (moving camera).
    """

    per_camera: dict

    def params_for(self, camera: str, frame: int):
        entry = self.per_camera[camera]
        if isinstance(entry, (Dlt2dParams, Dlt3dParams)):
            return entry
        try:
            return entry[frame]
        except KeyError:
            raise CoverageError(
                f"camera {camera!r} has no calibration for frame {frame}"
            ) from None


def write_calibration_csv(per_camera: dict, kind: str) -> str:
    """Calibration table: one row per camera (static) or camera-frame (moving).

    Columns: camera, frame (empty when static), L1..Ln, residual_rms,
    condition; n is 8 for planar and 11 for volumetric calibrations.
    """
    n_coef = 8 if kind == "2d" else 11
    header = ["camera", "frame"] + [f"L{i+1}" for i in range(n_coef)] + [
        "residual_rms",
        "condition",
    ]
    lines = [",".join(header)]

    def render(camera, frame, params):
        if len(params.L) != n_coef:
            raise CalibrationError(
                f"camera {camera!r}: {len(params.L)} coefficients in a {kind} table"
            )
        cells = [camera, "" if frame is None else str(frame)]
        cells += [f"{v:.17g}" for v in params.L]
        cells += [f"{params.residual_rms:.9g}", f"{params.condition:.9g}"]
        lines.append(",".join(cells))

    for camera in sorted(per_camera):
        entry = per_camera[camera]
        if isinstance(entry, (Dlt2dParams, Dlt3dParams)):
            render(camera, None, entry)
        else:
            for frame in sorted(entry):
                render(camera, frame, entry[frame])
    return "\n".join(lines) + "\n"


def read_calibration_csv(text: str) -> tuple[DltSeries, str]:
    """Inverse of write_calibration_csv; infers planar vs volumetric from width."""
    from .errors import SchemaError

    lines = [ln for ln in text.split("\n") if ln.strip()]
    if not lines:
        raise SchemaError("empty calibration CSV")
    header = [h.strip() for h in lines[0].split(",")]
    if header[:2] != ["camera", "frame"] or header[-2:] != ["residual_rms", "condition"]:
        raise SchemaError("calibration header must be camera,frame,L1..,residual_rms,condition")
    n_coef = len(header) - 4
    if n_coef not in (8, 11):
        raise SchemaError(f"{n_coef} coefficient columns; expected 8 or 11")
    kind = "2d" if n_coef == 8 else "3d"
    cls = Dlt2dParams if n_coef == 8 else Dlt3dParams
    per_camera: dict = {}
    for i, ln in enumerate(lines[1:], start=2):
        cells = ln.split(",")
        if len(cells) != len(header):
            raise SchemaError(f"row has {len(cells)} fields, expected {len(header)}", line=i)
        camera = cells[0].strip()
        frame = cells[1].strip()
        try:
            L = np.array([float(c) for c in cells[2 : 2 + n_coef]])
            params = cls(
                L=L,
                residual_rms=float(cells[-2]),
                condition=float(cells[-1]),
            )
        except ValueError:
            raise SchemaError(f"bad number in calibration row", line=i) from None
        if frame == "":
            per_camera[camera] = params
        else:
            per_camera.setdefault(camera, {})[int(frame)] = params
    return DltSeries(per_camera), kind


def reconstruct_series(
    landmarks_per_camera: dict[str, np.ndarray],
    calib: DltSeries,
    landmark_names: list[str],
    rate_hz: float,
) -> MarkerFrameSet:
    """Frame-by-frame multi-view triangulation of landmark tracks.

    ``landmarks_per_camera`` maps camera name to a (frames, landmarks, 2)
    pixel array; NaN marks a missing observation and propagates to the
    output as a gap. A frame that carries data but lacks calibration for a
    camera raises CoverageError naming the frame.
    """
    cameras = sorted(landmarks_per_camera)
    if len(cameras) < 2:
        raise ReconstructionError("series reconstruction needs >= 2 cameras")
    shapes = {landmarks_per_camera[c].shape for c in cameras}
    if len(shapes) != 1:
        raise ReconstructionError(f"camera landmark arrays disagree in shape: {shapes}")
    n_frames, n_marks, _ = shapes.pop()
    out = np.full((n_frames, n_marks, 3), np.nan)
    for f in range(n_frames):
        frame_obs = {c: landmarks_per_camera[c][f] for c in cameras}
        if all(np.isnan(obs).all() for obs in frame_obs.values()):
            continue
        frame_params = {c: calib.params_for(c, f) for c in cameras}
        for m in range(n_marks):
            views = [
                (frame_params[c], frame_obs[c][m])
                for c in cameras
                if not np.isnan(frame_obs[c][m]).any()
            ]
            if len(views) < 2:
                continue  # gap propagates
            point, _ = dlt3d_reconstruct(views)
            out[f, m] = point
    return MarkerFrameSet(tuple(landmark_names), out, rate_hz)
