"""Cluster and IMU kinematics.

Marker clusters become orthonormal segment bases whose orientation is
reported as Cardan X-Y-Z angles (R = Rx @ Ry @ Rz). IMU gyro/accel streams
are fused with a first-order complementary filter and exported in the fixed
17-column layout used by downstream tooling.

Angles cross module boundaries in degrees; quaternions are (w, x, y, z)
with w >= 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import MarkerFrameSet, quat_normalize, require_rotation
from .errors import DataError, GeometryError, ParameterError, SchemaError, ValidationError

GIMBAL_SIN_TOL = 1e-8
_MIN_TRIANGLE_AREA_M2 = 1e-9

# Canonical 17-column output header. The single space before Tilt_X is part
# of the published schema and is preserved byte-for-byte; readers strip
# whitespace around names.
IMU_HEADER = (
    "Time,Gyro_X,Gyro_Y,Gyro_Z,Acc_X,Acc_Y,Acc_Z,Euler_X,Euler_Y,Euler_Z,"
    " Tilt_X,Tilt_Y,Tilt_Z,Quat_W,Quat_X,Quat_Y,Quat_Z"
)
IMU_COLUMNS = tuple(name.strip() for name in IMU_HEADER.split(","))

REFERENCE_CONVENTIONS = ("lab-frame", "first-frame-relative", "calibration-window-relative")


@dataclass(frozen=True)
class ClusterDefinition:
    """Three-marker rigid cluster: m1 origin-side, m2 axis-defining, m3 plane-defining."""

    name: str
    m1: str
    m2: str
    m3: str
    reference: str = "first-frame-relative"

    def __post_init__(self):
        if len({self.m1, self.m2, self.m3}) != 3:
            raise ValidationError(f"cluster {self.name!r}: marker labels must be distinct")
        if self.reference not in REFERENCE_CONVENTIONS:
            raise ValidationError(
                f"cluster {self.name!r}: reference must be one of {REFERENCE_CONVENTIONS}"
            )


@dataclass(frozen=True)
class ImuSample:
    """One IMU reading: gyro in deg/s, accelerometer in g."""

    gyro: np.ndarray
    acc: np.ndarray


@dataclass(frozen=True)
class ImuState:
    """Fused orientation at one timestamp. Angles in degrees."""

    t_s: float
    euler_deg: np.ndarray
    tilt_deg: np.ndarray
    quat: np.ndarray


def cluster_basis(m1: np.ndarray, m2: np.ndarray, m3: np.ndarray) -> np.ndarray:
    """Orthonormal segment basis from three markers.

    x along m1->m2, z normal to the marker plane, y completing the right-handed
    triad; columns of the result are the basis vectors in lab coordinates.
    """
    m1 = np.asarray(m1, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    m3 = np.asarray(m3, dtype=float)
    v1 = m2 - m1
    v2 = m3 - m1
    normal = np.cross(v1, v2)
    area = 0.5 * np.linalg.norm(normal)
    if not np.isfinite(area) or area <= _MIN_TRIANGLE_AREA_M2:
        raise GeometryError(
            f"cluster markers are collinear or coincident (triangle area {area:.3e} m^2)"
        )
    x = v1 / np.linalg.norm(v1)
    z = np.cross(x, v2)
    z = z / np.linalg.norm(z)
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


def rotm_from_euler(theta_x_deg: float, theta_y_deg: float, theta_z_deg: float) -> np.ndarray:
    """Rotation matrix for Cardan X-Y-Z angles: R = Rx @ Ry @ Rz."""
    a, b, c = np.radians([theta_x_deg, theta_y_deg, theta_z_deg])
    ca, sa = math.cos(a), math.sin(a)
    cb, sb = math.cos(b), math.sin(b)
    cc, sc = math.cos(c), math.sin(c)
    return np.array(
        [
            [cb * cc, -cb * sc, sb],
            [ca * sc + sa * sb * cc, ca * cc - sa * sb * sc, -sa * cb],
            [sa * sc - ca * sb * cc, sa * cc + ca * sb * sc, ca * cb],
        ]
    )


def euler_from_rotm(R: np.ndarray) -> tuple[tuple[float, float, float], bool]:
    """Cardan X-Y-Z angles (degrees) plus a gimbal-lock flag.

    Near |theta_y| = 90 deg the x/z rotations are degenerate; theta_z is set
    to 0, theta_x absorbs the remaining rotation and the flag is True.
    """
    R = require_rotation(R, tol=1e-6)
    s_y = R[0, 2]
    if abs(s_y) > 1.0 - GIMBAL_SIN_TOL:
        if s_y > 0:
            theta_x = math.atan2(R[2, 1], R[1, 1])
            theta_y = math.pi / 2
        else:
            theta_x = math.atan2(R[2, 1], R[2, 0])
            theta_y = -math.pi / 2
        return (math.degrees(theta_x), math.degrees(theta_y), 0.0), True
    theta_y = math.asin(max(-1.0, min(1.0, s_y)))
    theta_x = math.atan2(-R[1, 2], R[2, 2])
    theta_z = math.atan2(-R[0, 1], R[0, 0])
    return (math.degrees(theta_x), math.degrees(theta_y), math.degrees(theta_z)), False


def quat_from_rotm(R: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) via the largest-diagonal branch, w >= 0."""
    R = require_rotation(R, tol=1e-6)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > max(R[0, 0], R[1, 1], R[2, 2]):
        s = math.sqrt(tr + 1.0) * 2.0
        q = np.array(
            [s / 4.0, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    elif R[0, 0] >= R[1, 1] and R[0, 0] >= R[2, 2]:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = np.array(
            [(R[2, 1] - R[1, 2]) / s, s / 4.0, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
        )
    elif R[1, 1] >= R[2, 2]:
        s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q = np.array(
            [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, s / 4.0, (R[1, 2] + R[2, 1]) / s]
        )
    else:
        s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q = np.array(
            [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, s / 4.0]
        )
    return quat_normalize(q)


def rotm_from_quat(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a (w, x, y, z) quaternion."""
    w, x, y, z = quat_normalize(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Hamilton product q1 * q2 in (w, x, y, z) layout."""
    w1, x1, y1, z1 = np.asarray(q1, dtype=float)
    w2, x2, y2, z2 = np.asarray(q2, dtype=float)
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def relative_rotation(R_t: np.ndarray, R_ref: np.ndarray) -> np.ndarray:
    """Orientation of R_t expressed in the reference frame: R_ref^T @ R_t."""
    return np.asarray(R_ref, dtype=float).T @ np.asarray(R_t, dtype=float)


def _nearest_rotation(M: np.ndarray) -> np.ndarray:
    U, _, Vt = np.linalg.svd(M)
    R = U @ Vt
    if np.linalg.det(R) < 0:
        U = U.copy()
        U[:, -1] *= -1
        R = U @ Vt
    return R


@dataclass(frozen=True)
class ClusterAngles:
    """Euler angle tracks for one cluster. NaN rows mark marker gaps."""

    name: str
    angles_deg: np.ndarray  # (frames, 3)
    gimbal: np.ndarray  # (frames,) bool
    gaps: np.ndarray  # (frames,) bool
    rate_hz: float


def cluster_pipeline(
    markers: MarkerFrameSet,
    clusters: list[ClusterDefinition],
    calibration_window: tuple[int, int] | None = None,
) -> list[ClusterAngles]:
    """Per-frame basis -> reference-relative rotation -> Cardan angles per cluster.

    Frames with a gap in any of a cluster's markers yield a gap row for that
    cluster only.
    """
    results = []
    for cluster in clusters:
        for label in (cluster.m1, cluster.m2, cluster.m3):
            if label not in markers.marker_names:
                raise ValidationError(
                    f"cluster {cluster.name!r}: marker {label!r} not in marker set"
                )
        p1 = markers.marker(cluster.m1)
        p2 = markers.marker(cluster.m2)
        p3 = markers.marker(cluster.m3)
        n = markers.n_frames
        gaps = np.isnan(p1).any(axis=1) | np.isnan(p2).any(axis=1) | np.isnan(p3).any(axis=1)
        bases: list[np.ndarray | None] = [None] * n
        for k in range(n):
            if not gaps[k]:
                bases[k] = cluster_basis(p1[k], p2[k], p3[k])

        if cluster.reference == "lab-frame":
            R_ref = np.eye(3)
        elif cluster.reference == "first-frame-relative":
            first = next((b for b in bases if b is not None), None)
            if first is None:
                raise DataError(f"cluster {cluster.name!r}: every frame has a marker gap")
            R_ref = first
        else:
            if calibration_window is None:
                raise ParameterError(
                    f"cluster {cluster.name!r}: calibration-window reference needs a window"
                )
            lo, hi = calibration_window
            window = [b for b in bases[lo:hi] if b is not None]
            if not window:
                raise DataError(
                    f"cluster {cluster.name!r}: calibration window [{lo}, {hi}) has no "
                    "gap-free frames"
                )
            R_ref = _nearest_rotation(np.mean(window, axis=0))

        angles = np.full((n, 3), np.nan)
        gimbal = np.zeros(n, dtype=bool)
        for k in range(n):
            if bases[k] is None:
                continue
            (ax, ay, az), flag = euler_from_rotm(relative_rotation(bases[k], R_ref))
            angles[k] = (ax, ay, az)
            gimbal[k] = flag
        results.append(
            ClusterAngles(
                name=cluster.name,
                angles_deg=angles,
                gimbal=gimbal,
                gaps=gaps,
                rate_hz=markers.rate_hz,
            )
        )
    return results


def tilt_from_accel(acc_g: np.ndarray) -> tuple[float, float]:
    """Gravity-referenced tilt (degrees) about x and y from a static accelerometer."""
    ax, ay, az = np.asarray(acc_g, dtype=float)
    norm = math.sqrt(ax * ax + ay * ay + az * az)
    if not np.isfinite(norm) or norm <= 0.1:
        raise DataError(f"accelerometer magnitude {norm:.3f} g is too close to free fall")
    tilt_x = math.degrees(math.atan2(ay, az))
    tilt_y = math.degrees(math.atan2(-ax, math.sqrt(ay * ay + az * az)))
    return tilt_x, tilt_y


def complementary_fuse(
    samples: list[ImuSample], rate_hz: float, alpha: float = 0.98, t0_s: float = 0.0
) -> list[ImuState]:
    """First-order complementary filter over an IMU stream.

    Per step the gyro-propagated roll/pitch are blended with accelerometer
    tilt (weight 1 - alpha); yaw integrates the gyro alone because the
    accelerometer cannot observe it. Angles start at zero. Free-fall samples
    (|acc| <= 0.1 g) fall back to pure gyro propagation for that step and
    report NaN tilt.
    """
    if not (rate_hz > 0):
        raise ParameterError(f"rate must be > 0, got {rate_hz}")
    if not (0.0 <= alpha <= 1.0):
        raise ParameterError(f"alpha must be in [0, 1], got {alpha}")
    dt = 1.0 / rate_hz
    euler = np.zeros(3)
    yaw_tilt = 0.0
    states = []
    for i, sample in enumerate(samples):
        gyro = np.asarray(sample.gyro, dtype=float)
        acc = np.asarray(sample.acc, dtype=float)
        if not (np.isfinite(gyro).all() and np.isfinite(acc).all()):
            raise DataError(f"non-finite IMU sample at index {i}")
        propagated = euler + gyro * dt
        try:
            tilt_x, tilt_y = tilt_from_accel(acc)
            fused_x = alpha * propagated[0] + (1 - alpha) * tilt_x
            fused_y = alpha * propagated[1] + (1 - alpha) * tilt_y
        except DataError:
            tilt_x = tilt_y = math.nan
            fused_x, fused_y = propagated[0], propagated[1]
        euler = np.array([fused_x, fused_y, propagated[2]])
        yaw_tilt += gyro[2] * dt
        quat = quat_from_rotm(rotm_from_euler(*euler))
        states.append(
            ImuState(
                t_s=t0_s + i * dt,
                euler_deg=euler.copy(),
                tilt_deg=np.array([tilt_x, tilt_y, yaw_tilt]),
                quat=quat,
            )
        )
    return states


def format_imu_row(state: ImuState, sample: ImuSample) -> str:
    """One 17-column CSV row at the printed precision of the schema (3 decimals)."""
    fields = [
        state.t_s,
        *np.asarray(sample.gyro, dtype=float),
        *np.asarray(sample.acc, dtype=float),
        *state.euler_deg,
        *state.tilt_deg,
        *state.quat,
    ]
    return ",".join(f"{v:.3f}" for v in fields)


def imu_csv_text(states: list[ImuState], samples: list[ImuSample]) -> str:
    """Full 17-column CSV document, LF newlines, header byte-exact."""
    if len(states) != len(samples):
        raise ParameterError("states and samples must align one-to-one")
    lines = [IMU_HEADER]
    lines.extend(format_imu_row(st, sa) for st, sa in zip(states, samples))
    return "\n".join(lines) + "\n"


def parse_imu_output_csv(text: str) -> np.ndarray:
    """Parse a 17-column output document back into a (rows, 17) float array."""
    lines = [ln for ln in text.split("\n") if ln.strip()]
    if not lines:
        raise SchemaError("empty IMU document")
    names = tuple(c.strip() for c in lines[0].split(","))
    if names != IMU_COLUMNS:
        raise SchemaError(f"unexpected IMU columns {names}")
    rows = []
    for i, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != len(IMU_COLUMNS):
            raise SchemaError(
                f"IMU row has {len(parts)} fields, expected {len(IMU_COLUMNS)}", line=i
            )
        rows.append([float(p) for p in parts])
    return np.asarray(rows)
