import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from movelab.core import MarkerFrameSet
from movelab.errors import (
    DataError,
    GeometryError,
    ParameterError,
    SchemaError,
    ValidationError,
)
from movelab.kinematics import (
    IMU_COLUMNS,
    IMU_HEADER,
    ClusterDefinition,
    ImuSample,
    cluster_basis,
    cluster_pipeline,
    complementary_fuse,
    euler_from_rotm,
    format_imu_row,
    imu_csv_text,
    parse_imu_output_csv,
    quat_from_rotm,
    quat_multiply,
    relative_rotation,
    rotm_from_euler,
    rotm_from_quat,
    tilt_from_accel,
)


def rot_z(deg):
    return Rotation.from_euler("z", deg, degrees=True).as_matrix()


class TestClusterBasis:
    def test_canonical_markers_give_identity(self):
        R = cluster_basis([0, 0, 0], [1, 0, 0], [0, 1, 0])
        assert np.allclose(R, np.eye(3), atol=1e-15)

    def test_rotated_markers_give_that_rotation(self):
        Q = rot_z(90.0)
        pts = [Q @ np.array(p) for p in ([0, 0, 0], [1, 0, 0], [0, 1, 0])]
        assert np.allclose(cluster_basis(*pts), Q, atol=1e-12)

    def test_collinear_markers_rejected(self):
        with pytest.raises(GeometryError):
            cluster_basis([0, 0, 0], [1, 0, 0], [2, 0, 0])

    def test_translation_invariance(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            m = rng.normal(size=(3, 3))
            shift = rng.normal(size=3)
            try:
                R0 = cluster_basis(*m)
            except GeometryError:
                continue
            R1 = cluster_basis(*(m + shift))
            assert np.abs(R0 - R1).max() < 1e-12

    def test_rotation_equivariance(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            m = rng.normal(size=(3, 3))
            Q = Rotation.random(random_state=int(rng.integers(1 << 31))).as_matrix()
            try:
                R0 = cluster_basis(*m)
            except GeometryError:
                continue
            R1 = cluster_basis(*(m @ Q.T))
            assert np.abs(Q @ R0 - R1).max() < 1e-12

    def test_result_is_orthonormal(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            m = rng.normal(size=(3, 3))
            try:
                R = cluster_basis(*m)
            except GeometryError:
                continue
            assert np.abs(R.T @ R - np.eye(3)).max() < 1e-9
            assert abs(np.linalg.det(R) - 1.0) < 1e-9


class TestEulerConversions:
    def test_identity(self):
        angles, flag = euler_from_rotm(np.eye(3))
        assert angles == (0.0, 0.0, 0.0)
        assert not flag

    def test_pure_z_rotation(self):
        (ax, ay, az), flag = euler_from_rotm(rot_z(30.0))
        assert (ax, ay) == pytest.approx((0.0, 0.0), abs=1e-12)
        assert az == pytest.approx(30.0, abs=1e-12)
        assert not flag

    def test_gimbal_lock_convention(self):
        (ax, ay, az), flag = euler_from_rotm(rotm_from_euler(25.0, 90.0, 0.0))
        assert flag
        assert ay == pytest.approx(90.0)
        assert az == 0.0
        assert ax == pytest.approx(25.0, abs=1e-6)

    def test_matches_scipy_intrinsic_xyz(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            a, b, c = rng.uniform(-179, 179), rng.uniform(-88, 88), rng.uniform(-179, 179)
            ours = rotm_from_euler(a, b, c)
            ref = Rotation.from_euler("XYZ", [a, b, c], degrees=True).as_matrix()
            assert np.abs(ours - ref).max() < 1e-12

    def test_round_trip_outside_gimbal_band(self):
        rng = np.random.default_rng(5)
        for _ in range(500):
            a, b, c = rng.uniform(-179, 179), rng.uniform(-88.9, 88.9), rng.uniform(-179, 179)
            (ax, ay, az), flag = euler_from_rotm(rotm_from_euler(a, b, c))
            assert not flag
            assert max(abs(ax - a), abs(ay - b), abs(az - c)) < 1e-9

    def test_non_rotation_rejected(self):
        with pytest.raises(ValidationError):
            euler_from_rotm(np.diag([1.0, 1.0, 2.0]))


class TestQuaternions:
    def test_identity_matrix_maps_to_unit_w(self):
        assert np.allclose(quat_from_rotm(np.eye(3)), [1, 0, 0, 0])

    def test_random_round_trips(self):
        rng = np.random.default_rng(6)
        for _ in range(10_000):
            R = Rotation.random(random_state=int(rng.integers(1 << 31))).as_matrix()
            q = quat_from_rotm(R)
            assert abs(np.linalg.norm(q) - 1.0) < 1e-12
            assert np.abs(rotm_from_quat(q) - R).max() < 1e-12

    def test_double_cover_canonicalization(self):
        rng = np.random.default_rng(7)
        R = Rotation.random(random_state=8).as_matrix()
        q = quat_from_rotm(R)
        assert q[0] >= 0
        assert np.abs(rotm_from_quat(-q) - rotm_from_quat(q)).max() < 1e-15

    def test_multiply_matches_matrix_product(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            R1 = Rotation.random(random_state=int(rng.integers(1 << 31))).as_matrix()
            R2 = Rotation.random(random_state=int(rng.integers(1 << 31))).as_matrix()
            q = quat_multiply(quat_from_rotm(R1), quat_from_rotm(R2))
            assert np.abs(rotm_from_quat(q) - R1 @ R2).max() < 1e-12


class TestRelativeRotation:
    def test_same_rotation_is_identity(self):
        R = rot_z(37.0)
        assert np.allclose(relative_rotation(R, R), np.eye(3), atol=1e-15)

    def test_identity_reference_passthrough(self):
        R = rot_z(12.0)
        assert np.allclose(relative_rotation(R, np.eye(3)), R)

    def test_compose_relative_recovers_absolute(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            R_t = Rotation.random(random_state=int(rng.integers(1 << 31))).as_matrix()
            R_ref = Rotation.random(random_state=int(rng.integers(1 << 31))).as_matrix()
            R_rel = relative_rotation(R_t, R_ref)
            assert np.abs(R_ref @ R_rel - R_t).max() < 1e-12


def make_marker_set(frames):
    return MarkerFrameSet(("m1", "m2", "m3"), np.asarray(frames, dtype=float), 100.0)


class TestClusterPipeline:
    base = np.array([[0.0, 0.0, 0.0], [0.1, 0.0, 0.0], [0.0, 0.1, 0.0]])

    def test_static_markers_zero_angles(self):
        frames = np.repeat(self.base[None, :, :], 10, axis=0)
        (result,) = cluster_pipeline(
            make_marker_set(frames), [ClusterDefinition("trunk", "m1", "m2", "m3")]
        )
        assert np.abs(result.angles_deg).max() < 1e-9

    def test_z_ramp_recovered(self):
        frames = np.stack([(rot_z(k) @ self.base.T).T for k in range(30)])
        (result,) = cluster_pipeline(
            make_marker_set(frames), [ClusterDefinition("trunk", "m1", "m2", "m3")]
        )
        assert np.allclose(result.angles_deg[:, 2], np.arange(30), atol=1e-9)
        assert np.abs(result.angles_deg[:, :2]).max() < 1e-9

    def test_gap_propagates_to_that_frame_only(self):
        frames = np.repeat(self.base[None, :, :], 10, axis=0).copy()
        frames[7, 1, :] = np.nan
        (result,) = cluster_pipeline(
            make_marker_set(frames), [ClusterDefinition("trunk", "m1", "m2", "m3")]
        )
        assert result.gaps[7]
        assert np.isnan(result.angles_deg[7]).all()
        ok = np.ones(10, dtype=bool)
        ok[7] = False
        assert np.isfinite(result.angles_deg[ok]).all()

    def test_missing_marker_label(self):
        frames = np.repeat(self.base[None, :, :], 3, axis=0)
        with pytest.raises(ValidationError):
            cluster_pipeline(
                make_marker_set(frames), [ClusterDefinition("trunk", "m1", "m2", "nope")]
            )

    def test_lab_frame_reference(self):
        Q = rot_z(45.0)
        frames = np.repeat((Q @ self.base.T).T[None, :, :], 4, axis=0)
        (result,) = cluster_pipeline(
            make_marker_set(frames),
            [ClusterDefinition("trunk", "m1", "m2", "m3", reference="lab-frame")],
        )
        assert result.angles_deg[0, 2] == pytest.approx(45.0, abs=1e-9)


class TestTiltFromAccel:
    def test_level(self):
        assert tilt_from_accel([0.0, 0.0, 1.0]) == pytest.approx((0.0, 0.0))

    def test_30_degrees(self):
        tx, ty = tilt_from_accel([0.0, 0.5, math.cos(math.radians(30.0))])
        assert tx == pytest.approx(30.0, abs=1e-6)
        assert ty == pytest.approx(0.0, abs=1e-9)

    def test_free_fall(self):
        with pytest.raises(DataError):
            tilt_from_accel([0.0, 0.0, 0.0])


class TestComplementaryFuse:
    def test_converges_to_static_tilt(self):
        # recurrence oracle: theta_k = 30 * (1 - alpha^k)
        rate, alpha = 100.0, 0.98
        acc = np.array([0.0, math.sin(math.radians(30)), math.cos(math.radians(30))])
        samples = [ImuSample(np.zeros(3), acc)] * int(rate * 10)
        states = complementary_fuse(samples, rate, alpha)
        t = np.array([s.t_s for s in states])
        x = np.array([s.euler_deg[0] for s in states])
        k = np.arange(1, len(samples) + 1)
        oracle = 30.0 * (1 - alpha**k)
        assert np.abs(x - oracle).max() < 1e-9
        assert abs(x[np.searchsorted(t, 5.0)] - 30.0) < 0.1

    def test_pure_gyro_yaw_integration(self):
        rate = 100.0
        samples = [ImuSample(np.array([0.0, 0.0, 10.0]), np.array([0.0, 0.0, 1.0]))] * 200
        states = complementary_fuse(samples, rate, alpha=1.0)
        assert states[-1].euler_deg[2] == pytest.approx(20.0, rel=1e-9)
        assert states[-1].tilt_deg[2] == pytest.approx(20.0, rel=1e-9)

    def test_alpha_out_of_range(self):
        with pytest.raises(ParameterError):
            complementary_fuse([], 100.0, alpha=1.5)

    def test_non_finite_sample(self):
        samples = [ImuSample(np.array([np.nan, 0, 0]), np.array([0, 0, 1.0]))]
        with pytest.raises(DataError):
            complementary_fuse(samples, 100.0)

    def test_quaternions_stay_unit_norm_on_long_runs(self):
        rng = np.random.default_rng(11)
        samples = [
            ImuSample(rng.uniform(-50, 50, 3), rng.uniform(-1, 1, 3) + [0, 0, 1.2])
            for _ in range(5000)
        ]
        states = complementary_fuse(samples, 200.0)
        norms = np.array([np.linalg.norm(s.quat) for s in states])
        assert np.abs(norms - 1.0).max() < 1e-9


class TestImuCsv:
    reference_header = (
        "Time,Gyro_X,Gyro_Y,Gyro_Z,Acc_X,Acc_Y,Acc_Z,Euler_X,Euler_Y,Euler_Z,"
        " Tilt_X,Tilt_Y,Tilt_Z,Quat_W,Quat_X,Quat_Y,Quat_Z"
    )
    sample_row = (
        "0.000,52.874,17.166,0.961,-0.066,0.910,0.858,0.235,0.024,0.000,"
        "-3.038,46.609,46.770,1.000,0.002,0.000,0.000"
    )
    sample_row_2 = (
        "10.000,52.872,17.166,0.962,-0.066,0.910,0.858,0.468,0.047,0.000,"
        "-3.038,46.608,46.770,0.999,0.004,0.000,-0.000"
    )

    def test_header_is_byte_exact(self):
        assert IMU_HEADER == self.reference_header
        assert len(IMU_COLUMNS) == 17

    def test_sample_rows_round_trip_at_printed_precision(self):
        doc = "\n".join([self.reference_header, self.sample_row, self.sample_row_2]) + "\n"
        values = parse_imu_output_csv(doc)
        assert values.shape == (2, 17)
        assert values[0, 0] == 0.0
        assert values[0, 1] == 52.874
        assert values[0, 13] == 1.000
        rebuilt = [",".join(f"{v:.3f}" for v in row) for row in values]
        assert rebuilt[0] == self.sample_row
        assert rebuilt[1] == self.sample_row_2

    def test_zero_motion_outputs(self):
        samples = [ImuSample(np.zeros(3), np.array([0.0, 0.0, 1.0]))] * 50
        states = complementary_fuse(samples, 100.0)
        last = states[-1]
        assert np.abs(last.euler_deg).max() < 1e-12
        assert np.abs(last.tilt_deg).max() < 1e-12
        assert np.allclose(last.quat, [1, 0, 0, 0])
        text = imu_csv_text(states, samples)
        assert text.splitlines()[0] == self.reference_header
        row = text.splitlines()[1].split(",")
        assert len(row) == 17
        assert row[13] == "1.000"

    def test_format_row_verbatim_sensor_passthrough(self):
        sample = ImuSample(np.array([52.874, 17.166, 0.961]), np.array([-0.066, 0.910, 0.858]))
        states = complementary_fuse([sample], 100.0)
        row = format_imu_row(states[0], sample).split(",")
        assert row[1:7] == ["52.874", "17.166", "0.961", "-0.066", "0.910", "0.858"]

    def test_schema_error_on_bad_column_count(self):
        with pytest.raises(SchemaError):
            parse_imu_output_csv(self.reference_header + "\n1,2,3\n")
