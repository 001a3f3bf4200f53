import numpy as np
import pytest

from movelab.dlt import (
    DltSeries,
    dlt2d_calibrate,
    dlt2d_reconstruct,
    dlt3d_calibrate,
    dlt3d_reconstruct,
    project_2d,
    reconstruct_series,
)
from movelab.errors import CalibrationError, CoverageError, ReconstructionError


def pinhole_camera(position, look_at, focal_px=1000.0, center=(960.0, 540.0)):
    """Oracle: a synthetic pinhole camera returning a projection function."""
    position = np.asarray(position, dtype=float)
    forward = np.asarray(look_at, dtype=float) - position
    forward /= np.linalg.norm(forward)
    up_hint = np.array([0.0, 0.0, 1.0])
    if abs(forward @ up_hint) > 0.95:
        up_hint = np.array([0.0, 1.0, 0.0])
    right = np.cross(forward, up_hint)
    right /= np.linalg.norm(right)
    up = np.cross(right, forward)

    def project(points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        rel = points - position
        z = rel @ forward
        u = focal_px * (rel @ right) / z + center[0]
        v = focal_px * (rel @ up) / z + center[1]
        return np.column_stack([u, v])

    return project


def cube_corners(side=1.0, origin=(0.0, 0.0, 0.0)):
    o = np.asarray(origin, dtype=float)
    pts = np.array(
        [[x, y, z] for x in (0, side) for y in (0, side) for z in (0, side)], dtype=float
    )
    return pts + o


class TestDlt2dCalibrate:
    def test_identity_mapping(self):
        square = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
        params = dlt2d_calibrate(square, square)
        assert np.allclose(params.L, [1, 0, 0, 0, 1, 0, 0, 0], atol=1e-9)
        assert params.residual_rms < 1e-9

    def test_pure_scaling(self):
        square = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
        params = dlt2d_calibrate(square / 2.0, square)
        assert np.allclose(params.L, [2, 0, 0, 0, 2, 0, 0, 0], atol=1e-9)

    def test_projective_map_recovered(self):
        # forward-map oracle: synthesize a projective map, project, recover
        L_true = np.array([1.2, 0.1, 5.0, -0.2, 0.9, 3.0, 0.001, -0.002])
        truth = type("P", (), {"L": L_true})()
        rng = np.random.default_rng(0)
        obj = rng.uniform(-5, 5, size=(10, 2))
        img = project_2d(truth, obj)
        params = dlt2d_calibrate(obj, img)
        assert params.residual_rms < 1e-9
        assert np.allclose(params.L, L_true, atol=1e-8)

    def test_too_few_points(self):
        with pytest.raises(CalibrationError):
            dlt2d_calibrate([[0, 0], [1, 0], [2, 0]], [[0, 0], [1, 0], [2, 0]])

    def test_collinear_points_rejected(self):
        pts = np.array([[i, 2.0 * i] for i in range(6)], dtype=float)
        with pytest.raises(CalibrationError):
            dlt2d_calibrate(pts, pts)


class TestDlt2dReconstruct:
    def test_identity_params(self):
        params = dlt2d_calibrate(
            np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float),
            np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float),
        )
        assert np.allclose(dlt2d_reconstruct(params, [3.0, 4.0]), [3.0, 4.0], atol=1e-9)

    def test_round_trip_100_random_points(self):
        L_true = np.array([0.8, -0.3, 12.0, 0.25, 1.4, -7.0, 0.003, 0.001])
        truth = type("P", (), {"L": L_true})()
        rng = np.random.default_rng(1)
        obj = rng.uniform(-20, 20, size=(12, 2))
        params = dlt2d_calibrate(obj, project_2d(truth, obj))
        pts = rng.uniform(-20, 20, size=(100, 2))
        uv = project_2d(params, pts)
        worst = max(
            np.abs(dlt2d_reconstruct(params, uv[i]) - pts[i]).max() for i in range(100)
        )
        assert worst < 1e-9

    def test_horizon_point_rejected(self):
        L = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.1, 0.0])
        params = type("P", (), {"L": L})()
        # denominator row (L7, L8): u = x/(0.1x+1); horizon at u -> 1/L7 = 10
        with pytest.raises(ReconstructionError):
            dlt2d_reconstruct(params, [10.0, 10.0])


class TestDlt3dCalibrate:
    def test_cube_corner_calibration(self):
        cam = pinhole_camera([5.0, -6.0, 3.0], [0.5, 0.5, 0.5])
        obj = cube_corners()
        params = dlt3d_calibrate(obj, cam(obj))
        assert params.residual_rms < 1e-8

    def test_five_points_rejected(self):
        cam = pinhole_camera([5.0, -6.0, 3.0], [0.5, 0.5, 0.5])
        obj = cube_corners()[:5]
        with pytest.raises(CalibrationError):
            dlt3d_calibrate(obj, cam(obj))

    def test_coplanar_volume_rejected(self):
        cam = pinhole_camera([5.0, -6.0, 3.0], [0.5, 0.5, 0.0])
        rng = np.random.default_rng(2)
        obj = np.column_stack([rng.uniform(0, 1, 10), rng.uniform(0, 1, 10), np.zeros(10)])
        with pytest.raises(CalibrationError):
            dlt3d_calibrate(obj, cam(obj))


class TestDlt3dReconstruct:
    @staticmethod
    def two_calibrated_cameras():
        obj = np.vstack([cube_corners(), cube_corners(0.6, (0.2, 0.2, 0.2))])
        cams = [
            pinhole_camera([5.0, -6.0, 3.0], [0.5, 0.5, 0.5]),
            pinhole_camera([-4.0, -5.0, 2.0], [0.5, 0.5, 0.5]),
        ]
        return [dlt3d_calibrate(obj, cam(obj)) for cam in cams], cams

    def test_two_camera_exact_point(self):
        params, cams = self.two_calibrated_cameras()
        target = np.array([0.3, 0.7, 0.4])
        views = [(p, cam(target)[0]) for p, cam in zip(params, cams)]
        point, residual = dlt3d_reconstruct(views)
        assert np.abs(point - target).max() < 1e-9
        assert residual < 1e-6

    def test_single_view_rejected(self):
        params, cams = self.two_calibrated_cameras()
        with pytest.raises(ReconstructionError):
            dlt3d_reconstruct([(params[0], np.array([100.0, 100.0]))])

    def test_noise_shrinks_with_more_views(self):
        # Monte Carlo: RMS error decreases as independently noisy views are added
        obj = np.vstack([cube_corners(), cube_corners(0.6, (0.2, 0.2, 0.2))])
        cams = [
            pinhole_camera([5.0, -6.0, 3.0], [0.5, 0.5, 0.5]),
            pinhole_camera([-4.0, -5.0, 2.0], [0.5, 0.5, 0.5]),
            pinhole_camera([0.5, 7.0, 4.0], [0.5, 0.5, 0.5]),
            pinhole_camera([6.0, 5.0, -1.0], [0.5, 0.5, 0.5]),
        ]
        params = [dlt3d_calibrate(obj, cam(obj)) for cam in cams]
        rng = np.random.default_rng(3)
        target = np.array([0.4, 0.5, 0.6])
        rms = []
        for n_views in (2, 4):
            errs = []
            for _ in range(300):
                views = [
                    (p, cam(target)[0] + rng.normal(0, 0.5, 2))
                    for p, cam in zip(params[:n_views], cams[:n_views])
                ]
                point, _ = dlt3d_reconstruct(views)
                errs.append(np.sum((point - target) ** 2))
            rms.append(np.sqrt(np.mean(errs)))
        assert rms[1] < rms[0]

    def test_three_views_with_noise_bounded_by_oracle_envelope(self):
        obj = np.vstack([cube_corners(), cube_corners(0.6, (0.2, 0.2, 0.2))])
        cams = [
            pinhole_camera([5.0, -6.0, 3.0], [0.5, 0.5, 0.5]),
            pinhole_camera([-4.0, -5.0, 2.0], [0.5, 0.5, 0.5]),
            pinhole_camera([0.5, 7.0, 4.0], [0.5, 0.5, 0.5]),
        ]
        params = [dlt3d_calibrate(obj, cam(obj)) for cam in cams]
        rng = np.random.default_rng(4)
        target = np.array([0.4, 0.5, 0.6])
        errs = []
        for _ in range(500):
            views = [
                (p, cam(target)[0] + rng.normal(0, 0.5, 2))
                for p, cam in zip(params, cams)
            ]
            point, _ = dlt3d_reconstruct(views)
            errs.append(np.linalg.norm(point - target))
        # 0.5 px noise at ~1000 px focal length and ~7 m range: per-view ray
        # error ~ 0.5/1000 * 7 m = 3.5 mm; the envelope below is 10x that.
        assert np.max(errs) < 0.035


class TestScaleConsistency:
    def test_scaled_object_coordinates(self):
        L_true = np.array([0.8, -0.3, 12.0, 0.25, 1.4, -7.0, 0.003, 0.001])
        truth = type("P", (), {"L": L_true})()
        rng = np.random.default_rng(5)
        obj = rng.uniform(-20, 20, size=(12, 2))
        img = project_2d(truth, obj)
        s = 4.0
        params = dlt2d_calibrate(obj, img)
        params_scaled = dlt2d_calibrate(obj * s, img)
        assert np.allclose(params_scaled.L[[0, 1, 3, 4, 6, 7]],
                           params.L[[0, 1, 3, 4, 6, 7]] / s, atol=1e-9)
        # reconstructions of scaled points stay consistent
        uv = img[0]
        a = dlt2d_reconstruct(params, uv)
        b = dlt2d_reconstruct(params_scaled, uv)
        assert np.allclose(b, a * s, atol=1e-8)


class TestReconstructSeries:
    @staticmethod
    def moving_camera_setup(n_frames=40):
        """Oracle: camera 2 rotates 0.1 deg/frame about the z axis."""
        obj = np.vstack([cube_corners(), cube_corners(0.6, (0.2, 0.2, 0.2))])
        cam1 = pinhole_camera([5.0, -6.0, 3.0], [0.5, 0.5, 0.5])
        p1 = dlt3d_calibrate(obj, cam1(obj))

        t = np.linspace(0, 4 * np.pi, n_frames)
        trajectory = np.column_stack(
            [0.5 + 0.3 * np.cos(t), 0.5 + 0.3 * np.sin(t), 0.5 + 0.1 * np.sin(2 * t)]
        )

        cam2_frames = {}
        obs1 = np.zeros((n_frames, 1, 2))
        obs2 = np.zeros((n_frames, 1, 2))
        for f in range(n_frames):
            ang = np.radians(0.1 * f)
            c, s = np.cos(ang), np.sin(ang)
            Rz = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
            pos = Rz @ np.array([-4.0, -5.0, 2.0])
            cam2 = pinhole_camera(pos, [0.5, 0.5, 0.5])
            cam2_frames[f] = dlt3d_calibrate(obj, cam2(obj))
            obs1[f, 0] = cam1(trajectory[f])[0]
            obs2[f, 0] = cam2(trajectory[f])[0]
        calib = DltSeries({"cam1": p1, "cam2": cam2_frames})
        return obs1, obs2, calib, trajectory

    def test_moving_camera_trajectory_recovered(self):
        obs1, obs2, calib, trajectory = self.moving_camera_setup()
        mfs = reconstruct_series(
            {"cam1": obs1, "cam2": obs2}, calib, ["pt"], rate_hz=100.0
        )
        err = np.abs(mfs.positions[:, 0, :] - trajectory).max()
        assert err < 1e-6

    def test_static_calibration_matches_replicated_per_frame(self):
        obs1, obs2, calib, _ = self.moving_camera_setup(n_frames=10)
        static2 = calib.per_camera["cam2"][0]
        a = reconstruct_series(
            {"cam1": obs1, "cam2": obs2},
            DltSeries({"cam1": calib.per_camera["cam1"], "cam2": static2}),
            ["pt"],
            rate_hz=100.0,
        )
        b = reconstruct_series(
            {"cam1": obs1, "cam2": obs2},
            DltSeries(
                {"cam1": calib.per_camera["cam1"], "cam2": {f: static2 for f in range(10)}}
            ),
            ["pt"],
            rate_hz=100.0,
        )
        assert np.array_equal(a.positions, b.positions)

    def test_missing_frame_in_calibration(self):
        obs1, obs2, calib, _ = self.moving_camera_setup(n_frames=15)
        broken = dict(calib.per_camera["cam2"])
        del broken[12]
        with pytest.raises(CoverageError, match="frame 12"):
            reconstruct_series(
                {"cam1": obs1, "cam2": obs2},
                DltSeries({"cam1": calib.per_camera["cam1"], "cam2": broken}),
                ["pt"],
                rate_hz=100.0,
            )

    def test_gap_propagates(self):
        obs1, obs2, calib, _ = self.moving_camera_setup(n_frames=10)
        obs1[4, 0] = np.nan
        mfs = reconstruct_series(
            {"cam1": obs1, "cam2": obs2}, calib, ["pt"], rate_hz=100.0
        )
        assert np.isnan(mfs.positions[4, 0]).all()
        assert np.isfinite(mfs.positions[5, 0]).all()
