import numpy as np
import pytest
from hypothesis import given, strategies as st

from movelab.core import (
    MarkerFrameSet,
    UniformSeries,
    is_rotation,
    quat_normalize,
    time_axis,
    trim,
)
from movelab.errors import DataError, GeometryError, ValidationError, WindowError


def make_series(n, rate, t0=0.0, value=1.0):
    return UniformSeries(np.full(n, value), rate, t0)


class TestUniformSeries:
    def test_rejects_non_positive_rate(self):
        with pytest.raises(ValidationError):
            UniformSeries(np.zeros(3), 0.0)
        with pytest.raises(ValidationError):
            UniformSeries(np.zeros(3), -10.0)

    def test_rejects_nan_without_gap_mask(self):
        with pytest.raises(DataError):
            UniformSeries(np.array([1.0, np.nan, 3.0]), 100.0)

    def test_nan_allowed_where_gap_marked(self):
        s = UniformSeries(
            np.array([1.0, np.nan, 3.0]), 100.0, gap_mask=np.array([False, True, False])
        )
        assert s.has_gaps()

    def test_nan_outside_gap_mask_rejected(self):
        with pytest.raises(DataError):
            UniformSeries(
                np.array([np.nan, 2.0, 3.0]), 100.0, gap_mask=np.array([False, True, False])
            )

    def test_values_are_immutable(self):
        s = make_series(5, 100.0)
        with pytest.raises(ValueError):
            s.values[0] = 99.0


class TestTimeAxis:
    def test_three_samples_at_10hz(self):
        s = make_series(3, 10.0)
        assert np.allclose(time_axis(s), [0.0, 0.1, 0.2])

    def test_empty_series(self):
        s = UniformSeries(np.zeros(0), 10.0)
        assert time_axis(s).shape == (0,)

    def test_offset_start(self):
        s = UniformSeries(np.zeros(2), 2.0, t0_s=1.5)
        assert np.allclose(time_axis(s), [1.5, 2.0])


class TestTrim:
    def test_identity_window(self):
        s = UniformSeries(np.arange(60_000, dtype=float), 1000.0)
        out = trim(s, 0.0, 60.0)
        assert len(out) == 60_000
        assert out.t0_s == 0.0
        assert np.array_equal(out.values, s.values)

    def test_interior_window(self):
        s = UniformSeries(np.arange(1000, dtype=float), 100.0)
        out = trim(s, 2.0, 3.0)
        assert len(out) == 100
        assert out.t0_s == pytest.approx(2.0, abs=1e-12)
        assert out.values[0] == 200.0

    def test_inverted_window(self):
        s = make_series(100, 10.0)
        with pytest.raises(WindowError):
            trim(s, 5.0, 2.0)

    def test_window_outside_extent(self):
        s = make_series(100, 10.0)  # extent [0, 10)
        with pytest.raises(WindowError):
            trim(s, 8.0, 12.0)
        with pytest.raises(WindowError):
            trim(s, -1.0, 2.0)

    def test_idempotent_for_same_window(self):
        rng = np.random.default_rng(7)
        s = UniformSeries(rng.normal(size=500), 50.0)
        once = trim(s, 1.0, 8.0)
        twice = trim(once, 1.0, 8.0)
        assert np.array_equal(once.values, twice.values)
        assert once.t0_s == twice.t0_s

    @given(
        start=st.integers(min_value=0, max_value=40),
        length=st.integers(min_value=1, max_value=40),
    )
    def test_sample_counts_match_window(self, start, length):
        s = UniformSeries(np.arange(100, dtype=float), 10.0)
        out = trim(s, start / 10.0, (start + length) / 10.0)
        assert len(out) == length
        assert out.values[0] == float(start)


class TestMarkerFrameSet:
    def test_shape_validation(self):
        with pytest.raises(ValidationError):
            MarkerFrameSet(("a",), np.zeros((5, 2, 3)), 100.0)

    def test_partial_gap_rejected(self):
        pos = np.zeros((2, 1, 3))
        pos[1, 0, 0] = np.nan
        with pytest.raises(ValidationError):
            MarkerFrameSet(("a",), pos, 100.0)

    def test_full_gap_allowed_and_masked(self):
        pos = np.zeros((2, 2, 3))
        pos[1, 0, :] = np.nan
        mfs = MarkerFrameSet(("a", "b"), pos, 100.0)
        mask = mfs.gap_mask()
        assert mask[1, 0] and not mask[0, 0] and not mask[1, 1]

    def test_marker_lookup(self):
        pos = np.arange(12, dtype=float).reshape(2, 2, 3)
        mfs = MarkerFrameSet(("a", "b"), pos, 100.0)
        assert np.array_equal(mfs.marker("b"), pos[:, 1, :])
        with pytest.raises(KeyError):
            mfs.marker("c")


class TestRotationChecks:
    def test_identity_is_rotation(self):
        assert is_rotation(np.eye(3))

    def test_reflection_rejected(self):
        R = np.diag([1.0, 1.0, -1.0])
        assert not is_rotation(R)

    def test_slightly_off_matrix_rejected(self):
        R = np.eye(3)
        R = R + 1e-6
        assert not is_rotation(R)


class TestQuatNormalize:
    def test_unit_output_and_sign(self):
        q = quat_normalize(np.array([-2.0, 0.0, 0.0, 0.0]))
        assert np.allclose(q, [1.0, 0.0, 0.0, 0.0])
        assert abs(np.linalg.norm(q) - 1.0) < 1e-12

    def test_zero_quaternion(self):
        with pytest.raises(GeometryError):
            quat_normalize(np.zeros(4))

    @given(st.lists(st.floats(-10, 10), min_size=4, max_size=4))
    def test_norm_is_one(self, vals):
        q = np.asarray(vals)
        if np.linalg.norm(q) < 1e-6:
            return
        out = quat_normalize(q)
        assert abs(np.linalg.norm(out) - 1.0) < 1e-9
        assert out[0] >= 0
