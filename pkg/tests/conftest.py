import numpy as np
import pytest

F32_RTOL = 1.2e-7  # one part in 2**23


def random_c3d_document(rng, with_analog=True, with_gaps=False):
    from movelab.c3d import new_document

    n_markers = int(rng.integers(1, 6))
    n_frames = int(rng.integers(1, 40))
    rate = float(rng.choice([50.0, 100.0, 200.0, 250.0]))
    labels = [f"M{i+1}" for i in range(n_markers)]
    positions = rng.uniform(-2000.0, 2000.0, size=(n_frames, n_markers, 3))
    if with_gaps and n_frames > 2:
        positions[int(rng.integers(0, n_frames)), int(rng.integers(0, n_markers))] = np.nan
    if with_analog and rng.random() > 0.3:
        ratio = int(rng.choice([1, 2, 4, 10]))
        n_ch = int(rng.integers(1, 4))
        analog = rng.uniform(-10.0, 10.0, size=(n_ch, n_frames * ratio))
        return new_document(
            labels,
            positions,
            rate,
            analog_labels=[f"A{c+1}" for c in range(n_ch)],
            analog_values=analog,
            analog_rate=rate * ratio,
        )
    return new_document(labels, positions, rate)


def assert_c3d_documents_equal(a, b, rtol=F32_RTOL):
    assert a.point_labels == b.point_labels
    assert a.analog_labels == b.analog_labels
    assert a.header.first_frame == b.header.first_frame
    assert a.point_data.n_frames == b.point_data.n_frames
    assert a.point_data.rate_hz == pytest.approx(b.point_data.rate_hz, rel=rtol)
    pa, pb = a.point_data.positions, b.point_data.positions
    assert np.array_equal(np.isnan(pa), np.isnan(pb))
    ok = ~np.isnan(pa)
    assert np.allclose(pa[ok], pb[ok], rtol=rtol, atol=1e-3)
    assert len(a.analog_data) == len(b.analog_data)
    for sa, sb in zip(a.analog_data, b.analog_data):
        assert sa.rate_hz == pytest.approx(sb.rate_hz, rel=rtol)
        assert np.allclose(sa.values, sb.values, rtol=rtol, atol=1e-6)
