import numpy as np
import pytest

from movelab.c3d import (
    PROCESSOR_DEC,
    PROCESSOR_INTEL,
    PROCESSOR_MIPS,
    c3d_to_csv,
    csv_to_c3d,
    new_document,
    read_c3d,
    write_c3d,
)
from movelab.errors import ParseError, SchemaError, ValidationError

F32_RTOL = 1.2e-7  # one part in 2**23


def random_document(rng, with_analog=True, with_gaps=False):
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


def assert_documents_equal(a, b, rtol=F32_RTOL):
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


class TestRoundTrip:
    def test_simple_document(self):
        rng = np.random.default_rng(0)
        doc = new_document(
            ["HIP", "KNEE"], rng.uniform(-1000, 1000, size=(10, 2, 3)), 100.0
        )
        again = read_c3d(write_c3d(doc))
        assert_documents_equal(doc, again)

    def test_100_randomized_documents(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            doc = random_document(rng, with_gaps=True)
            again = read_c3d(write_c3d(doc))
            assert_documents_equal(doc, again)

    def test_all_three_byte_orders_decode_identically(self):
        rng = np.random.default_rng(2)
        doc = random_document(rng)
        decoded = [
            read_c3d(write_c3d(doc, processor=proc))
            for proc in (PROCESSOR_INTEL, PROCESSOR_DEC, PROCESSOR_MIPS)
        ]
        for other in decoded[1:]:
            assert_documents_equal(decoded[0], other, rtol=1e-6)

    def test_analog_ratio_encoded(self):
        rng = np.random.default_rng(3)
        doc = new_document(
            ["M1"],
            rng.uniform(-10, 10, size=(5, 1, 3)),
            100.0,
            analog_labels=["FZ"],
            analog_values=rng.uniform(0, 700, size=(1, 100)),
            analog_rate=2000.0,
        )
        again = read_c3d(write_c3d(doc))
        assert again.header.analog_ratio == 20
        assert again.analog_data[0].rate_hz == pytest.approx(2000.0)

    def test_units_round_trip(self):
        rng = np.random.default_rng(4)
        doc = new_document(
            ["M1"], rng.uniform(-1, 1, size=(4, 1, 3)), 60.0, point_units="m"
        )
        assert read_c3d(write_c3d(doc)).point_units == "m"


class TestWriterValidation:
    def test_zero_markers_rejected(self):
        doc = new_document(["M1"], np.zeros((3, 1, 3)), 100.0)
        broken = new_document(["M1"], np.zeros((3, 1, 3)), 100.0)
        object.__setattr__(
            broken, "point_data", doc.point_data
        )  # keep a valid doc; build the zero-marker case directly instead
        with pytest.raises(ValidationError):
            write_c3d(new_document([], np.zeros((3, 0, 3)), 100.0))

    def test_non_integer_analog_ratio_rejected(self):
        with pytest.raises(ValidationError):
            new_document(
                ["M1"],
                np.zeros((4, 1, 3)),
                100.0,
                analog_labels=["A1"],
                analog_values=np.zeros((1, 6)),
                analog_rate=150.0,
            )


class TestIntegerStorage:
    @staticmethod
    def build_integer_stream():
        """Hand-assembled integer-storage file: 1 marker, 2 frames, 1 analog
        channel at ratio 2, point scale +0.5, analog offset/scale params."""
        import struct

        header = bytearray(512)
        header[0] = 2  # parameter section at block 2
        header[1] = 0x50
        struct.pack_into("<H", header, 2, 1)  # 1 point
        struct.pack_into("<H", header, 4, 2)  # 2 analog words per frame
        struct.pack_into("<H", header, 6, 1)  # first frame
        struct.pack_into("<H", header, 8, 2)  # last frame
        struct.pack_into("<f", header, 12, 0.5)  # positive scale -> int storage
        struct.pack_into("<H", header, 16, 3)  # data at block 3
        struct.pack_into("<H", header, 18, 2)  # analog ratio
        struct.pack_into("<f", header, 20, 100.0)  # point rate

        params = bytearray(512)
        params[0] = 1
        params[1] = 0x50
        params[2] = 1
        params[3] = 84  # Intel

        def entry(name, gid, body, last=False):
            blob = struct.pack("bb", len(name), gid) + name.encode()
            offset = 0 if last else len(body) + 2
            return blob + struct.pack("<h", offset) + body

        group_body = bytes([0])  # empty description
        analog_group = entry("ANALOG", -1, group_body)
        # OFFSET = 50 (int16), SCALE = 0.25 (float), GEN_SCALE = 2.0 (float)
        offset_body = struct.pack("bb", 2, 0) + struct.pack("<h", 50) + bytes([0])
        scale_body = struct.pack("bb", 4, 0) + struct.pack("<f", 0.25) + bytes([0])
        gen_body = struct.pack("bb", 4, 0) + struct.pack("<f", 2.0) + bytes([0])
        blob = (
            analog_group
            + entry("OFFSET", 1, offset_body)
            + entry("SCALE", 1, scale_body)
            + entry("GEN_SCALE", 1, gen_body, last=True)
        )
        params[4 : 4 + len(blob)] = blob

        data = bytearray(512)
        frame1 = struct.pack("<4h", 10, -20, 30, 5) + struct.pack("<2h", 100, 200)
        frame2 = struct.pack("<4h", 7, 8, 9, -1) + struct.pack("<2h", 300, 400)
        data[: len(frame1) + len(frame2)] = frame1 + frame2
        return bytes(header) + bytes(params) + bytes(data)

    def test_integer_points_scaled_and_gaps_decoded(self):
        doc = read_c3d(self.build_integer_stream())
        assert doc.header.scale_factor == pytest.approx(0.5)
        pos = doc.point_data.positions
        assert pos.shape == (2, 1, 3)
        assert tuple(pos[0, 0]) == (5.0, -10.0, 15.0)  # raw * 0.5
        assert np.isnan(pos[1, 0]).all()  # negative residual -> gap
        assert doc.residuals[0, 0] == 5.0

    def test_integer_analog_offset_and_scales_applied(self):
        doc = read_c3d(self.build_integer_stream())
        assert len(doc.analog_data) == 1
        series = doc.analog_data[0]
        assert series.rate_hz == pytest.approx(200.0)
        # (raw - 50) * 0.25 * 2.0
        expected = [(100 - 50) * 0.5, (200 - 50) * 0.5, (300 - 50) * 0.5, (400 - 50) * 0.5]
        assert np.allclose(series.values, expected)


class TestReaderErrors:
    def test_empty_stream(self):
        with pytest.raises(ParseError) as err:
            read_c3d(b"")
        assert err.value.offset == 0

    def test_bad_magic(self):
        data = bytearray(1024)
        data[0] = 2
        data[1] = 0x42
        with pytest.raises(ParseError, match="magic"):
            read_c3d(bytes(data))

    def test_truncated_frames_cites_both_counts(self):
        rng = np.random.default_rng(5)
        doc = new_document(
            ["M1", "M2"], rng.uniform(-10, 10, size=(100, 2, 3)), 100.0
        )
        blob = write_c3d(doc)
        data_start = (read_c3d(blob).header.data_start_block - 1) * 512
        frame_bytes = 2 * 4 * 4  # 2 markers x 4 words x float32
        truncated = blob[: data_start + 50 * frame_bytes]
        with pytest.raises(ParseError, match="100 frames.*50 frames"):
            read_c3d(truncated)


class TestFuzz:
    def test_random_bytes_never_crash(self):
        rng = np.random.default_rng(6)
        for _ in range(10_000):
            n = int(rng.integers(0, 2000))
            blob = rng.integers(0, 256, size=n, dtype=np.uint8).tobytes()
            try:
                read_c3d(blob)
            except ParseError:
                pass

    def test_mutated_valid_files_never_crash(self):
        rng = np.random.default_rng(7)
        doc = random_document(rng)
        blob = bytearray(write_c3d(doc))
        for _ in range(2000)[:2000]:
            mutated = bytearray(blob)
            for _ in range(int(rng.integers(1, 30))):
                mutated[int(rng.integers(0, len(mutated)))] = int(rng.integers(0, 256))
            try:
                read_c3d(bytes(mutated))
            except ParseError:
                pass


class TestCsvConversion:
    def test_points_header_shape(self):
        rng = np.random.default_rng(8)
        doc = new_document(
            ["A", "B", "C"], rng.uniform(-10, 10, size=(4, 3, 3)), 100.0
        )
        points_csv, analog_csv = c3d_to_csv(doc)
        header = points_csv.splitlines()[0].split(",")
        assert len(header) == 1 + 3 * 3
        assert header[:4] == ["time", "A_X", "A_Y", "A_Z"]
        assert analog_csv is None

    def test_analog_csv_present_when_channels_exist(self):
        rng = np.random.default_rng(9)
        doc = new_document(
            ["M1"],
            rng.uniform(-10, 10, size=(5, 1, 3)),
            100.0,
            analog_labels=["FZ", "FX"],
            analog_values=rng.uniform(-5, 5, size=(2, 10)),
            analog_rate=200.0,
        )
        _, analog_csv = c3d_to_csv(doc)
        assert analog_csv.splitlines()[0] == "time,FZ,FX"
        assert len(analog_csv.splitlines()) == 11

    def test_csv_round_trip_preserves_points(self):
        rng = np.random.default_rng(10)
        doc = new_document(
            ["HIP", "KNEE"], rng.uniform(-2000, 2000, size=(25, 2, 3)), 250.0
        )
        points_csv, _ = c3d_to_csv(doc)
        again = csv_to_c3d(points_csv, 250.0)
        assert again.point_labels == ("HIP", "KNEE")
        rel = np.abs(again.point_data.positions - doc.point_data.positions) / np.maximum(
            np.abs(doc.point_data.positions), 1e-9
        )
        assert rel.max() < 1e-6

    def test_known_csv_to_document(self):
        csv_text = (
            "time,M1_X,M1_Y,M1_Z,M2_X,M2_Y,M2_Z\n"
            "0,1,2,3,4,5,6\n"
            "0.01,7,8,9,10,11,12\n"
        )
        doc = csv_to_c3d(csv_text, 100.0)
        assert doc.point_labels == ("M1", "M2")
        assert doc.point_data.n_frames == 2
        assert doc.point_data.positions[1, 1, 2] == 12.0

    def test_eight_column_csv_rejected(self):
        csv_text = "time,a_X,a_Y,a_Z,b_X,b_Y,b_Z,extra\n0,1,2,3,4,5,6,7\n"
        with pytest.raises(SchemaError):
            csv_to_c3d(csv_text, 100.0)

    def test_ragged_row_names_line(self):
        csv_text = "time,M1_X,M1_Y,M1_Z\n0,1,2,3\n0.01,1,2\n"
        with pytest.raises(SchemaError) as err:
            csv_to_c3d(csv_text, 100.0)
        assert err.value.line == 3

    def test_gap_cells_round_trip_empty(self):
        pos = np.ones((3, 1, 3))
        pos[1, 0, :] = np.nan
        doc = new_document(["M1"], pos, 100.0)
        points_csv, _ = c3d_to_csv(doc)
        row = points_csv.splitlines()[2]
        assert row.split(",")[1:] == ["", "", ""]
        again = csv_to_c3d(points_csv, 100.0)
        assert np.isnan(again.point_data.positions[1, 0]).all()
