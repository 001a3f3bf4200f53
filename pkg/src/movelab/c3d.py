"""C3D motion-capture container: binary reader/writer and CSV conversion.

Layout follows the public C3D convention: 512-byte blocks, a header block,
a parameter section (groups of typed parameters) and an interleaved
point/analog data section. The reader accepts integer- and float-scaled
storage and all three processor byte orders (Intel, DEC, MIPS); the writer
always emits float storage and defaults to the Intel tag.

Residual/camera words are preserved per point but not interpreted. A
negative residual marks an invalid point and round-trips as a gap (NaN).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .core import MarkerFrameSet, UniformSeries
from .errors import MovelabError, ParseError, SchemaError, ValidationError

BLOCK = 512
PROCESSOR_INTEL = 84
PROCESSOR_DEC = 85
PROCESSOR_MIPS = 86
PROCESSORS = (PROCESSOR_INTEL, PROCESSOR_DEC, PROCESSOR_MIPS)

_MAX_PARAM_ENTRIES = 10_000


# ---------------------------------------------------------------------------
# per-processor scalar/array codecs

def _u16(data: bytes, off: int, proc: int) -> int:
    if off + 2 > len(data):
        raise ParseError("truncated stream reading 16-bit word", offset=off)
    order = ">" if proc == PROCESSOR_MIPS else "<"
    return struct.unpack_from(order + "H", data, off)[0]


def _i16(data: bytes, off: int, proc: int) -> int:
    if off + 2 > len(data):
        raise ParseError("truncated stream reading 16-bit word", offset=off)
    order = ">" if proc == PROCESSOR_MIPS else "<"
    return struct.unpack_from(order + "h", data, off)[0]


def _f32(data: bytes, off: int, proc: int) -> float:
    if off + 4 > len(data):
        raise ParseError("truncated stream reading 32-bit float", offset=off)
    raw = data[off : off + 4]
    if proc == PROCESSOR_MIPS:
        return struct.unpack(">f", raw)[0]
    if proc == PROCESSOR_DEC:
        swapped = bytes([raw[2], raw[3], raw[0], raw[1]])
        return struct.unpack("<f", swapped)[0] / 4.0
    return struct.unpack("<f", raw)[0]


def _pack_u16(value: int, proc: int) -> bytes:
    order = ">" if proc == PROCESSOR_MIPS else "<"
    return struct.pack(order + "H", value & 0xFFFF)


def _pack_f32(value: float, proc: int) -> bytes:
    if proc == PROCESSOR_MIPS:
        return struct.pack(">f", value)
    if proc == PROCESSOR_DEC:
        raw = struct.pack("<f", value * 4.0)
        return bytes([raw[2], raw[3], raw[0], raw[1]])
    return struct.pack("<f", value)


def _f32_array(data: bytes, off: int, count: int, proc: int) -> np.ndarray:
    end = off + 4 * count
    if end > len(data):
        raise ParseError(
            f"truncated stream reading {count} floats", offset=off
        )
    buf = data[off:end]
    with np.errstate(invalid="ignore", over="ignore"):
        if proc == PROCESSOR_MIPS:
            return np.frombuffer(buf, dtype=">f4").astype(np.float64)
        if proc == PROCESSOR_DEC:
            words = np.frombuffer(buf, dtype="<u4")
            rotated = ((words & 0xFFFF) << 16) | (words >> 16)
            return rotated.astype("<u4").view("<f4").astype(np.float64) / 4.0
        return np.frombuffer(buf, dtype="<f4").astype(np.float64)


def _i16_array(data: bytes, off: int, count: int, proc: int) -> np.ndarray:
    end = off + 2 * count
    if end > len(data):
        raise ParseError(f"truncated stream reading {count} ints", offset=off)
    dtype = ">i2" if proc == PROCESSOR_MIPS else "<i2"
    return np.frombuffer(data[off:end], dtype=dtype).astype(np.float64)


def _pack_f32_array(values: np.ndarray, proc: int) -> bytes:
    vals = np.asarray(values, dtype=np.float32)
    if proc == PROCESSOR_MIPS:
        return vals.astype(">f4").tobytes()
    if proc == PROCESSOR_DEC:
        words = (vals * 4.0).astype("<f4").view("<u4")
        rotated = ((words & 0xFFFF) << 16) | (words >> 16)
        return rotated.astype("<u4").tobytes()
    return vals.astype("<f4").tobytes()


# ---------------------------------------------------------------------------
# document model

@dataclass(frozen=True)
class C3dHeader:
    point_count: int
    analog_channels: int
    first_frame: int
    last_frame: int
    point_rate: float
    analog_ratio: int
    scale_factor: float
    data_start_block: int
    first_param_block: int
    processor: int
    max_gap: int = 0

    @property
    def n_frames(self) -> int:
        return self.last_frame - self.first_frame + 1

    @property
    def analog_rate(self) -> float:
        return self.point_rate * self.analog_ratio


@dataclass(frozen=True)
class C3dParameter:
    name: str
    value: object  # str, np.ndarray, or scalar
    description: str = ""


@dataclass(frozen=True)
class C3dGroup:
    name: str
    description: str = ""
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class C3dDocument:
    """Parsed C3D file. Point coordinates stay in the file's native units."""

    header: C3dHeader
    groups: dict
    point_labels: tuple
    point_data: MarkerFrameSet
    residuals: np.ndarray  # (frames, points) raw residual/camera words
    analog_labels: tuple
    analog_data: tuple  # of UniformSeries
    point_units: str = "mm"

    def param(self, group: str, name: str, default=None):
        g = self.groups.get(group)
        if g is None or name not in g.params:
            return default
        return g.params[name].value


def new_document(
    point_labels,
    positions,
    point_rate: float,
    analog_labels=(),
    analog_values: np.ndarray | None = None,
    analog_rate: float | None = None,
    point_units: str = "mm",
    first_frame: int = 1,
) -> C3dDocument:
    """Assemble an in-memory document from arrays, for writing or testing."""
    positions = np.asarray(positions, dtype=float)
    labels = tuple(str(x) for x in point_labels)
    n_frames = positions.shape[0] if positions.ndim == 3 else 0
    if analog_values is None:
        analog_values = np.zeros((0, 0))
        analog_labels = ()
        ratio = 0
    else:
        analog_values = np.atleast_2d(np.asarray(analog_values, dtype=float))
        if analog_rate is None:
            raise ValidationError("analog data needs an analog rate")
        ratio_f = analog_rate / point_rate
        ratio = int(round(ratio_f))
        if abs(ratio_f - ratio) > 1e-9 or ratio < 1:
            raise ValidationError(
                f"analog rate {analog_rate} is not an integer multiple of point rate {point_rate}"
            )
        if analog_values.shape[1] != n_frames * ratio:
            raise ValidationError(
                f"analog length {analog_values.shape[1]} != frames {n_frames} x ratio {ratio}"
            )
    analog_labels = tuple(str(x) for x in analog_labels)
    if analog_values.size and analog_values.shape[0] != len(analog_labels):
        raise ValidationError("one analog label per channel required")
    header = C3dHeader(
        point_count=len(labels),
        analog_channels=len(analog_labels),
        first_frame=first_frame,
        last_frame=first_frame + n_frames - 1,
        point_rate=float(point_rate),
        analog_ratio=ratio,
        scale_factor=-1.0,
        data_start_block=3,
        first_param_block=2,
        processor=PROCESSOR_INTEL,
    )
    t0 = (first_frame - 1) / point_rate
    analog_series = tuple(
        UniformSeries(analog_values[c], point_rate * ratio, t0)
        for c in range(len(analog_labels))
    )
    mfs = MarkerFrameSet(labels, positions, point_rate)
    return C3dDocument(
        header=header,
        groups={},
        point_labels=labels,
        point_data=mfs,
        residuals=np.zeros((n_frames, len(labels))),
        analog_labels=analog_labels,
        analog_data=analog_series,
        point_units=point_units,
    )


# ---------------------------------------------------------------------------
# reader

def _parse_parameters(data: bytes, start: int, proc: int) -> dict:
    groups_by_id: dict[int, C3dGroup] = {}
    pending_params: list[tuple[int, C3dParameter]] = []
    pos = start + 4  # skip the 4-byte parameter header
    for _ in range(_MAX_PARAM_ENTRIES):
        if pos + 2 > len(data):
            break
        name_len = struct.unpack_from("b", data, pos)[0]
        group_id = struct.unpack_from("b", data, pos + 1)[0]
        if name_len == 0 or group_id == 0:
            break
        n = abs(name_len)  # negative length only marks the entry as locked
        if pos + 2 + n > len(data):
            raise ParseError("truncated parameter name", offset=pos)
        name = data[pos + 2 : pos + 2 + n].decode("ascii", errors="replace").strip()
        cursor = pos + 2 + n
        offset = _i16(data, cursor, proc)
        # the offset counts from the start of the offset field itself
        next_entry = cursor + offset if offset != 0 else None
        cursor += 2
        if group_id < 0:
            if cursor >= len(data):
                raise ParseError("truncated group description", offset=cursor)
            desc_len = data[cursor]
            desc = data[cursor + 1 : cursor + 1 + desc_len].decode(
                "ascii", errors="replace"
            )
            gid = -group_id
            existing = groups_by_id.get(gid)
            params = existing.params if existing else {}
            groups_by_id[gid] = C3dGroup(name=name, description=desc, params=params)
        else:
            if cursor + 2 > len(data):
                raise ParseError("truncated parameter header", offset=cursor)
            elem_size = struct.unpack_from("b", data, cursor)[0]
            n_dims = data[cursor + 1]
            if n_dims > 7:
                raise ParseError(f"parameter {name!r} has {n_dims} dimensions", offset=cursor)
            cursor += 2
            if cursor + n_dims > len(data):
                raise ParseError("truncated parameter dimensions", offset=cursor)
            dims = list(data[cursor : cursor + n_dims])
            cursor += n_dims
            count = 1
            for d in dims:
                count *= d
            nbytes = count * abs(elem_size)
            if cursor + nbytes > len(data):
                raise ParseError(f"truncated data for parameter {name!r}", offset=cursor)
            raw = data[cursor : cursor + nbytes]
            value: object
            if elem_size == -1:
                if len(dims) <= 1:
                    value = raw.decode("ascii", errors="replace").rstrip(" \x00")
                else:
                    width = dims[0]
                    n_items = count // width if width else 0
                    value = tuple(
                        raw[i * width : (i + 1) * width]
                        .decode("ascii", errors="replace")
                        .rstrip(" \x00")
                        for i in range(n_items)
                    )
            elif elem_size == 1:
                value = np.frombuffer(raw, dtype=np.int8).copy()
            elif elem_size == 2:
                value = _i16_array(raw, 0, count, proc)
            elif elem_size == 4:
                value = _f32_array(raw, 0, count, proc)
            else:
                raise ParseError(
                    f"parameter {name!r} has unsupported element size {elem_size}",
                    offset=cursor,
                )
            if isinstance(value, np.ndarray) and value.size == 1:
                value = value[0].item()
            pending_params.append((group_id, C3dParameter(name=name, value=value)))
        if next_entry is None or next_entry <= pos:
            break
        pos = next_entry
    else:
        raise ParseError("parameter section does not terminate", offset=start)

    groups: dict[str, C3dGroup] = {}
    for gid, group in groups_by_id.items():
        groups[group.name] = group
    for gid, param in pending_params:
        group = groups_by_id.get(gid)
        if group is None:
            group = C3dGroup(name=f"GROUP{gid}")
            groups_by_id[gid] = group
            groups[group.name] = group
        group.params[param.name] = param
    return groups


def read_c3d(data: bytes) -> C3dDocument:
    """Decode a complete C3D byte stream into a document.

    Raises ParseError (never anything else) on malformed input, naming the
    byte offset where decoding failed.
    """
    try:
        return _read_c3d_inner(data)
    except ParseError:
        raise
    except (
        MovelabError,
        struct.error,
        ValueError,
        IndexError,
        OverflowError,
        MemoryError,
    ) as exc:
        raise ParseError(f"malformed C3D stream: {exc}") from exc


def _read_c3d_inner(data: bytes) -> C3dDocument:
    if len(data) < BLOCK:
        raise ParseError(
            f"stream of {len(data)} bytes is shorter than one 512-byte block", offset=0
        )
    first_param_block = data[0]
    magic = data[1]
    if magic != 0x50:
        raise ParseError(f"bad magic byte 0x{magic:02x}, expected 0x50", offset=1)
    if first_param_block < 1:
        raise ParseError("first parameter block index must be >= 1", offset=0)
    param_start = (first_param_block - 1) * BLOCK
    if param_start + 4 > len(data):
        raise ParseError("parameter section outside stream", offset=param_start)
    processor = data[param_start + 3]
    if processor not in PROCESSORS:
        raise ParseError(
            f"unknown processor type {processor}", offset=param_start + 3
        )

    point_count = _u16(data, 2, processor)
    analog_per_frame = _u16(data, 4, processor)
    first_frame = _u16(data, 6, processor)
    last_frame = _u16(data, 8, processor)
    max_gap = _u16(data, 10, processor)
    scale = _f32(data, 12, processor)
    data_start_block = _u16(data, 16, processor)
    analog_ratio = _u16(data, 18, processor)
    point_rate = _f32(data, 20, processor)

    if last_frame < first_frame:
        raise ParseError(
            f"last frame {last_frame} precedes first frame {first_frame}", offset=8
        )
    if point_rate <= 0 or not np.isfinite(point_rate):
        raise ParseError(f"invalid point rate {point_rate}", offset=20)
    if analog_ratio > 0:
        if analog_per_frame % analog_ratio != 0:
            raise ParseError(
                f"analog words per frame ({analog_per_frame}) not divisible by "
                f"samples-per-frame ratio ({analog_ratio})",
                offset=4,
            )
        analog_channels = analog_per_frame // analog_ratio
    else:
        if analog_per_frame != 0:
            raise ParseError(
                f"analog words per frame {analog_per_frame} with zero ratio", offset=18
            )
        analog_channels = 0

    groups = _parse_parameters(data, param_start, processor)

    header = C3dHeader(
        point_count=point_count,
        analog_channels=analog_channels,
        first_frame=first_frame,
        last_frame=last_frame,
        point_rate=float(point_rate),
        analog_ratio=analog_ratio,
        scale_factor=float(scale),
        data_start_block=data_start_block,
        first_param_block=first_param_block,
        processor=processor,
        max_gap=max_gap,
    )

    n_frames = header.n_frames
    float_storage = scale < 0
    word_size = 4 if float_storage else 2
    frame_words = point_count * 4 + analog_per_frame
    data_start = (data_start_block - 1) * BLOCK
    if data_start < 0 or data_start > len(data):
        raise ParseError(f"data section starts outside stream", offset=16)
    available = len(data) - data_start
    needed = n_frames * frame_words * word_size
    if frame_words > 0 and needed > available:
        capacity = available // (frame_words * word_size) if frame_words else 0
        raise ParseError(
            f"header declares {n_frames} frames but the stream holds data for "
            f"{capacity} frames",
            offset=data_start,
        )

    if float_storage:
        flat = _f32_array(data, data_start, n_frames * frame_words, processor)
    else:
        flat = _i16_array(data, data_start, n_frames * frame_words, processor)
    flat = flat.reshape(n_frames, frame_words) if frame_words else flat.reshape(n_frames, 0)

    point_block = flat[:, : point_count * 4].reshape(n_frames, point_count, 4)
    positions = point_block[:, :, :3].copy()
    residuals = point_block[:, :, 3].copy()
    if not float_storage:
        positions *= abs(scale)
    # negative residual or undecodable coordinates mark the point invalid -> gap
    invalid = (residuals < 0) | ~np.isfinite(residuals) | ~np.isfinite(positions).all(axis=2)
    positions[invalid] = np.nan
    residuals[~np.isfinite(residuals)] = -1.0

    analog_block = flat[:, point_count * 4 :]
    analog_series = []
    if analog_channels:
        if not np.isfinite(analog_block).all():
            raise ParseError("non-finite analog sample in data section", offset=data_start)
        # stored per frame as ratio sub-samples x channels
        stacked = analog_block.reshape(n_frames * analog_ratio, analog_channels)
        if not float_storage:
            offsets = np.zeros(analog_channels)
            scales = np.ones(analog_channels)
            gen_scale = 1.0
            off_param = _group_param(groups, "ANALOG", "OFFSET")
            if off_param is not None:
                offsets = np.resize(np.atleast_1d(off_param), analog_channels)
            scale_param = _group_param(groups, "ANALOG", "SCALE")
            if scale_param is not None:
                scales = np.resize(np.atleast_1d(scale_param), analog_channels)
            gen_param = _group_param(groups, "ANALOG", "GEN_SCALE")
            if gen_param is not None:
                gen_scale = float(np.atleast_1d(gen_param)[0])
            stacked = (stacked - offsets) * scales * gen_scale
        t0 = (first_frame - 1) / point_rate
        analog_series = [
            UniformSeries(stacked[:, c].copy(), header.analog_rate, t0)
            for c in range(analog_channels)
        ]

    point_labels = _labels_from_groups(groups, "POINT", point_count)
    analog_labels = _labels_from_groups(groups, "ANALOG", analog_channels)
    units_val = _group_param(groups, "POINT", "UNITS")
    if isinstance(units_val, tuple) and units_val:
        point_units = units_val[0]
    elif isinstance(units_val, str) and units_val:
        point_units = units_val
    else:
        point_units = "mm"

    mfs = MarkerFrameSet(point_labels, positions, float(point_rate))
    return C3dDocument(
        header=header,
        groups=groups,
        point_labels=point_labels,
        point_data=mfs,
        residuals=residuals,
        analog_labels=analog_labels,
        analog_data=tuple(analog_series),
        point_units=point_units,
    )


def _group_param(groups: dict, group: str, name: str):
    g = groups.get(group)
    if g is None or name not in g.params:
        return None
    return g.params[name].value


def _labels_from_groups(groups: dict, group: str, count: int) -> tuple:
    value = _group_param(groups, group, "LABELS")
    labels: list[str] = []
    if isinstance(value, tuple):
        labels = [v.strip() for v in value]
    elif isinstance(value, str) and value:
        labels = [value.strip()]
    labels = labels[:count]
    while len(labels) < count:
        labels.append(f"{group[0]}{len(labels) + 1}")
    # uniqueness: suffix duplicates
    seen: dict[str, int] = {}
    out = []
    for lab in labels:
        if lab in seen:
            seen[lab] += 1
            out.append(f"{lab}_{seen[lab]}")
        else:
            seen[lab] = 0
            out.append(lab)
    return tuple(out)


# ---------------------------------------------------------------------------
# writer

def _char_param(name: str, strings: list[str]) -> tuple:
    width = max([4] + [len(s) for s in strings])
    try:
        data = b"".join(s.ljust(width).encode("ascii") for s in strings)
    except UnicodeEncodeError as exc:
        raise ValidationError(f"labels must be ASCII for C3D storage: {exc}") from exc
    return (name, -1, [width, len(strings)], data)


def _int_param(name: str, values) -> tuple:
    vals = np.atleast_1d(np.asarray(values, dtype=np.int64))
    dims = [] if vals.size == 1 else [vals.size]
    return (name, 2, dims, vals)


def _float_param(name: str, values) -> tuple:
    vals = np.atleast_1d(np.asarray(values, dtype=float))
    dims = [] if vals.size == 1 else [vals.size]
    return (name, 4, dims, vals)


def _encode_param_entry(
    name: str, group_id: int, body: bytes, is_last: bool, proc: int
) -> bytes:
    name_b = name.encode("ascii")
    head = struct.pack("bb", len(name_b), group_id) + name_b
    offset = 0 if is_last else len(body) + 2  # counted from the offset field start
    order = ">" if proc == PROCESSOR_MIPS else "<"
    return head + struct.pack(order + "h", offset) + body


def _encode_group(name: str, group_id: int, desc: str = "") -> tuple:
    desc_b = desc.encode("ascii")
    return (name, -group_id, bytes([len(desc_b)]) + desc_b)


def _encode_parameter(spec: tuple, group_id: int, proc: int) -> tuple:
    name, elem_size, dims, payload = spec
    if elem_size == -1:
        data = payload
    elif elem_size == 2:
        data = b"".join(_pack_u16(int(v), proc) for v in payload)
    else:
        data = b"".join(_pack_f32(float(v), proc) for v in payload)
    body = struct.pack("bb", elem_size, len(dims)) + bytes(dims) + data + b"\x00"
    return (name, group_id, body)


def write_c3d(doc: C3dDocument, processor: int = PROCESSOR_INTEL) -> bytes:
    """Serialize a document with float storage; round-trips through read_c3d."""
    if processor not in PROCESSORS:
        raise ValidationError(f"unknown processor type {processor}")
    n_frames = doc.point_data.n_frames
    n_points = doc.point_data.n_markers
    if n_points == 0:
        raise ValidationError("cannot write a document with zero markers")
    if n_frames == 0:
        raise ValidationError("cannot write a document with zero frames")
    if n_frames > 0xFFFF:
        raise ValidationError(f"{n_frames} frames exceed the 16-bit frame counter")
    ratio = doc.header.analog_ratio if doc.analog_labels else 0
    n_channels = len(doc.analog_labels)
    point_rate = doc.point_data.rate_hz

    group_specs = [
        (
            "POINT",
            "",
            [
                _int_param("USED", n_points),
                _int_param("FRAMES", min(n_frames, 0x7FFF)),
                _int_param("DATA_START", 0),  # patched below
                _float_param("SCALE", -1.0),
                _float_param("RATE", point_rate),
                _char_param("UNITS", [doc.point_units]),
                _char_param("LABELS", list(doc.point_labels)),
            ],
        ),
        (
            "ANALOG",
            "",
            [
                _int_param("USED", n_channels),
                _float_param("RATE", point_rate * ratio if ratio else 0.0),
                _float_param("GEN_SCALE", 1.0),
            ]
            + ([_char_param("LABELS", list(doc.analog_labels))] if n_channels else []),
        ),
    ]

    def build_param_section(data_start_block: int) -> bytes:
        entries = []
        for gid, (gname, gdesc, params) in enumerate(group_specs, start=1):
            entries.append(_encode_group(gname, gid, gdesc))
            for p in params:
                if gname == "POINT" and p[0] == "DATA_START":
                    p = _int_param("DATA_START", data_start_block)
                entries.append(_encode_parameter(p, gid, processor))
        blob = b""
        for i, (name, gid, body) in enumerate(entries):
            blob += _encode_param_entry(
                name, gid, body, is_last=(i == len(entries) - 1), proc=processor
            )
        n_blocks = (4 + len(blob) + BLOCK - 1) // BLOCK
        head = bytes([1, 0x50, n_blocks, processor])
        section = head + blob
        return section + b"\x00" * (n_blocks * BLOCK - len(section))

    # parameter section size is independent of the data_start value (fixed-width ints)
    param_section = build_param_section(0)
    data_start_block = 2 + len(param_section) // BLOCK
    param_section = build_param_section(data_start_block)

    header = bytearray(BLOCK)
    header[0] = 2
    header[1] = 0x50
    header[2:4] = _pack_u16(n_points, processor)
    header[4:6] = _pack_u16(n_channels * ratio, processor)
    header[6:8] = _pack_u16(doc.header.first_frame, processor)
    header[8:10] = _pack_u16(doc.header.first_frame + n_frames - 1, processor)
    header[10:12] = _pack_u16(doc.header.max_gap, processor)
    header[12:16] = _pack_f32(-1.0, processor)
    header[16:18] = _pack_u16(data_start_block, processor)
    header[18:20] = _pack_u16(ratio, processor)
    header[20:24] = _pack_f32(point_rate, processor)

    positions = np.array(doc.point_data.positions, dtype=float)
    residuals = np.array(doc.residuals, dtype=float)
    gaps = np.isnan(positions).all(axis=2)
    positions = np.nan_to_num(positions, nan=0.0)
    residuals = residuals.copy()
    residuals[gaps] = -1.0

    frame_words = n_points * 4 + n_channels * ratio
    flat = np.zeros((n_frames, frame_words), dtype=float)
    point_block = np.concatenate([positions, residuals[:, :, None]], axis=2)
    flat[:, : n_points * 4] = point_block.reshape(n_frames, n_points * 4)
    if n_channels:
        stacked = np.column_stack([s.values for s in doc.analog_data])
        flat[:, n_points * 4 :] = stacked.reshape(n_frames, ratio * n_channels)

    body = _pack_f32_array(flat.ravel(), processor)
    body += b"\x00" * ((-len(body)) % BLOCK)
    return bytes(header) + param_section + body


# ---------------------------------------------------------------------------
# CSV conversion

def c3d_to_csv(doc: C3dDocument) -> tuple[str, str | None]:
    """Render points (and analog channels, when present) as CSV text.

    Points: ``time,<label>_X,<label>_Y,<label>_Z`` per marker. Analog:
    ``time`` plus one column per channel, or None without analog data.
    Values carry 9 significant digits.
    """
    mfs = doc.point_data
    t0 = (doc.header.first_frame - 1) / mfs.rate_hz
    times = t0 + np.arange(mfs.n_frames) / mfs.rate_hz
    header = ["time"]
    for label in mfs.marker_names:
        header += [f"{label}_X", f"{label}_Y", f"{label}_Z"]
    lines = [",".join(header)]
    flat = mfs.positions.reshape(mfs.n_frames, -1)
    for k in range(mfs.n_frames):
        row = [f"{times[k]:.9g}"]
        row += ["" if np.isnan(v) else f"{v:.9g}" for v in flat[k]]
        lines.append(",".join(row))
    points_csv = "\n".join(lines) + "\n"

    if not doc.analog_data:
        return points_csv, None
    n = len(doc.analog_data[0])
    a_rate = doc.analog_data[0].rate_hz
    a_t0 = doc.analog_data[0].t0_s
    times = a_t0 + np.arange(n) / a_rate
    lines = [",".join(["time"] + list(doc.analog_labels))]
    cols = np.column_stack([s.values for s in doc.analog_data])
    for k in range(n):
        lines.append(
            ",".join([f"{times[k]:.9g}"] + [f"{v:.9g}" for v in cols[k]])
        )
    return points_csv, "\n".join(lines) + "\n"


def csv_to_c3d(points_csv: str, rate_hz: float, point_units: str = "mm") -> C3dDocument:
    """Parse triplet-convention CSV (time,<label>_X,_Y,_Z ...) into a document."""
    lines = [ln for ln in points_csv.split("\n") if ln.strip()]
    if not lines:
        raise SchemaError("empty points CSV")
    header = [h.strip() for h in lines[0].split(",")]
    if not header or header[0].lower() not in ("time", "frame"):
        raise SchemaError(f"first column must be time, got {header[0]!r}", line=1)
    coord_cols = header[1:]
    if len(coord_cols) == 0 or len(coord_cols) % 3 != 0:
        raise SchemaError(
            f"{len(header)} columns: expected time plus X/Y/Z triplets "
            "(column count must be 1 mod 3)",
            line=1,
        )
    labels = []
    for i in range(0, len(coord_cols), 3):
        trio = coord_cols[i : i + 3]
        stems = []
        for col, suffix in zip(trio, ("_X", "_Y", "_Z")):
            if not col.upper().endswith(suffix):
                raise SchemaError(
                    f"column {col!r} should end with {suffix}", line=1
                )
            stems.append(col[: -len(suffix)])
        if len(set(stems)) != 1:
            raise SchemaError(f"triplet {trio} mixes marker names", line=1)
        labels.append(stems[0])

    n_cols = len(header)
    rows = np.full((len(lines) - 1, n_cols - 1), np.nan)
    for i, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != n_cols:
            raise SchemaError(
                f"row has {len(parts)} fields, expected {n_cols}", line=i
            )
        for j, cell in enumerate(parts[1:]):
            cell = cell.strip()
            if cell == "":
                continue
            try:
                rows[i - 2, j] = float(cell)
            except ValueError:
                raise SchemaError(f"bad number {cell!r}", line=i) from None
    positions = rows.reshape(len(lines) - 1, len(labels), 3)
    return new_document(labels, positions, rate_hz, point_units=point_units)
