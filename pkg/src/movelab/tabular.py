"""Typed CSV schemas and batch file discovery.

Covers the tabular artifacts that move between tools: landmark tables
(normalized or pixel), video sync tables, pixel-annotation tables, and the
run manifest that records what a batch run consumed and produced.

Dialect everywhere: comma separator, ``.`` decimal, LF newlines, UTF-8,
mandatory header row. Parsers reject rather than guess; malformed input
raises SchemaError naming the file and line.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import UniformSeries
from .errors import (
    EmptyResultError,
    PathError,
    SchemaError,
    SyncLookupError,
    ValidationError,
)

LANDMARK_KINDS = ("normalized", "pixel")
_COORD_SUFFIXES = ("x", "y", "z", "visibility")


def discover(root_dir, extension_pattern: str) -> list[Path]:
    """Recursive, deterministic (lexicographic) listing of matching files.

    ``extension_pattern`` is a suffix like ``.c3d`` or ``csv``; matching is
    case-insensitive.
    """
    root = Path(root_dir)
    if not root.is_dir():
        raise PathError(f"input root {root} does not exist or is not a directory")
    suffix = extension_pattern.lower()
    if not suffix.startswith("."):
        suffix = "." + suffix
    hits = [
        p
        for p in root.rglob("*")
        if p.is_file() and p.suffix.lower() == suffix
    ]
    return sorted(hits, key=lambda p: p.as_posix())


# ---------------------------------------------------------------------------
# landmark tables

@dataclass(frozen=True)
class LandmarkTable:
    """Per-frame landmark coordinates, normalized ([0, 1]) or pixel."""

    kind: str
    landmark_names: tuple
    coord_names: tuple  # e.g. ("x", "y", "z") applying to every landmark
    data: np.ndarray  # (frames, landmarks, coords); NaN = missing
    source: str = ""

    def __post_init__(self):
        if self.kind not in LANDMARK_KINDS:
            raise ValidationError(f"kind must be one of {LANDMARK_KINDS}, got {self.kind!r}")
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 3 or data.shape[1] != len(self.landmark_names):
            raise ValidationError(
                f"data shape {data.shape} does not match {len(self.landmark_names)} landmarks"
            )
        if data.shape[2] != len(self.coord_names):
            raise ValidationError(
                f"{data.shape[2]} coordinates per landmark but {len(self.coord_names)} names"
            )
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "landmark_names", tuple(self.landmark_names))
        object.__setattr__(self, "coord_names", tuple(self.coord_names))

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    def out_of_range_mask(self) -> np.ndarray:
        """(frames, landmarks) mask of normalized x/y outside [0, 1].

        Out-of-range values are flagged, never rejected.
        """
        if self.kind != "normalized":
            return np.zeros(self.data.shape[:2], dtype=bool)
        xy = self.data[:, :, :2]
        with np.errstate(invalid="ignore"):
            return ((xy < 0.0) | (xy > 1.0)).any(axis=2)


def parse_landmarks(text: str, kind: str, source: str = "<memory>") -> LandmarkTable:
    """Parse a landmark CSV: ``frame`` (or ``frame_index``) then coordinate columns.

    Landmark names come from header prefixes (``<name>_<suffix>``); every
    landmark must carry the same suffix set.
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("empty landmark CSV", source=source, line=1) from None
    header = [h.strip() for h in header]
    if not header or header[0].lower() not in ("frame", "frame_index"):
        raise SchemaError(
            f"first column must be frame/frame_index, got {header[0] if header else ''!r}",
            source=source,
            line=1,
        )
    names: list[str] = []
    suffixes: dict[str, list[str]] = {}
    for col in header[1:]:
        stem, _, suffix = col.rpartition("_")
        if not stem or suffix.lower() not in _COORD_SUFFIXES:
            raise SchemaError(
                f"column {col!r} is not <landmark>_<x|y|z|visibility>", source=source, line=1
            )
        if stem not in suffixes:
            names.append(stem)
            suffixes[stem] = []
        suffixes[stem].append(suffix.lower())
    if not names:
        raise SchemaError("no landmark columns", source=source, line=1)
    coord_names = tuple(suffixes[names[0]])
    for name in names:
        if tuple(suffixes[name]) != coord_names:
            raise SchemaError(
                f"landmark {name!r} has coordinates {suffixes[name]}, "
                f"expected {list(coord_names)}",
                source=source,
                line=1,
            )

    rows: list[list[float]] = []
    n_cols = len(header)
    for line_no, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != n_cols:
            raise SchemaError(
                f"row has {len(row)} fields, expected {n_cols}", source=source, line=line_no
            )
        try:
            frame_idx = int(float(row[0]))
        except ValueError:
            raise SchemaError(
                f"bad frame index {row[0]!r}", source=source, line=line_no
            ) from None
        if frame_idx != len(rows):
            raise SchemaError(
                f"frame indices must be contiguous from 0; got {frame_idx} "
                f"at position {len(rows)}",
                source=source,
                line=line_no,
            )
        values = []
        for cell in row[1:]:
            cell = cell.strip()
            if cell == "":
                values.append(np.nan)
                continue
            try:
                values.append(float(cell))
            except ValueError:
                raise SchemaError(
                    f"bad number {cell!r}", source=source, line=line_no
                ) from None
        rows.append(values)
    data = np.asarray(rows, dtype=float).reshape(len(rows), len(names), len(coord_names))
    return LandmarkTable(
        kind=kind, landmark_names=tuple(names), coord_names=coord_names, data=data,
        source=source,
    )


def landmarks_to_csv(table: LandmarkTable) -> str:
    header = ["frame"]
    for name in table.landmark_names:
        header += [f"{name}_{c}" for c in table.coord_names]
    lines = [",".join(header)]
    flat = table.data.reshape(table.n_frames, -1)
    for k in range(table.n_frames):
        cells = ["" if np.isnan(v) else f"{v:.9g}" for v in flat[k]]
        lines.append(",".join([str(k)] + cells))
    return "\n".join(lines) + "\n"


def norm_to_pixel(table: LandmarkTable, width_px: float, height_px: float) -> LandmarkTable:
    """Scale normalized coordinates to pixels: x*width, y*height; z/visibility pass through."""
    if table.kind != "normalized":
        raise ValidationError(f"norm_to_pixel needs a normalized table, got {table.kind!r}")
    if width_px <= 0 or height_px <= 0:
        raise ValidationError("width and height must be positive")
    data = table.data.copy()
    data[:, :, 0] *= width_px
    if data.shape[2] > 1:
        data[:, :, 1] *= height_px
    return replace(table, kind="pixel", data=data)


def pixel_to_norm(table: LandmarkTable, width_px: float, height_px: float) -> LandmarkTable:
    """Inverse of norm_to_pixel."""
    if table.kind != "pixel":
        raise ValidationError(f"pixel_to_norm needs a pixel table, got {table.kind!r}")
    if width_px <= 0 or height_px <= 0:
        raise ValidationError("width and height must be positive")
    data = table.data.copy()
    data[:, :, 0] /= width_px
    if data.shape[2] > 1:
        data[:, :, 1] /= height_px
    return replace(table, kind="normalized", data=data)


# ---------------------------------------------------------------------------
# sync tables

@dataclass(frozen=True)
class SyncEntry:
    name: str
    offset_frames: int
    start_frame: int
    end_frame: int

    def __post_init__(self):
        if self.start_frame > self.end_frame:
            raise ValidationError(
                f"sync entry {self.name!r}: start {self.start_frame} > end {self.end_frame}"
            )


@dataclass(frozen=True)
class SyncTable:
    entries: tuple

    def entry(self, name: str) -> SyncEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise SyncLookupError(f"video {name!r} not present in sync table")


SYNC_HEADER = ("video", "offset_frames", "start_frame", "end_frame")


def parse_sync(text: str, source: str = "<memory>") -> SyncTable:
    reader = csv.reader(io.StringIO(text))
    try:
        header = tuple(h.strip() for h in next(reader))
    except StopIteration:
        raise SchemaError("empty sync CSV", source=source, line=1) from None
    if header != SYNC_HEADER:
        raise SchemaError(
            f"sync header must be {','.join(SYNC_HEADER)}", source=source, line=1
        )
    entries = []
    for line_no, row in enumerate(reader, start=2):
        if not row or not any(c.strip() for c in row):
            continue
        if len(row) != 4:
            raise SchemaError(
                f"row has {len(row)} fields, expected 4", source=source, line=line_no
            )
        try:
            entries.append(
                SyncEntry(row[0].strip(), int(row[1]), int(row[2]), int(row[3]))
            )
        except ValueError:
            raise SchemaError(f"bad integer in {row!r}", source=source, line=line_no) from None
    return SyncTable(tuple(entries))


def sync_to_csv(table: SyncTable) -> str:
    lines = [",".join(SYNC_HEADER)]
    for e in table.entries:
        lines.append(f"{e.name},{e.offset_frames},{e.start_frame},{e.end_frame}")
    return "\n".join(lines) + "\n"


def apply_sync(obj, sync: SyncTable, video_name: str):
    """Shift+trim a frame-indexed object: output frame k = input frame k + offset,
    for k in [start, end]."""
    entry = sync.entry(video_name)
    if isinstance(obj, LandmarkTable):
        n = obj.n_frames
        ks = [
            k
            for k in range(entry.start_frame, entry.end_frame + 1)
            if 0 <= k + entry.offset_frames < n
        ]
        if not ks:
            raise EmptyResultError(
                f"sync window [{entry.start_frame}, {entry.end_frame}] with offset "
                f"{entry.offset_frames} leaves no frames of {n}"
            )
        data = obj.data[[k + entry.offset_frames for k in ks]]
        return replace(obj, data=data)
    if isinstance(obj, UniformSeries):
        n = len(obj)
        ks = [
            k
            for k in range(entry.start_frame, entry.end_frame + 1)
            if 0 <= k + entry.offset_frames < n
        ]
        if not ks:
            raise EmptyResultError(
                f"sync window [{entry.start_frame}, {entry.end_frame}] with offset "
                f"{entry.offset_frames} leaves no samples of {n}"
            )
        values = obj.values[[k + entry.offset_frames for k in ks]]
        return UniformSeries(values, obj.rate_hz, obj.t0_s + ks[0] / obj.rate_hz)
    raise ValidationError(f"apply_sync cannot handle {type(obj).__name__}")


# ---------------------------------------------------------------------------
# annotation tables

@dataclass(frozen=True)
class AnnotationTable:
    """Pixel marks per frame and point slot; NaN pairs are unmarked slots.

    Slots are named p1..pN. 0,0 is a valid pixel, so unmarked slots are
    empty cells, never zero sentinels.
    """

    points: np.ndarray  # (frames, slots, 2)
    resolution: tuple | None = None  # (width, height) when known

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 3 or pts.shape[2] != 2:
            raise ValidationError(f"points must be (frames, slots, 2), got {pts.shape}")
        half = np.isnan(pts).any(axis=2) & ~np.isnan(pts).all(axis=2)
        if half.any():
            f, s = np.argwhere(half)[0]
            raise ValidationError(f"frame {f} slot p{s+1}: x and y must be set together")
        if self.resolution is not None:
            w, h = self.resolution
            with np.errstate(invalid="ignore"):
                bad = (pts[:, :, 0] < 0) | (pts[:, :, 0] > w) | (pts[:, :, 1] < 0) | (
                    pts[:, :, 1] > h
                )
            bad &= ~np.isnan(pts).all(axis=2)
            if bad.any():
                f, s = np.argwhere(bad)[0]
                raise ValidationError(
                    f"frame {f} slot p{s+1}: {tuple(pts[f, s])} outside {w}x{h}"
                )
        object.__setattr__(self, "points", pts)

    @property
    def n_frames(self) -> int:
        return self.points.shape[0]

    @property
    def n_slots(self) -> int:
        return self.points.shape[1]

    def with_mark(self, frame: int, slot: int, x: float, y: float) -> "AnnotationTable":
        """Copy with one slot (re)marked; grows the frame axis when needed."""
        if frame < 0 or slot < 0:
            raise ValidationError("frame and slot must be non-negative")
        n_frames = max(self.n_frames, frame + 1)
        n_slots = max(self.n_slots, slot + 1)
        pts = np.full((n_frames, n_slots, 2), np.nan)
        pts[: self.n_frames, : self.n_slots] = self.points
        pts[frame, slot] = (x, y)
        return AnnotationTable(points=pts, resolution=self.resolution)


def annotations_to_csv(table: AnnotationTable) -> str:
    header = ["frame"]
    for s in range(table.n_slots):
        header += [f"p{s+1}_x", f"p{s+1}_y"]
    lines = [",".join(header)]
    for k in range(table.n_frames):
        cells = [str(k)]
        for s in range(table.n_slots):
            x, y = table.points[k, s]
            if np.isnan(x):
                cells += ["", ""]
            else:
                cells += [f"{x:.9g}", f"{y:.9g}"]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def parse_annotations(text: str, source: str = "<memory>") -> AnnotationTable:
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError("empty annotation CSV", source=source, line=1) from None
    if not header or header[0].lower() != "frame":
        raise SchemaError("first column must be frame", source=source, line=1)
    coord_cols = header[1:]
    if len(coord_cols) == 0 or len(coord_cols) % 2 != 0:
        raise SchemaError(
            "annotation columns must come in p<i>_x,p<i>_y pairs", source=source, line=1
        )
    n_slots = len(coord_cols) // 2
    for s in range(n_slots):
        expect = (f"p{s+1}_x", f"p{s+1}_y")
        got = (coord_cols[2 * s].lower(), coord_cols[2 * s + 1].lower())
        if got != expect:
            raise SchemaError(
                f"slot {s+1} columns are {got}, expected {expect}", source=source, line=1
            )
    rows = []
    for line_no, row in enumerate(reader, start=2):
        if not row or not any(c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise SchemaError(
                f"row has {len(row)} fields, expected {len(header)}",
                source=source,
                line=line_no,
            )
        try:
            frame_idx = int(float(row[0]))
        except ValueError:
            raise SchemaError(f"bad frame {row[0]!r}", source=source, line=line_no) from None
        if frame_idx != len(rows):
            raise SchemaError(
                f"frame indices must be contiguous from 0; got {frame_idx}",
                source=source,
                line=line_no,
            )
        values = []
        for s in range(n_slots):
            xc = row[1 + 2 * s].strip()
            yc = row[2 + 2 * s].strip()
            if (xc == "") != (yc == ""):
                raise SchemaError(
                    f"slot p{s+1}: x and y must both be set or both empty",
                    source=source,
                    line=line_no,
                )
            if xc == "":
                values.append((np.nan, np.nan))
            else:
                try:
                    values.append((float(xc), float(yc)))
                except ValueError:
                    raise SchemaError(
                        f"bad coordinate in slot p{s+1}", source=source, line=line_no
                    ) from None
        rows.append(values)
    pts = np.asarray(rows, dtype=float).reshape(len(rows), n_slots, 2)
    return AnnotationTable(points=pts)


# ---------------------------------------------------------------------------
# run manifests

@dataclass
class RunManifest:
    """Record of one batch run: inputs, effective parameters, outputs, failures."""

    tool: str
    version: str
    timestamp: str
    inputs: list = field(default_factory=list)
    parameters: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    failures: list = field(default_factory=list)  # [{"input":..., "error":...}]
    status: str = "ok"  # ok | partial | failed

    def to_json(self) -> str:
        return json.dumps(
            {
                "tool": self.tool,
                "version": self.version,
                "timestamp": self.timestamp,
                "status": self.status,
                "inputs": [str(p) for p in self.inputs],
                "parameters": self.parameters,
                "outputs": [str(p) for p in self.outputs],
                "failures": self.failures,
            },
            indent=2,
            sort_keys=True,
        )

    def to_text(self) -> str:
        lines = [
            f"tool={self.tool}",
            f"version={self.version}",
            f"timestamp={self.timestamp}",
            f"status={self.status}",
        ]
        for key in sorted(self.parameters):
            lines.append(f"param.{key}={self.parameters[key]}")
        for p in self.inputs:
            lines.append(f"input={p}")
        for p in self.outputs:
            lines.append(f"output={p}")
        for f in self.failures:
            lines.append(f"failure={f['input']}: {f['error']}")
        return "\n".join(lines) + "\n"


def run_directory_name(tool: str, when: time.struct_time | None = None) -> str:
    when = when if when is not None else time.localtime()
    return f"{tool}_{time.strftime('%Y%m%d_%H%M%S', when)}"


def write_manifest(manifest: RunManifest, run_dir) -> tuple[Path, Path]:
    """Persist manifest.json + manifest.txt, checking every output exists."""
    run_dir = Path(run_dir)
    for out in manifest.outputs:
        if not Path(out).exists():
            raise ValidationError(f"manifest lists missing output {out}")
    json_path = run_dir / "manifest.json"
    txt_path = run_dir / "manifest.txt"
    json_path.write_text(manifest.to_json() + "\n", encoding="utf-8")
    txt_path.write_text(manifest.to_text(), encoding="utf-8")
    return json_path, txt_path
