"""Local HTTP facade for the companion UI.

Brokers workspace files, annotations and analysis selections, and launches
batch runs; it never computes analysis results itself, so the CLI and the
UI share one code path. Binds localhost only; paths are confined to the
workspace root.
"""

from __future__ import annotations

import json
import threading
import uuid
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import FileResponse, PlainTextResponse, Response
from pydantic import BaseModel, Field

from . import __version__
from .batch import TOOLS, ToolConfig, run_tool
from .errors import MovelabError, SchemaError
from .tabular import AnnotationTable, annotations_to_csv, parse_annotations

VIDEO_SUFFIXES = {".mp4", ".avi", ".mov", ".mkv"}
SELECTIONS_FILE = "selections.json"


def classify_file(path: Path) -> str:
    suffix = path.suffix.lower()
    if suffix == ".c3d":
        return "c3d"
    if suffix in VIDEO_SUFFIXES:
        return "video"
    if suffix != ".csv":
        return "other"
    try:
        header = path.open(encoding="utf-8", errors="replace").readline().lower()
    except OSError:
        return "csv"
    cols = [c.strip() for c in header.split(",")]
    if cols and cols[0] in ("frame", "frame_index"):
        if any(c.endswith("_x") for c in cols[1:]):
            return "annotations" if cols[1].startswith("p1_") else "landmarks"
    joined = ",".join(cols)
    if "fz" in joined or "force" in joined:
        return "force"
    if "emg" in joined:
        return "emg"
    if "cx" in joined or "cop" in joined:
        return "cop"
    if cols and cols[0] in ("time", "time_s", "t"):
        return "timeseries"
    return "csv"


class SelectionsPayload(BaseModel):
    file: str
    fz_column: str | int | None = None
    cx_column: str | int | None = None
    cy_column: str | int | None = None
    bw_window: tuple[float, float] | None = None
    analysis_windows: list[tuple[float, float]] = Field(default_factory=list)
    picked_peaks: list[int] | None = None
    SideFoot_RL: str = ""
    Dominance_RL: str = ""
    Quality: float | None = None
    Trial: int = 1


class AnnotationDelta(BaseModel):
    frame: int
    slot: int  # 0-based point slot
    x: float
    y: float


class AnnotationsPayload(BaseModel):
    file: str
    deltas: list[AnnotationDelta]


class RunRequest(BaseModel):
    params: dict = Field(default_factory=dict)
    input_dir: str = "."
    output_dir: str = "runs"
    jobs: int = 0


class RunRegistry:
    """In-memory run table; one analysis run per workspace at a time."""

    def __init__(self):
        self.lock = threading.Lock()
        self.busy = threading.Lock()
        self.runs: dict[str, dict] = {}

    def start(self, tool: str, config: ToolConfig) -> str:
        run_id = uuid.uuid4().hex[:12]
        with self.lock:
            self.runs[run_id] = {"status": "queued", "tool": tool}

        def execute():
            with self.busy:  # serializes runs per workspace
                with self.lock:
                    self.runs[run_id]["status"] = "running"
                try:
                    result = run_tool(TOOLS[tool], config)
                    with self.lock:
                        self.runs[run_id].update(
                            status=result.manifest.status
                            if result.manifest.status != "ok"
                            else "done",
                            run_dir=str(result.run_dir),
                            manifest=json.loads(result.manifest.to_json()),
                        )
                except Exception as exc:  # noqa: BLE001 -- reported via status
                    with self.lock:
                        self.runs[run_id].update(status="failed", error=str(exc))

        threading.Thread(target=execute, daemon=True).start()
        return run_id

    def get(self, run_id: str) -> dict | None:
        with self.lock:
            run = self.runs.get(run_id)
            return dict(run) if run is not None else None


def build_app(workspace: Path) -> FastAPI:
    workspace = Path(workspace).resolve()
    if not workspace.is_dir():
        raise MovelabError(f"workspace {workspace} is not a directory")
    app = FastAPI(title="movelab service", version=__version__)
    registry = RunRegistry()
    annotation_locks: dict[str, threading.Lock] = {}
    locks_guard = threading.Lock()

    def resolve(rel: str) -> Path:
        candidate = (workspace / rel).resolve()
        if candidate != workspace and workspace not in candidate.parents:
            raise HTTPException(status_code=403, detail="path outside workspace")
        return candidate

    def file_lock(name: str) -> threading.Lock:
        with locks_guard:
            return annotation_locks.setdefault(name, threading.Lock())

    @app.get("/api/files")
    def list_files(subdir: str = "."):
        root = resolve(subdir)
        if not root.is_dir():
            raise HTTPException(status_code=404, detail=f"{subdir} is not a directory")
        selections = load_selections()
        entries = []
        for p in sorted(root.rglob("*"), key=lambda p: p.as_posix()):
            if not p.is_file():
                continue
            rel = p.relative_to(workspace).as_posix()
            if rel == SELECTIONS_FILE or "/runs/" in f"/{rel}":
                continue
            entries.append(
                {
                    "path": rel,
                    "type": classify_file(p),
                    "size": p.stat().st_size,
                    "has_selections": p.name in selections,
                    "has_annotations": annotation_path(p).exists(),
                }
            )
        return entries

    @app.get("/api/series")
    def get_series(file: str, column: str | None = None, max_points: int = 2000):
        from .emg import read_timeseries_csv

        path = resolve(file)
        if not path.is_file():
            raise HTTPException(status_code=404, detail=f"{file} not found")
        try:
            time_col, channels = read_timeseries_csv(
                path.read_text(encoding="utf-8"), source=file
            )
        except SchemaError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        names = list(channels)
        if column is None:
            column = names[0]
        if column not in channels:
            raise HTTPException(
                status_code=422, detail=f"column {column!r} not among {names}"
            )
        values = channels[column]
        n = len(values)
        t = time_col if time_col is not None else np.arange(n, dtype=float)
        rate = None
        if time_col is not None and n > 1:
            dt = np.diff(time_col)
            if dt.min() > 0 and (dt.max() - dt.min()) < 1e-4 * dt.mean():
                rate = float(1.0 / dt.mean())
        if n > max_points:
            from .svgplot import minmax_decimate

            keep = minmax_decimate(t, values, max_points)
        else:
            keep = np.arange(n)
        return {
            "file": file,
            "column": column,
            "columns": names,
            "n_total": n,
            "rate_hz": rate,
            "decimated": bool(n > max_points),
            "idx": keep.tolist(),
            "t": t[keep].tolist(),
            "v": values[keep].tolist(),
        }

    def selections_path() -> Path:
        return workspace / SELECTIONS_FILE

    def load_selections() -> dict:
        path = selections_path()
        if not path.exists():
            return {}
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            return {}

    @app.get("/api/selections")
    def get_selections(file: str | None = None):
        store = load_selections()
        if file is None:
            return store
        if file not in store:
            raise HTTPException(status_code=404, detail=f"no selections for {file}")
        return store[file]

    @app.post("/api/selections")
    def post_selections(payload: SelectionsPayload):
        path = resolve(payload.file)
        if not path.is_file():
            raise HTTPException(status_code=404, detail=f"{payload.file} not found")
        errors = {}
        duration = None
        try:
            from .emg import read_timeseries_csv

            time_col, channels = read_timeseries_csv(
                path.read_text(encoding="utf-8"), source=payload.file
            )
            n = len(next(iter(channels.values())))
            if time_col is not None and len(time_col) > 1:
                duration = float(time_col[-1] - time_col[0] + (time_col[1] - time_col[0]))
        except SchemaError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        if payload.bw_window is not None:
            a, b = payload.bw_window
            if not (a < b):
                errors["bw_window"] = "start must precede end"
            elif duration is not None and (a < 0 or b > duration + 1e-9):
                errors["bw_window"] = f"window ({a}, {b}) outside 0-{duration:.3f} s"
        for i, (a, b) in enumerate(payload.analysis_windows):
            if not (a < b):
                errors[f"analysis_windows[{i}]"] = "start must precede end"
            elif duration is not None and (a < 0 or b > duration + 1e-9):
                errors[f"analysis_windows[{i}]"] = f"window outside 0-{duration:.3f} s"
        if payload.picked_peaks is not None:
            for p in payload.picked_peaks:
                if not (0 <= p < n):
                    errors["picked_peaks"] = f"index {p} outside 0-{n-1}"
        if payload.Quality is not None and not (0 <= payload.Quality <= 10):
            errors["Quality"] = "must be within 0-10"
        if errors:
            raise HTTPException(status_code=422, detail=errors)
        record = payload.model_dump(exclude={"file"}, exclude_none=True)
        with file_lock(SELECTIONS_FILE):
            store = load_selections()
            store[Path(payload.file).name] = record
            selections_path().write_text(
                json.dumps(store, indent=2, sort_keys=True), encoding="utf-8"
            )
        return {"stored": Path(payload.file).name, "record": record}

    def annotation_path(video: Path) -> Path:
        return video.with_name(video.stem + "_annotations.csv")

    @app.get("/api/annotations")
    def get_annotations(file: str):
        video = resolve(file)
        path = annotation_path(video)
        if not path.exists():
            return {"file": file, "frames": 0, "slots": 0, "marks": []}
        try:
            table = parse_annotations(path.read_text(encoding="utf-8"), source=str(path))
        except SchemaError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        marks = []
        for f in range(table.n_frames):
            for s in range(table.n_slots):
                x, y = table.points[f, s]
                if not np.isnan(x):
                    marks.append({"frame": f, "slot": s, "x": float(x), "y": float(y)})
        return {
            "file": file,
            "frames": table.n_frames,
            "slots": table.n_slots,
            "marks": marks,
        }

    @app.post("/api/annotations")
    def post_annotations(payload: AnnotationsPayload):
        video = resolve(payload.file)
        for d in payload.deltas:
            if d.frame < 0 or d.slot < 0 or d.x < 0 or d.y < 0:
                raise HTTPException(
                    status_code=422,
                    detail=f"negative frame/slot/coordinate in {d.model_dump()}",
                )
        path = annotation_path(video)
        with file_lock(path.name):
            if path.exists():
                table = parse_annotations(path.read_text(encoding="utf-8"))
            else:
                table = AnnotationTable(points=np.full((0, 1, 2), np.nan))
            for d in payload.deltas:
                table = table.with_mark(d.frame, d.slot, d.x, d.y)
            path.write_text(annotations_to_csv(table), encoding="utf-8")
        return {"file": payload.file, "marks_applied": len(payload.deltas)}

    @app.post("/api/run/{tool}")
    def start_run(tool: str, request: RunRequest):
        if tool not in TOOLS:
            raise HTTPException(status_code=404, detail=f"unknown tool {tool!r}")
        input_root = resolve(request.input_dir)
        output_root = resolve(request.output_dir)
        params = dict(request.params)
        if tool == "forcecube" and "selections_file" not in params:
            if selections_path().exists():
                params["selections_file"] = str(selections_path())
        config = ToolConfig(
            tool=tool,
            input_root=input_root,
            output_root=output_root,
            params=params,
            jobs=request.jobs,
        )
        run_id = registry.start(tool, config)
        return {"run_id": run_id, "status": "queued"}

    @app.get("/api/runs/{run_id}")
    def run_status(run_id: str):
        run = registry.get(run_id)
        if run is None:
            raise HTTPException(status_code=404, detail=f"unknown run {run_id!r}")
        return run

    @app.get("/media/{rel_path:path}")
    def media(rel_path: str, request: Request):
        path = resolve(rel_path)
        if not path.is_file():
            raise HTTPException(status_code=404, detail=f"{rel_path} not found")
        return _ranged_file_response(path, request)

    ui_dir = Path(__file__).resolve().parent.parent.parent / "frontend" / "dist"

    @app.get("/ui")
    @app.get("/ui/{rel_path:path}")
    def ui(rel_path: str = "index.html"):
        if not ui_dir.is_dir():
            return PlainTextResponse(
                "frontend not built; run `npm run build` in frontend/", status_code=404
            )
        target = (ui_dir / (rel_path or "index.html")).resolve()
        if ui_dir not in target.parents and target != ui_dir:
            raise HTTPException(status_code=403, detail="path outside UI bundle")
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            raise HTTPException(status_code=404, detail=f"{rel_path} not found")
        return FileResponse(target)

    return app


def _ranged_file_response(path: Path, request: Request) -> Response:
    """Single-range byte serving so browsers can seek media files natively."""
    size = path.stat().st_size
    range_header = request.headers.get("range")
    if range_header is None:
        return FileResponse(path, headers={"Accept-Ranges": "bytes"})
    try:
        unit, _, spec = range_header.partition("=")
        if unit.strip() != "bytes":
            raise ValueError(f"unsupported range unit {unit!r}")
        start_s, _, end_s = spec.split(",")[0].partition("-")
        if start_s.strip() == "":
            # suffix range: last N bytes
            length = int(end_s)
            start = max(0, size - length)
            end = size - 1
        else:
            start = int(start_s)
            end = int(end_s) if end_s.strip() else size - 1
    except ValueError:
        raise HTTPException(status_code=416, detail="malformed Range header") from None
    if start >= size or end < start:
        raise HTTPException(status_code=416, detail="range out of bounds")
    end = min(end, size - 1)
    with path.open("rb") as fh:
        fh.seek(start)
        chunk = fh.read(end - start + 1)
    return Response(
        content=chunk,
        status_code=206,
        media_type="application/octet-stream",
        headers={
            "Content-Range": f"bytes {start}-{end}/{size}",
            "Accept-Ranges": "bytes",
        },
    )
