"""Command-line surface: one subcommand per batch workflow, plus the local
service.

Config precedence: built-in defaults < --config file < command-line flags.
Exit codes: 0 success, 2 partial (some files failed, batch continued),
1 fatal.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .batch import TOOLS, ToolConfig, load_config_file, run_tool
from .errors import MovelabError, SchemaError, ValidationError
from .tabular import RunManifest, run_directory_name, write_manifest


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 1
    try:
        return args.handler(args)
    except MovelabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="movelab",
        description="Batch toolbox for multimodal human-movement analysis",
    )
    parser.add_argument("--version", action="version", version=f"movelab {__version__}")
    sub = parser.add_subparsers(dest="command")
    parser.set_defaults(command=None)

    def add_batch_args(p):
        p.add_argument("--input", required=True, help="input directory")
        p.add_argument("--output", required=True, help="output root directory")
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--jobs", type=int, default=0, help="worker count (0 = cores)")
        p.add_argument("--extension", help="override the input extension filter")

    convert = sub.add_parser("convert", help="C3D <-> CSV conversion")
    convert_sub = convert.add_subparsers(dest="direction", required=True)
    c2c = convert_sub.add_parser("c3d2csv", help="C3D files to triplet CSV")
    add_batch_args(c2c)
    c2c.set_defaults(handler=lambda a: _run_batch("c3d2csv", a))
    csv2 = convert_sub.add_parser("csv2c3d", help="triplet CSV files to C3D")
    add_batch_args(csv2)
    csv2.add_argument("--rate", type=float, required=True, help="point rate in Hz")
    csv2.add_argument("--units", default="mm", help="point units stored in the file")
    csv2.set_defaults(
        handler=lambda a: _run_batch("csv2c3d", a, rate_hz=a.rate, units=a.units)
    )

    emg = sub.add_parser("emg", help="EMG pipeline: filter/rectify/RMS/MDF/PSD")
    add_batch_args(emg)
    emg.add_argument("--rate", type=float, help="sampling rate (default: time column)")
    emg.add_argument("--band", type=float, nargs=2, default=[20.0, 450.0],
                     metavar=("LO", "HI"), help="bandpass corner frequencies")
    emg.add_argument("--order", type=int, default=4)
    emg.add_argument("--rms-window", type=float, default=0.05, help="seconds")
    emg.add_argument("--mdf-window", type=float, default=1.0, help="seconds")
    emg.add_argument("--analysis-window", type=float, nargs=2, metavar=("START", "END"))
    emg.set_defaults(
        handler=lambda a: _run_batch(
            "emg",
            a,
            rate_hz=a.rate,
            band_hz=tuple(a.band),
            order=a.order,
            rms_window_s=a.rms_window,
            mdf_window_s=a.mdf_window,
            analysis_window_s=tuple(a.analysis_window) if a.analysis_window else None,
        )
    )

    cop = sub.add_parser("cop", help="center-of-pressure posturography report")
    add_batch_args(cop)
    cop.add_argument("--rate", type=float)
    cop.add_argument("--cx", help="mediolateral column name or index")
    cop.add_argument("--cy", help="anteroposterior column name or index")
    cop.add_argument("--units", default="cm", choices=["m", "cm", "mm"])
    cop.add_argument("--lowpass", default="10", help="lowpass Hz, or 'off'")
    cop.set_defaults(
        handler=lambda a: _run_batch(
            "cop",
            a,
            rate_hz=a.rate,
            cx_column=a.cx,
            cy_column=a.cy,
            units=a.units,
            lowpass_hz=a.lowpass if a.lowpass == "off" else float(a.lowpass),
        )
    )

    force = sub.add_parser("forcecube", help="vertical GRF metrics ledger")
    add_batch_args(force)
    force.add_argument("--rate", type=float)
    force.add_argument("--fz", help="Fz column name or index")
    force.add_argument("--selections", help="per-file selections JSON")
    force.add_argument("--bw-window", type=float, nargs=2, metavar=("START", "END"),
                       help="fallback body-weight window (seconds)")
    force.add_argument("--threshold", type=float, default=20.0, help="contact N")
    force.add_argument("--hold-ms", type=float, default=10.0)
    force.set_defaults(
        handler=lambda a: _run_batch(
            "forcecube",
            a,
            rate_hz=a.rate,
            fz_column=a.fz,
            selections_file=a.selections,
            bw_window=tuple(a.bw_window) if a.bw_window else None,
            threshold_n=a.threshold,
            hold_ms=a.hold_ms,
        )
    )

    cluster = sub.add_parser("cluster", help="marker-cluster segment angles")
    add_batch_args(cluster)
    cluster.add_argument("--clusters", action="append", required=True,
                         metavar="NAME:M1,M2,M3")
    cluster.add_argument("--format", choices=["c3d", "csv"], default="c3d")
    cluster.add_argument("--rate", type=float, default=100.0,
                         help="marker rate for CSV input")
    cluster.add_argument("--units", choices=["mm", "cm", "m"],
                         help="marker units (default: from file, else mm)")
    cluster.add_argument(
        "--reference",
        choices=["lab-frame", "first-frame-relative", "calibration-window-relative"],
        default="first-frame-relative",
    )
    cluster.set_defaults(
        handler=lambda a: _run_batch(
            "cluster",
            a,
            extension=".c3d" if a.format == "c3d" else ".csv",
            clusters=a.clusters,
            rate_hz=a.rate,
            units=a.units,
            reference=a.reference,
        )
    )

    imu = sub.add_parser("imu", help="IMU fusion to the 17-column schema")
    add_batch_args(imu)
    imu.add_argument("--rate", type=float)
    imu.add_argument("--alpha", type=float, default=0.98)
    imu.set_defaults(
        handler=lambda a: _run_batch("imu", a, rate_hz=a.rate, alpha=a.alpha)
    )

    dlt = sub.add_parser("dlt", help="camera calibration and reconstruction")
    dlt_sub = dlt.add_subparsers(dest="dlt_command", required=True)

    calib2d = dlt_sub.add_parser("calib2d", help="planar 8-parameter calibration")
    calib2d.add_argument("--points", required=True,
                         help="control-point CSV: camera,x,y,u,v")
    calib2d.add_argument("--output", required=True)
    calib2d.set_defaults(handler=cmd_dlt_calib2d)

    calib3d = dlt_sub.add_parser("calib3d", help="volumetric 11-parameter calibration")
    calib3d.add_argument("--points", required=True,
                         help="control-point CSV: camera,x,y,z,u,v")
    calib3d.add_argument("--output", required=True)
    calib3d.set_defaults(handler=cmd_dlt_calib3d)

    rec2d = dlt_sub.add_parser("rec2d", help="planar reconstruction")
    rec2d.add_argument("--calib", required=True)
    rec2d.add_argument("--points", required=True, help="CSV: u,v per row")
    rec2d.add_argument("--camera", help="camera name (default: only one in table)")
    rec2d.add_argument("--output", required=True)
    rec2d.set_defaults(handler=cmd_dlt_rec2d)

    rec3d = dlt_sub.add_parser("rec3d", help="multi-view point reconstruction")
    rec3d.add_argument("--calib", required=True)
    rec3d.add_argument("--points", required=True, help="CSV: point,camera,u,v")
    rec3d.add_argument("--output", required=True)
    rec3d.set_defaults(handler=cmd_dlt_rec3d)

    rec3ds = dlt_sub.add_parser(
        "rec3d-series", help="per-frame trajectory reconstruction"
    )
    rec3ds.add_argument("--calib", required=True)
    rec3ds.add_argument("--landmarks", action="append", required=True,
                        metavar="CAMERA=FILE", help="pixel landmark CSV per camera")
    rec3ds.add_argument("--rate", type=float, required=True)
    rec3ds.add_argument("--output", required=True)
    rec3ds.set_defaults(handler=cmd_dlt_rec3d_series)

    lm = sub.add_parser("landmarks", help="landmark table utilities")
    lm_sub = lm.add_subparsers(dest="lm_command", required=True)
    to_pixel = lm_sub.add_parser("to-pixel", help="normalized -> pixel coordinates")
    to_pixel.add_argument("--input", required=True)
    to_pixel.add_argument("--width", type=float, required=True)
    to_pixel.add_argument("--height", type=float, required=True)
    to_pixel.add_argument("--output", required=True)
    to_pixel.set_defaults(handler=cmd_landmarks_to_pixel)
    sync_apply = lm_sub.add_parser("sync-apply", help="shift/trim by a sync table")
    sync_apply.add_argument("--input", required=True)
    sync_apply.add_argument("--sync", required=True)
    sync_apply.add_argument("--video", required=True)
    sync_apply.add_argument(
        "--kind", choices=["normalized", "pixel"], default="pixel"
    )
    sync_apply.add_argument("--output", required=True)
    sync_apply.set_defaults(handler=cmd_landmarks_sync_apply)

    plot = sub.add_parser("plot", help="render a time-series CSV as SVG")
    plot.add_argument("--input", required=True)
    plot.add_argument("--columns", help="comma-separated column names (default: all)")
    plot.add_argument("--output", required=True)
    plot.set_defaults(handler=cmd_plot)

    serve = sub.add_parser("serve", help="local HTTP service for the companion UI")
    serve.add_argument("--workspace", required=True)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8765)
    serve.set_defaults(handler=cmd_serve)

    return parser


def _run_batch(tool: str, args, **params) -> int:
    file_params = load_config_file(args.config) if getattr(args, "config", None) else {}
    merged = dict(file_params)
    merged.update({k: v for k, v in params.items() if v is not None})
    if getattr(args, "extension", None):
        merged["extension"] = args.extension
    config = ToolConfig(
        tool=tool,
        input_root=Path(args.input),
        output_root=Path(args.output),
        params=merged,
        jobs=args.jobs,
    )
    result = run_tool(TOOLS[tool], config)
    print(
        f"{result.manifest.status}: {len(result.manifest.inputs)} inputs, "
        f"{len(result.manifest.failures)} failures -> {result.run_dir}"
    )
    return result.exit_code


def _single_run(tool: str, inputs: list, parameters: dict, emit) -> int:
    """One-shot command wrapped in the same run-directory + manifest layout."""
    out_root = Path(parameters.pop("_output"))
    out_root.mkdir(parents=True, exist_ok=True)
    base = run_directory_name(tool)
    run_dir = out_root / base
    n = 1
    while run_dir.exists():
        n += 1
        run_dir = out_root / f"{base}_{n}"
    run_dir.mkdir(parents=True)
    print(f"running tool: {tool} (movelab {__version__})")
    outputs = emit(run_dir)
    manifest = RunManifest(
        tool=tool,
        version=__version__,
        timestamp=_dt.datetime.now().isoformat(timespec="seconds"),
        inputs=[str(p) for p in inputs],
        parameters=parameters,
        outputs=[str(p) for p in outputs],
        status="ok",
    )
    write_manifest(manifest, run_dir)
    print(f"ok -> {run_dir}")
    return 0


def _read_control_points(path: str, want_z: bool):
    import csv as _csv
    import io as _io

    text = Path(path).read_text(encoding="utf-8")
    rows = list(_csv.reader(_io.StringIO(text)))
    if not rows:
        raise SchemaError("empty control-point CSV", source=path)
    header = [h.strip().lower() for h in rows[0]]
    need = ["camera", "x", "y"] + (["z"] if want_z else []) + ["u", "v"]
    if header != need:
        raise SchemaError(
            f"control-point header must be {','.join(need)}", source=path, line=1
        )
    per_camera: dict = {}
    for i, row in enumerate(rows[1:], start=2):
        if not row or not any(c.strip() for c in row):
            continue
        if len(row) != len(need):
            raise SchemaError(
                f"row has {len(row)} fields, expected {len(need)}", source=path, line=i
            )
        try:
            values = [float(c) for c in row[1:]]
        except ValueError:
            raise SchemaError("bad number in control-point row", source=path, line=i) from None
        obj, img = values[:-2], values[-2:]
        per_camera.setdefault(row[0].strip(), ([], []))
        per_camera[row[0].strip()][0].append(obj)
        per_camera[row[0].strip()][1].append(img)
    return per_camera


def cmd_dlt_calib2d(args) -> int:
    from .dlt import dlt2d_calibrate, write_calibration_csv

    per_camera = _read_control_points(args.points, want_z=False)
    calibs = {
        cam: dlt2d_calibrate(obj, img) for cam, (obj, img) in per_camera.items()
    }

    def emit(run_dir: Path):
        path = run_dir / "dlt2d_calibration.csv"
        path.write_text(write_calibration_csv(calibs, "2d"), encoding="utf-8")
        for cam, params in sorted(calibs.items()):
            print(f"{cam}: residual RMS {params.residual_rms:.3e} px")
        return [path]

    return _single_run(
        "dlt-calib2d", [args.points], {"_output": args.output, "points": args.points}, emit
    )


def cmd_dlt_calib3d(args) -> int:
    from .dlt import dlt3d_calibrate, write_calibration_csv

    per_camera = _read_control_points(args.points, want_z=True)
    calibs = {
        cam: dlt3d_calibrate(obj, img) for cam, (obj, img) in per_camera.items()
    }

    def emit(run_dir: Path):
        path = run_dir / "dlt3d_calibration.csv"
        path.write_text(write_calibration_csv(calibs, "3d"), encoding="utf-8")
        for cam, params in sorted(calibs.items()):
            print(
                f"{cam}: residual RMS {params.residual_rms:.3e} px, "
                f"condition {params.condition:.3e}"
            )
        return [path]

    return _single_run(
        "dlt-calib3d", [args.points], {"_output": args.output, "points": args.points}, emit
    )


def _load_uv_rows(path: str):
    import csv as _csv
    import io as _io

    rows = list(_csv.reader(_io.StringIO(Path(path).read_text(encoding="utf-8"))))
    if not rows or [h.strip().lower() for h in rows[0]] != ["u", "v"]:
        raise SchemaError("points CSV must have header u,v", source=path, line=1)
    out = []
    for i, row in enumerate(rows[1:], start=2):
        if not row or not any(c.strip() for c in row):
            continue
        try:
            out.append((float(row[0]), float(row[1])))
        except (ValueError, IndexError):
            raise SchemaError("bad u,v row", source=path, line=i) from None
    return np.asarray(out)


def cmd_dlt_rec2d(args) -> int:
    from .dlt import dlt2d_reconstruct, read_calibration_csv

    series, kind = read_calibration_csv(Path(args.calib).read_text(encoding="utf-8"))
    if kind != "2d":
        raise ValidationError("rec2d needs an 8-coefficient calibration table")
    cameras = sorted(series.per_camera)
    camera = args.camera or (cameras[0] if len(cameras) == 1 else None)
    if camera is None:
        raise ValidationError(f"--camera required; table has {cameras}")
    params = series.per_camera[camera]
    uv = _load_uv_rows(args.points)

    def emit(run_dir: Path):
        lines = ["x,y"]
        for row in uv:
            x, y = dlt2d_reconstruct(params, row)
            lines.append(f"{x:.9g},{y:.9g}")
        path = run_dir / "reconstructed_2d.csv"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return [path]

    return _single_run(
        "dlt-rec2d",
        [args.calib, args.points],
        {"_output": args.output, "camera": camera},
        emit,
    )


def cmd_dlt_rec3d(args) -> int:
    import csv as _csv
    import io as _io

    from .dlt import dlt3d_reconstruct, read_calibration_csv

    series, kind = read_calibration_csv(Path(args.calib).read_text(encoding="utf-8"))
    if kind != "3d":
        raise ValidationError("rec3d needs an 11-coefficient calibration table")
    rows = list(
        _csv.reader(_io.StringIO(Path(args.points).read_text(encoding="utf-8")))
    )
    if not rows or [h.strip().lower() for h in rows[0]] != ["point", "camera", "u", "v"]:
        raise SchemaError("points CSV must have header point,camera,u,v",
                          source=args.points, line=1)
    views: dict = {}
    order: list = []
    for i, row in enumerate(rows[1:], start=2):
        if not row or not any(c.strip() for c in row):
            continue
        try:
            point, camera, u, v = row[0].strip(), row[1].strip(), float(row[2]), float(row[3])
        except (ValueError, IndexError):
            raise SchemaError("bad point,camera,u,v row", source=args.points, line=i) from None
        if point not in views:
            order.append(point)
            views[point] = []
        views[point].append((series.per_camera[camera], np.array([u, v])))

    def emit(run_dir: Path):
        lines = ["point,x,y,z,residual"]
        for point in order:
            xyz, residual = dlt3d_reconstruct(views[point])
            lines.append(
                f"{point},{xyz[0]:.9g},{xyz[1]:.9g},{xyz[2]:.9g},{residual:.9g}"
            )
        path = run_dir / "reconstructed_3d.csv"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return [path]

    return _single_run(
        "dlt-rec3d", [args.calib, args.points], {"_output": args.output}, emit
    )


def cmd_dlt_rec3d_series(args) -> int:
    from .c3d import c3d_to_csv
    from .dlt import read_calibration_csv, reconstruct_series
    from .tabular import parse_landmarks

    series, kind = read_calibration_csv(Path(args.calib).read_text(encoding="utf-8"))
    if kind != "3d":
        raise ValidationError("rec3d-series needs an 11-coefficient calibration table")
    per_camera = {}
    names = None
    for item in args.landmarks:
        camera, _, file = item.partition("=")
        if not camera or not file:
            raise ValidationError(f"--landmarks takes CAMERA=FILE, got {item!r}")
        table = parse_landmarks(
            Path(file).read_text(encoding="utf-8"), "pixel", source=file
        )
        if names is None:
            names = list(table.landmark_names)
        elif list(table.landmark_names) != names:
            raise ValidationError(f"camera {camera!r} has different landmark names")
        per_camera[camera] = table.data[:, :, :2]
    mfs = reconstruct_series(per_camera, series, names, rate_hz=args.rate)

    def emit(run_dir: Path):
        from .c3d import new_document

        doc = new_document(names, mfs.positions, args.rate, point_units="m")
        points_csv, _ = c3d_to_csv(doc)
        path = run_dir / "reconstructed_series.csv"
        path.write_text(points_csv, encoding="utf-8")
        return [path]

    return _single_run(
        "dlt-rec3d-series",
        [args.calib] + [i.partition("=")[2] for i in args.landmarks],
        {"_output": args.output, "rate": args.rate},
        emit,
    )


def cmd_landmarks_to_pixel(args) -> int:
    from .tabular import landmarks_to_csv, norm_to_pixel, parse_landmarks

    table = parse_landmarks(
        Path(args.input).read_text(encoding="utf-8"), "normalized", source=args.input
    )
    pixel = norm_to_pixel(table, args.width, args.height)

    def emit(run_dir: Path):
        path = run_dir / f"{Path(args.input).stem}_pixel.csv"
        path.write_text(landmarks_to_csv(pixel), encoding="utf-8")
        return [path]

    return _single_run(
        "landmarks-to-pixel",
        [args.input],
        {"_output": args.output, "width": args.width, "height": args.height},
        emit,
    )


def cmd_landmarks_sync_apply(args) -> int:
    from .tabular import apply_sync, landmarks_to_csv, parse_landmarks, parse_sync

    table = parse_landmarks(
        Path(args.input).read_text(encoding="utf-8"), args.kind, source=args.input
    )
    sync = parse_sync(Path(args.sync).read_text(encoding="utf-8"), source=args.sync)
    shifted = apply_sync(table, sync, args.video)

    def emit(run_dir: Path):
        path = run_dir / f"{Path(args.input).stem}_synced.csv"
        path.write_text(landmarks_to_csv(shifted), encoding="utf-8")
        return [path]

    return _single_run(
        "landmarks-sync-apply",
        [args.input, args.sync],
        {"_output": args.output, "video": args.video},
        emit,
    )


def cmd_plot(args) -> int:
    from .emg import read_timeseries_csv
    from .svgplot import emit_plot

    text = Path(args.input).read_text(encoding="utf-8")
    time_col, channels = read_timeseries_csv(text, source=args.input)
    wanted = (
        [c.strip() for c in args.columns.split(",")] if args.columns else list(channels)
    )
    missing = [c for c in wanted if c not in channels]
    if missing:
        raise ValidationError(f"columns {missing} not in {list(channels)}")
    n = len(channels[wanted[0]])
    t = time_col if time_col is not None else np.arange(n, dtype=float)

    def emit(run_dir: Path):
        path = run_dir / f"{Path(args.input).stem}.svg"
        path.write_bytes(
            emit_plot(
                [(t, channels[c]) for c in wanted],
                wanted,
                title=Path(args.input).name,
                x_label="time (s)" if time_col is not None else "sample",
            )
        )
        return [path]

    return _single_run(
        "plot", [args.input], {"_output": args.output, "columns": ",".join(wanted)}, emit
    )


def cmd_serve(args) -> int:
    import uvicorn

    from .service import build_app

    app = build_app(Path(args.workspace))
    print(f"running tool: serve (movelab {__version__})")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
