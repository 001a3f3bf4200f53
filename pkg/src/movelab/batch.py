"""Batch orchestration: discover files, run one tool over each, record
everything in a run manifest.

Every run creates ``<tool>_<YYYYMMDD_HHMMSS>/`` under the output root. One
file's failure never aborts the batch; it is recorded and the run finishes
with status "partial". Files are processed by a thread pool (worker count =
logical cores unless overridden); per-file work is single-threaded and
deterministic.
"""

from __future__ import annotations

import datetime as _dt
import json
import os
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .core import UniformSeries, time_axis, trim
from .errors import EmptyBatchError, MovelabError, PathError, SchemaError, ValidationError
from .tabular import RunManifest, discover, run_directory_name, write_manifest

UNIT_TO_CM = {"m": 100.0, "cm": 1.0, "mm": 0.1}


@dataclass(frozen=True)
class ToolConfig:
    """Effective configuration of one batch run; serialized into the manifest."""

    tool: str
    input_root: Path
    output_root: Path
    params: dict = field(default_factory=dict)
    jobs: int = 0  # 0: logical core count

    def param(self, key: str, default=None):
        return self.params.get(key, default)

    def effective_jobs(self) -> int:
        return self.jobs if self.jobs > 0 else (os.cpu_count() or 1)


@dataclass(frozen=True)
class ToolSpec:
    name: str
    extension: str
    process: object  # (path, out_dir, cfg) -> (outputs: list[Path], payload)
    finalize: object = None  # (payloads in input order, run_dir, cfg) -> list[Path]


@dataclass
class RunResult:
    run_dir: Path
    manifest: RunManifest

    @property
    def exit_code(self) -> int:
        return {"ok": 0, "partial": 2}.get(self.manifest.status, 1)


def load_config_file(path) -> dict:
    """Flat key=value config file; blank lines and #-comments ignored."""
    out = {}
    text = Path(path).read_text(encoding="utf-8")
    for i, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise SchemaError("expected key=value", source=str(path), line=i)
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def run_tool(spec: ToolSpec, config: ToolConfig, registry=None) -> RunResult:
    """Discover, process each file independently, finalize, write the manifest."""
    print(f"running tool: {spec.name} (movelab {__version__})")
    input_root = Path(config.input_root)
    files = discover(input_root, config.param("extension", spec.extension))
    if not files:
        raise EmptyBatchError(
            f"no {spec.extension} files under {input_root}"
        )
    output_root = Path(config.output_root)
    try:
        output_root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise PathError(f"output root {output_root} is not writable: {exc}") from exc
    base_name = run_directory_name(spec.name)
    run_dir = output_root / base_name
    suffix = 1
    while run_dir.exists():
        suffix += 1
        run_dir = output_root / f"{base_name}_{suffix}"
    run_dir.mkdir(parents=True)

    results: list = [None] * len(files)
    failures: list = []

    def work(index: int, path: Path):
        try:
            outputs, payload = spec.process(path, run_dir, config)
            return index, outputs, payload, None
        except MovelabError as exc:
            return index, [], None, f"{type(exc).__name__}: {exc}"
        except Exception as exc:  # noqa: BLE001 -- batch must survive anything per-file
            return (
                index,
                [],
                None,
                f"unexpected {type(exc).__name__}: {exc} "
                f"({traceback.format_exc(limit=2).splitlines()[-1]})",
            )

    outputs_all: list[Path] = []
    with ThreadPoolExecutor(max_workers=config.effective_jobs()) as pool:
        for index, outputs, payload, error in pool.map(
            lambda args: work(*args), enumerate(files)
        ):
            if error is None:
                results[index] = payload
                outputs_all.extend(outputs)
            else:
                failures.append({"input": str(files[index]), "error": error})

    if spec.finalize is not None:
        ordered = [
            (files[i], results[i]) for i in range(len(files)) if results[i] is not None
        ]
        outputs_all.extend(spec.finalize(ordered, run_dir, config))

    n_ok = len(files) - len(failures)
    status = "ok" if not failures else ("partial" if n_ok else "failed")
    manifest = RunManifest(
        tool=spec.name,
        version=__version__,
        timestamp=_dt.datetime.now().isoformat(timespec="seconds"),
        inputs=[str(p) for p in files],
        parameters={
            "extension": config.param("extension", spec.extension),
            "jobs": config.effective_jobs(),
            **{
                k: v
                for k, v in sorted(config.params.items())
                if k != "extension" and not k.startswith("_")
            },
        },
        outputs=[str(p) for p in sorted(outputs_all, key=lambda p: str(p))],
        failures=failures,
        status=status,
    )
    write_manifest(manifest, run_dir)
    return RunResult(run_dir=run_dir, manifest=manifest)


# ---------------------------------------------------------------------------
# per-tool processing functions

def _resolve_rate(time_col, cfg: ToolConfig, source: str) -> float:
    from .emg import rate_from_time

    rate = cfg.param("rate_hz")
    if rate is not None:
        return float(rate)
    if time_col is None:
        raise SchemaError(
            "no rate given and no time column to derive it from", source=source
        )
    return rate_from_time(time_col, source=source)


def _pick_column(channels: dict, selector, source: str) -> tuple[str, np.ndarray]:
    names = list(channels)
    if selector is None:
        return names[0], channels[names[0]]
    if isinstance(selector, str) and selector in channels:
        return selector, channels[selector]
    try:
        idx = int(selector)
        return names[idx], channels[names[idx]]
    except (ValueError, IndexError):
        raise SchemaError(
            f"column {selector!r} not found among {names}", source=source
        ) from None


def process_emg_file(path: Path, run_dir: Path, cfg: ToolConfig):
    from .emg import EmgConfig, emg_pipeline, read_timeseries_csv, write_emg_outputs

    text = Path(path).read_text(encoding="utf-8")
    time_col, channels = read_timeseries_csv(text, source=str(path))
    rate = _resolve_rate(time_col, cfg, str(path))
    emg_cfg = EmgConfig(
        rate_hz=rate,
        band_hz=cfg.param("band_hz", (20.0, 450.0)),
        order=int(cfg.param("order", 4)),
        rms_window_s=float(cfg.param("rms_window_s", 0.05)),
        mdf_window_s=float(cfg.param("mdf_window_s", 1.0)),
        mdf_overlap=float(cfg.param("mdf_overlap", 0.5)),
        analysis_window_s=cfg.param("analysis_window_s"),
    )
    out_dir = run_dir / Path(path).stem
    outputs = []
    summaries = {}
    for name, values in channels.items():
        series = UniformSeries(values, rate)
        result = emg_pipeline(series, emg_cfg, source=str(path), channel=name)
        outputs.extend(write_emg_outputs(result, out_dir))
        summaries[name] = {**result.summary, "notes": list(result.notes)}
    return outputs, {"channels": summaries}


EMG_TOOL = ToolSpec(name="emg", extension=".csv", process=process_emg_file)


def process_cop_file(path: Path, run_dir: Path, cfg: ToolConfig):
    from .cop import CopTrial, cop_report, preprocess_cop
    from .emg import read_timeseries_csv

    text = Path(path).read_text(encoding="utf-8")
    time_col, channels = read_timeseries_csv(text, source=str(path))
    rate = _resolve_rate(time_col, cfg, str(path))
    names = list(channels)
    cx_name, cx = _pick_column(channels, cfg.param("cx_column"), str(path))
    cy_selector = cfg.param("cy_column")
    if cy_selector is None:
        after = names.index(cx_name) + 1
        if after >= len(names):
            raise SchemaError(
                f"no column after {cx_name!r} to use as Cy", source=str(path)
            )
        cy_selector = names[after]
    _, cy = _pick_column(channels, cy_selector, str(path))
    units = cfg.param("units", "cm")
    if units not in UNIT_TO_CM:
        raise ValidationError(f"units must be one of {sorted(UNIT_TO_CM)}, got {units!r}")
    scale = UNIT_TO_CM[units]
    trial = CopTrial(
        cx=UniformSeries(cx * scale, rate), cy=UniformSeries(cy * scale, rate)
    )
    lowpass = cfg.param("lowpass_hz", 10.0)
    lowpass = None if lowpass in (None, "off", "none") else float(lowpass)
    trial = preprocess_cop(trial, lowpass_hz=lowpass, order=int(cfg.param("order", 4)))
    out_dir = run_dir / Path(path).stem
    metrics, files = cop_report(trial, out_dir, Path(path).stem)
    return files, {"metrics": metrics}


COP_TOOL = ToolSpec(name="cop", extension=".csv", process=process_cop_file)


def load_selections_file(path) -> dict:
    """Per-file analysis selections, keyed by input file name."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise SchemaError("selections file must be a JSON object", source=str(path))
    return data


def selections_for(cfg: ToolConfig, file_name: str) -> dict:
    sel_path = cfg.param("selections_file")
    if sel_path is None:
        return {}
    return load_selections_file(sel_path).get(file_name, {})


def process_forcecube_file(path: Path, run_dir: Path, cfg: ToolConfig):
    from .emg import read_timeseries_csv
    from .force import (
        ContactConfig,
        ForceSelections,
        body_weight,
        compute_metrics,
        detect_contact,
        detect_force_landmarks,
    )
    from .svgplot import emit_plot

    text = Path(path).read_text(encoding="utf-8")
    time_col, channels = read_timeseries_csv(text, source=str(path))
    rate = _resolve_rate(time_col, cfg, str(path))
    sel_record = selections_for(cfg, Path(path).name)
    fz_selector = sel_record.get("fz_column", cfg.param("fz_column"))
    _, fz_vals = _pick_column(channels, fz_selector, str(path))
    fz = UniformSeries(fz_vals, rate)

    bw_window = sel_record.get("bw_window", cfg.param("bw_window"))
    if bw_window is None:
        raise ValidationError(
            f"{Path(path).name}: no body-weight window (selections file or --bw-window)"
        )
    selections = ForceSelections(
        bw_window=tuple(bw_window),
        analysis_windows=tuple(tuple(w) for w in sel_record.get("analysis_windows", ())),
        picked_peaks=(
            tuple(sel_record["picked_peaks"]) if sel_record.get("picked_peaks") else None
        ),
        side_foot=sel_record.get("SideFoot_RL", ""),
        dominance=sel_record.get("Dominance_RL", ""),
        quality=sel_record.get("Quality"),
        trial=int(sel_record.get("Trial", 1)),
    )
    bw_n, _ = body_weight(fz, selections.bw_window)
    contact_cfg = ContactConfig(
        threshold_n=float(cfg.param("threshold_n", 20.0)),
        hold_ms=float(cfg.param("hold_ms", 10.0)),
    )
    # Contact search region: the first analysis window when one was selected,
    # otherwise everything after the quiet-standing window (which itself sits
    # above the contact threshold).
    if selections.analysis_windows:
        region = selections.analysis_windows[0]
    else:
        region = (selections.bw_window[1], fz.end_s)
    search_start = int(round((region[0] - fz.t0_s) * rate))
    searched = trim(fz, region[0], min(region[1], fz.end_s))
    found = detect_contact(searched, bw_n, contact_cfg)
    from .force import ForceContact

    contact = ForceContact(
        onset=found.onset + search_start, toeoff=found.toeoff + search_start
    )
    landmarks = detect_force_landmarks(
        fz, contact, bw_n, picked_peaks=selections.picked_peaks
    )
    row, errors = compute_metrics(
        fz,
        selections,
        contact,
        landmarks,
        bw_n,
        file_name=Path(path).name,
        timestamp=_dt.datetime.now().isoformat(timespec="seconds"),
    )
    t = time_axis(fz)
    plot_path = run_dir / f"{Path(path).stem}_force.svg"
    plot_path.write_bytes(
        emit_plot(
            [(t, fz.values / bw_n)],
            ["Fz"],
            title=f"{Path(path).name}: vertical ground reaction force",
            y_label="force (BW)",
            markers=[
                (t[landmarks.itransient], fz.values[landmarks.itransient] / bw_n, "ITransient"),
                (t[landmarks.vip], fz.values[landmarks.vip] / bw_n, "VIP"),
                (t[landmarks.vmax], fz.values[landmarks.vmax] / bw_n, "VMax"),
                (t[contact.onset], fz.values[contact.onset] / bw_n, "onset"),
                (t[contact.toeoff], fz.values[contact.toeoff] / bw_n, "toe-off"),
            ],
        )
    )
    return [plot_path], {"row": row, "errors": errors}


def finalize_forcecube(ordered, run_dir: Path, cfg: ToolConfig):
    from .force import results_csv_text

    rows = []
    cum = 0.0
    for _, payload in ordered:
        row = dict(payload["row"])
        cum += row["Contact_Time_s"]
        row["CumSum_Times_s"] = cum
        rows.append(row)
    path = run_dir / "forcecube_results.csv"
    path.write_text(results_csv_text(rows), encoding="utf-8")
    return [path]


FORCECUBE_TOOL = ToolSpec(
    name="forcecube",
    extension=".csv",
    process=process_forcecube_file,
    finalize=finalize_forcecube,
)


def parse_cluster_specs(raw) -> list:
    """Cluster definitions from 'name:m1,m2,m3' strings."""
    from .kinematics import ClusterDefinition

    specs = []
    items = raw if isinstance(raw, (list, tuple)) else [raw]
    for item in items:
        name, _, markers = str(item).partition(":")
        parts = [m.strip() for m in markers.split(",")]
        if not name or len(parts) != 3 or not all(parts):
            raise ValidationError(
                f"cluster spec {item!r} must look like name:m1,m2,m3"
            )
        specs.append(
            ClusterDefinition(name.strip(), parts[0], parts[1], parts[2])
        )
    return specs


def process_cluster_file(path: Path, run_dir: Path, cfg: ToolConfig):
    from .c3d import csv_to_c3d, read_c3d
    from .core import MarkerFrameSet
    from .kinematics import cluster_pipeline
    from .svgplot import emit_plot

    raw_specs = cfg.param("clusters")
    if not raw_specs:
        raise ValidationError("cluster tool needs at least one --clusters spec")
    clusters = parse_cluster_specs(raw_specs)
    reference = cfg.param("reference", "first-frame-relative")
    clusters = [replace(c, reference=reference) for c in clusters]

    path = Path(path)
    if path.suffix.lower() == ".c3d":
        doc = read_c3d(path.read_bytes())
    else:
        doc = csv_to_c3d(
            path.read_text(encoding="utf-8"),
            float(cfg.param("rate_hz", 100.0)),
            point_units=cfg.param("units", "mm"),
        )
    markers = doc.point_data
    unit_scale = {"mm": 0.001, "m": 1.0, "cm": 0.01}.get(
        cfg.param("units", doc.point_units if doc.point_units in ("mm", "m", "cm") else "mm")
    )
    if unit_scale is None:
        raise ValidationError("units must be mm, cm or m")
    markers = MarkerFrameSet(
        markers.marker_names, markers.positions * unit_scale, markers.rate_hz
    )

    results = cluster_pipeline(markers, clusters, cfg.param("calibration_window"))
    out_dir = run_dir / path.stem
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []

    t = np.arange(markers.n_frames) / markers.rate_hz
    header = ["time"]
    columns = []
    for res in results:
        header += [f"{res.name}_X", f"{res.name}_Y", f"{res.name}_Z"]
        columns.append(res.angles_deg)
    merged = np.hstack(columns)
    lines = [",".join(header)]
    for k in range(markers.n_frames):
        cells = [f"{t[k]:.9g}"]
        cells += ["" if np.isnan(v) else f"{v:.9g}" for v in merged[k]]
        lines.append(",".join(cells))
    csv_path = out_dir / f"{path.stem}_cluster.csv"
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    outputs.append(csv_path)

    for res in results:
        fig_path = out_dir / f"{path.stem}_{res.name}_figure.svg"
        fig_path.write_bytes(
            emit_plot(
                [(t, res.angles_deg[:, i]) for i in range(3)],
                [f"{res.name}_X", f"{res.name}_Y", f"{res.name}_Z"],
                title=f"{res.name}: segment angles",
                y_label="angle (deg)",
            )
        )
        outputs.append(fig_path)
    return outputs, {"clusters": [r.name for r in results]}


CLUSTER_TOOL = ToolSpec(name="cluster", extension=".c3d", process=process_cluster_file)


def process_imu_file(path: Path, run_dir: Path, cfg: ToolConfig):
    from .emg import read_timeseries_csv
    from .kinematics import ImuSample, complementary_fuse, imu_csv_text

    text = Path(path).read_text(encoding="utf-8")
    time_col, channels = read_timeseries_csv(text, source=str(path))
    if time_col is None:
        raise SchemaError("IMU input needs a time column", source=str(path))
    if len(channels) < 6:
        raise SchemaError(
            f"IMU input needs 6 sensor columns, got {len(channels)}", source=str(path)
        )
    rate = _resolve_rate(time_col, cfg, str(path))
    cols = list(channels.values())[:6]
    samples = [
        ImuSample(
            gyro=np.array([cols[0][i], cols[1][i], cols[2][i]]),
            acc=np.array([cols[3][i], cols[4][i], cols[5][i]]),
        )
        for i in range(len(cols[0]))
    ]
    states = complementary_fuse(
        samples, rate, alpha=float(cfg.param("alpha", 0.98)), t0_s=float(time_col[0])
    )
    out_path = run_dir / f"{Path(path).stem}_imu.csv"
    out_path.write_text(imu_csv_text(states, samples), encoding="utf-8")
    return [out_path], {"samples": len(samples)}


IMU_TOOL = ToolSpec(name="imu", extension=".csv", process=process_imu_file)


def process_c3d_to_csv(path: Path, run_dir: Path, cfg: ToolConfig):
    from .c3d import c3d_to_csv, read_c3d

    doc = read_c3d(Path(path).read_bytes())
    points_csv, analog_csv = c3d_to_csv(doc)
    outputs = []
    points_path = run_dir / f"{Path(path).stem}_points.csv"
    points_path.write_text(points_csv, encoding="utf-8")
    outputs.append(points_path)
    if analog_csv is not None:
        analog_path = run_dir / f"{Path(path).stem}_analog.csv"
        analog_path.write_text(analog_csv, encoding="utf-8")
        outputs.append(analog_path)
    return outputs, {"markers": len(doc.point_labels)}


C3D2CSV_TOOL = ToolSpec(name="c3d2csv", extension=".c3d", process=process_c3d_to_csv)


def process_csv_to_c3d(path: Path, run_dir: Path, cfg: ToolConfig):
    from .c3d import csv_to_c3d, write_c3d

    rate = cfg.param("rate_hz")
    if rate is None:
        raise ValidationError("csv2c3d needs --rate")
    doc = csv_to_c3d(
        Path(path).read_text(encoding="utf-8"),
        float(rate),
        point_units=cfg.param("units", "mm"),
    )
    out_path = run_dir / f"{Path(path).stem}.c3d"
    out_path.write_bytes(write_c3d(doc))
    return [out_path], {"markers": len(doc.point_labels)}


CSV2C3D_TOOL = ToolSpec(name="csv2c3d", extension=".csv", process=process_csv_to_c3d)


TOOLS = {
    spec.name: spec
    for spec in (
        EMG_TOOL,
        COP_TOOL,
        FORCECUBE_TOOL,
        CLUSTER_TOOL,
        IMU_TOOL,
        C3D2CSV_TOOL,
        CSV2C3D_TOOL,
    )
}
