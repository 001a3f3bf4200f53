/**
 * Page wiring: file browser on the left, three workflow panels on the
 * right (annotate video, select force windows/peaks, marker playback).
 * All state logic lives in the imported modules; this file only touches
 * the DOM.
 */

import { ApiClient, type FileEntry, type SeriesResponse } from "./api.js";
import {
  clickAt,
  createAnnotator,
  cycleSlot,
  flush,
  marksForFrame,
  stepFrame,
  unsavedCount,
  type AnnotatorState,
} from "./annotator.js";
import {
  addAnalysisWindow,
  addPick,
  createSelection,
  snapPick,
  stageBwWindow,
  submit,
  type SelectionState,
} from "./selection.js";
import {
  createPlayback,
  frameCount,
  parseTripletCsv,
  pause,
  play,
  projectOrtho,
  seek,
  step,
  toggleMarker,
  visiblePoints,
  type PlaybackState,
} from "./playback.js";
import { panBy, zoomAt } from "./transform.js";

const api = new ApiClient("");

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text) node.textContent = text;
  return node;
}

function statusLine(msg: string): void {
  const bar = document.getElementById("status")!;
  bar.textContent = msg;
}

// ---------------------------------------------------------------- annotator

let annotator: AnnotatorState | null = null;
const FPS_FALLBACK = 30;

async function openVideo(entry: FileEntry): Promise<void> {
  const video = document.getElementById("video") as HTMLVideoElement;
  const overlay = document.getElementById("overlay") as HTMLCanvasElement;
  video.src = `/media/${entry.path}`;
  await new Promise<void>((resolve) => {
    video.onloadedmetadata = () => resolve();
    video.onerror = () => resolve();
  });
  const fps = FPS_FALLBACK;
  const frames = Math.max(1, Math.round((video.duration || 1) * fps));
  annotator = createAnnotator(entry.path, frames, 8);
  const existing = await api.getAnnotations(entry.path);
  annotator.saved = existing.marks;
  overlay.width = video.videoWidth || 640;
  overlay.height = video.videoHeight || 360;
  drawAnnotator();
  statusLine(`annotating ${entry.path}: ${frames} frames, slot 1 active`);
}

function drawAnnotator(): void {
  if (!annotator) return;
  const video = document.getElementById("video") as HTMLVideoElement;
  const overlay = document.getElementById("overlay") as HTMLCanvasElement;
  const ctx = overlay.getContext("2d")!;
  const t = annotator.transform;
  video.currentTime = annotator.frame / FPS_FALLBACK;
  ctx.clearRect(0, 0, overlay.width, overlay.height);
  ctx.strokeStyle = "#0f0";
  ctx.fillStyle = "#0f0";
  ctx.font = "11px sans-serif";
  for (const mark of marksForFrame(annotator, annotator.frame)) {
    const vx = (mark.x - t.panX) * t.zoom;
    const vy = (mark.y - t.panY) * t.zoom;
    ctx.beginPath();
    ctx.arc(vx, vy, 4, 0, 2 * Math.PI);
    ctx.stroke();
    ctx.fillText(`p${mark.slot + 1}`, vx + 6, vy - 6);
  }
  const info = document.getElementById("annot-info")!;
  info.textContent =
    `frame ${annotator.frame + 1}/${annotator.frameCount}  ` +
    `slot p${annotator.activeSlot + 1}  zoom ${t.zoom.toFixed(2)}  ` +
    `unsaved ${unsavedCount(annotator)}${annotator.retryPending ? " (retry pending)" : ""}`;
}

function bindAnnotator(): void {
  const overlay = document.getElementById("overlay") as HTMLCanvasElement;
  overlay.addEventListener("click", (ev) => {
    if (!annotator) return;
    const rect = overlay.getBoundingClientRect();
    clickAt(annotator, { x: ev.clientX - rect.left, y: ev.clientY - rect.top });
    drawAnnotator();
  });
  overlay.addEventListener("wheel", (ev) => {
    if (!annotator) return;
    ev.preventDefault();
    const rect = overlay.getBoundingClientRect();
    const factor = ev.deltaY < 0 ? 1.25 : 0.8;
    annotator.transform = zoomAt(
      annotator.transform,
      { x: ev.clientX - rect.left, y: ev.clientY - rect.top },
      factor,
    );
    drawAnnotator();
  });
  document.getElementById("zoom-in")!.addEventListener("click", () => {
    if (!annotator) return;
    annotator.transform = zoomAt(annotator.transform, { x: 320, y: 180 }, 1.25);
    drawAnnotator();
  });
  document.getElementById("zoom-out")!.addEventListener("click", () => {
    if (!annotator) return;
    annotator.transform = zoomAt(annotator.transform, { x: 320, y: 180 }, 0.8);
    drawAnnotator();
  });
  window.addEventListener("keydown", (ev) => {
    if (!annotator) return;
    if (ev.key === "ArrowRight") stepFrame(annotator, 1);
    else if (ev.key === "ArrowLeft") stepFrame(annotator, -1);
    else if (ev.key === "Tab") {
      ev.preventDefault();
      cycleSlot(annotator, ev.shiftKey ? -1 : 1);
    } else if (ev.key === "ArrowUp") annotator.transform = panBy(annotator.transform, 0, 20);
    else if (ev.key === "ArrowDown") annotator.transform = panBy(annotator.transform, 0, -20);
    else return;
    drawAnnotator();
  });
  document.getElementById("save-marks")!.addEventListener("click", async () => {
    if (!annotator) return;
    const ok = await flush(annotator, api);
    statusLine(ok ? "marks saved" : "save failed; marks kept locally, press save to retry");
    drawAnnotator();
  });
}

// ---------------------------------------------------------------- selection

let selection: SelectionState | null = null;
let dragStart: number | null = null;

function chartToTime(series: SeriesResponse, px: number, width: number): number {
  const t0 = series.t[0] ?? 0;
  const t1 = series.t[series.t.length - 1] ?? 1;
  return t0 + (px / width) * (t1 - t0);
}

function drawSelection(): void {
  const canvas = document.getElementById("chart") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (!selection) return;
  const { t, v } = selection.series;
  if (t.length === 0) return;
  const t0 = t[0]!;
  const t1 = t[t.length - 1]!;
  const vMin = Math.min(...v);
  const vMax = Math.max(...v);
  const sx = (x: number) => ((x - t0) / (t1 - t0 || 1)) * canvas.width;
  const sy = (y: number) =>
    canvas.height - ((y - vMin) / (vMax - vMin || 1)) * (canvas.height - 10) - 5;
  ctx.fillStyle = "rgba(80,160,255,0.25)";
  if (selection.bwWindow) {
    ctx.fillRect(
      sx(selection.bwWindow.start),
      0,
      sx(selection.bwWindow.end) - sx(selection.bwWindow.start),
      canvas.height,
    );
  }
  ctx.fillStyle = "rgba(120,220,120,0.25)";
  for (const w of selection.analysisWindows) {
    ctx.fillRect(sx(w.start), 0, sx(w.end) - sx(w.start), canvas.height);
  }
  ctx.strokeStyle = "#333";
  ctx.beginPath();
  t.forEach((x, i) => {
    const px = sx(x);
    const py = sy(v[i]!);
    if (i === 0) ctx.moveTo(px, py);
    else ctx.lineTo(px, py);
  });
  ctx.stroke();
  ctx.fillStyle = "#d00";
  for (const p of selection.picks) {
    ctx.beginPath();
    ctx.arc(sx(p.t), sy(p.v), 4, 0, 2 * Math.PI);
    ctx.fill();
  }
  document.getElementById("sel-info")!.textContent =
    `bw ${selection.bwWindow ? `${selection.bwWindow.start.toFixed(2)}-${selection.bwWindow.end.toFixed(2)}` : "unset"}  ` +
    `windows ${selection.analysisWindows.length}  picks ${selection.picks.map((p) => p.index).join(",") || "none"}`;
}

async function openForceFile(entry: FileEntry): Promise<void> {
  const series = await api.getSeries(entry.path);
  selection = createSelection(series);
  drawSelection();
  statusLine(
    `selecting on ${entry.path} (${series.n_total} samples` +
      `${series.decimated ? ", decimated" : ""}); drag = BW window, ` +
      "shift-drag = analysis window, click = peak pick",
  );
}

function bindSelection(): void {
  const canvas = document.getElementById("chart") as HTMLCanvasElement;
  canvas.addEventListener("mousedown", (ev) => {
    dragStart = ev.offsetX;
  });
  canvas.addEventListener("mouseup", (ev) => {
    if (!selection || dragStart === null) return;
    const start = dragStart;
    dragStart = null;
    const a = chartToTime(selection.series, Math.min(start, ev.offsetX), canvas.width);
    const b = chartToTime(selection.series, Math.max(start, ev.offsetX), canvas.width);
    try {
      if (Math.abs(ev.offsetX - start) < 4) {
        const clickT = chartToTime(selection.series, ev.offsetX, canvas.width);
        const radius = (selection.series.t[selection.series.t.length - 1]! - selection.series.t[0]!) * 0.01;
        addPick(selection, snapPick(selection, clickT, radius));
      } else if (ev.shiftKey) {
        addAnalysisWindow(selection, a, b);
      } else {
        stageBwWindow(selection, a, b);
      }
    } catch (err) {
      statusLine(String(err));
    }
    drawSelection();
  });
  document.getElementById("submit-selection")!.addEventListener("click", async () => {
    if (!selection) return;
    try {
      const { runId } = await submit(selection, api, { runForcecube: true });
      statusLine(`selections stored; forcecube run ${runId} started`);
      if (runId) {
        const done = await api.waitForRun(runId);
        statusLine(`forcecube run ${runId}: ${done.status}`);
      }
    } catch (err) {
      statusLine(String(err));
    }
  });
}

// ----------------------------------------------------------------- playback

let playback: PlaybackState | null = null;
let playbackTimer: number | null = null;

async function openMarkerCsv(entry: FileEntry): Promise<void> {
  const resp = await fetch(`/media/${entry.path}`);
  const text = await resp.text();
  try {
    playback = createPlayback(parseTripletCsv(text));
  } catch (err) {
    statusLine(`cannot open marker file: ${err}`);
    return;
  }
  const toggles = document.getElementById("marker-toggles")!;
  toggles.innerHTML = "";
  for (const name of playback.data.markerNames) {
    const label = el("label", {}, name);
    const box = el("input", { type: "checkbox", checked: "checked" });
    box.addEventListener("change", () => {
      if (!playback) return;
      toggleMarker(playback, name);
      drawPlayback();
    });
    label.prepend(box);
    toggles.appendChild(label);
  }
  const scrub = document.getElementById("scrub") as HTMLInputElement;
  scrub.max = String(frameCount(playback) - 1);
  scrub.value = "0";
  drawPlayback();
  statusLine(`playing ${entry.path}: ${frameCount(playback)} frames`);
}

function drawPlayback(): void {
  const canvas = document.getElementById("scene") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (!playback) return;
  const pts = visiblePoints(playback);
  const all = playback.data.frames.flat().filter((p) => !Number.isNaN(p[0]!));
  const span = Math.max(1e-9, ...all.map((p) => Math.max(Math.abs(p[0]!), Math.abs(p[1]!), Math.abs(p[2]!))));
  const scale = Math.min(canvas.width, canvas.height) / (2.5 * span);
  ctx.fillStyle = "#06c";
  ctx.font = "10px sans-serif";
  for (const p of pts) {
    const { u, v } = projectOrtho(p, Math.PI / 6, Math.PI / 8);
    const px = canvas.width / 2 + u * scale;
    const py = canvas.height / 2 - v * scale;
    ctx.beginPath();
    ctx.arc(px, py, 4, 0, 2 * Math.PI);
    ctx.fill();
    ctx.fillText(p.name, px + 6, py);
  }
  (document.getElementById("scrub") as HTMLInputElement).value = String(playback.frame);
  document.getElementById("play-info")!.textContent =
    `frame ${playback.frame + 1}/${frameCount(playback)}`;
}

function bindPlayback(): void {
  const tick = () => {
    if (playback?.playing) {
      step(playback);
      drawPlayback();
    }
  };
  playbackTimer = window.setInterval(tick, 50);
  void playbackTimer;
  document.getElementById("play-fwd")!.addEventListener("click", () => {
    if (playback) play(playback, 1);
  });
  document.getElementById("play-back")!.addEventListener("click", () => {
    if (playback) play(playback, -1);
  });
  document.getElementById("pause")!.addEventListener("click", () => {
    if (playback) pause(playback);
  });
  document.getElementById("step-fwd")!.addEventListener("click", () => {
    if (playback) {
      playback.direction = 1;
      step(playback);
      drawPlayback();
    }
  });
  document.getElementById("step-back")!.addEventListener("click", () => {
    if (playback) {
      playback.direction = -1;
      step(playback);
      drawPlayback();
    }
  });
  (document.getElementById("scrub") as HTMLInputElement).addEventListener("input", (ev) => {
    if (!playback) return;
    seek(playback, Number((ev.target as HTMLInputElement).value));
    drawPlayback();
  });
}

// ---------------------------------------------------------------- file list

async function refreshFiles(): Promise<void> {
  const list = document.getElementById("files")!;
  list.innerHTML = "";
  const entries = await api.listFiles();
  for (const entry of entries) {
    const item = el("li", {}, `${entry.path} [${entry.type}]`);
    item.addEventListener("click", () => {
      if (entry.type === "video") void openVideo(entry);
      else if (entry.type === "force" || entry.type === "timeseries" || entry.type === "emg" || entry.type === "cop")
        void openForceFile(entry);
      else if (entry.type === "landmarks" || entry.type === "csv") void openMarkerCsv(entry);
      else statusLine(`no viewer for type ${entry.type}`);
    });
    list.appendChild(item);
  }
}

export function start(): void {
  bindAnnotator();
  bindSelection();
  bindPlayback();
  void refreshFiles();
  document.getElementById("refresh")!.addEventListener("click", () => void refreshFiles());
}

if (typeof document !== "undefined" && document.getElementById("files")) {
  start();
}
