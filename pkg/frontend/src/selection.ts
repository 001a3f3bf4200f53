/**
 * Force-trace selection workflow: stage the body-weight window, analysis
 * windows and peak picks on a decimated series, then post them and
 * optionally kick off the batch run.
 *
 * The decimated series preserves per-bucket extrema together with their
 * original sample indices, so a click near a rendered peak snaps to the
 * true sample bit-exactly.
 */

import type { ApiClient, SelectionsPayload, SeriesResponse } from "./api.js";

export interface Window {
  start: number;
  end: number;
}

export interface PeakPick {
  index: number; // original sample index
  t: number;
  v: number;
}

export interface SelectionState {
  series: SeriesResponse;
  bwWindow: Window | null;
  analysisWindows: Window[];
  picks: PeakPick[];
}

export function createSelection(series: SeriesResponse): SelectionState {
  return { series, bwWindow: null, analysisWindows: [], picks: [] };
}

function duration(series: SeriesResponse): number {
  const t = series.t;
  if (t.length < 2) return 0;
  const last = t[t.length - 1]!;
  const first = t[0]!;
  return last - first;
}

function overlaps(a: Window, b: Window): boolean {
  return a.start < b.end && b.start < a.end;
}

function validateWindow(state: SelectionState, w: Window): void {
  if (!(w.start < w.end)) {
    throw new Error(`window start ${w.start} must precede end ${w.end}`);
  }
  const t0 = state.series.t[0] ?? 0;
  const horizon = t0 + duration(state.series) + 1e-9;
  if (w.start < t0 - 1e-9 || w.end > horizon) {
    throw new Error(`window (${w.start}, ${w.end}) outside the series extent`);
  }
  const staged = [...state.analysisWindows, ...(state.bwWindow ? [state.bwWindow] : [])];
  for (const other of staged) {
    if (overlaps(w, other)) {
      throw new Error(
        `window (${w.start}, ${w.end}) overlaps staged (${other.start}, ${other.end})`,
      );
    }
  }
}

/** Drag gesture result: the first staged window is the body-weight window. */
export function stageBwWindow(state: SelectionState, start: number, end: number): void {
  const w = { start, end };
  const keep = state.bwWindow;
  state.bwWindow = null;
  try {
    validateWindow(state, w);
  } catch (err) {
    state.bwWindow = keep;
    throw err;
  }
  state.bwWindow = w;
}

export function addAnalysisWindow(state: SelectionState, start: number, end: number): void {
  const w = { start, end };
  validateWindow(state, w);
  state.analysisWindows.push(w);
}

export function clearWindows(state: SelectionState): void {
  state.bwWindow = null;
  state.analysisWindows = [];
}

/**
 * Snap a click to the decimated point with the largest value inside the
 * snap radius; decimation keeps bucket maxima, so this is the true local
 * extremum of the underlying series.
 */
export function snapPick(state: SelectionState, clickT: number, snapRadiusS: number): PeakPick {
  const { t, v, idx } = state.series;
  let best: PeakPick | null = null;
  for (let i = 0; i < t.length; i++) {
    const ti = t[i]!;
    if (Math.abs(ti - clickT) > snapRadiusS) continue;
    const vi = v[i]!;
    if (best === null || vi > best.v) {
      best = { index: idx[i]!, t: ti, v: vi };
    }
  }
  if (best === null) {
    throw new Error(`no samples within ${snapRadiusS} s of t=${clickT}`);
  }
  return best;
}

export function addPick(state: SelectionState, pick: PeakPick): void {
  if (state.picks.length >= 3) {
    throw new Error("at most three peak picks (transient, impact peak, maximum)");
  }
  if (state.picks.some((p) => p.index === pick.index)) return;
  state.picks.push(pick);
  state.picks.sort((a, b) => a.index - b.index);
}

export function toPayload(state: SelectionState, extra: Partial<SelectionsPayload> = {}): SelectionsPayload {
  if (!state.bwWindow) {
    throw new Error("stage the body-weight window before submitting");
  }
  const payload: SelectionsPayload = {
    file: state.series.file,
    fz_column: state.series.column,
    bw_window: [state.bwWindow.start, state.bwWindow.end],
    analysis_windows: state.analysisWindows.map((w) => [w.start, w.end]),
    ...extra,
  };
  if (state.picks.length > 0) {
    payload.picked_peaks = state.picks.map((p) => p.index);
  }
  return payload;
}

export async function submit(
  state: SelectionState,
  api: ApiClient,
  options: { runForcecube?: boolean } = {},
): Promise<{ runId: string | null }> {
  await api.postSelections(toPayload(state));
  if (!options.runForcecube) return { runId: null };
  const { run_id } = await api.runTool("forcecube");
  return { runId: run_id };
}
