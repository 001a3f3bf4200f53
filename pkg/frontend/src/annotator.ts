/**
 * Annotation workflow state: frame navigation, zoom/pan, slot cycling and
 * the unsaved-mark buffer. Marks are stored in native video pixels; the
 * frame index the user saw is authoritative regardless of browser seek
 * accuracy.
 */

import type { ApiClient, Mark } from "./api.js";
import { identityTransform, viewToNative, type Point, type ViewTransform } from "./transform.js";

export interface AnnotatorState {
  file: string;
  frameCount: number;
  frame: number;
  transform: ViewTransform;
  activeSlot: number;
  slotCount: number;
  /** saved marks as last fetched from the service */
  saved: Mark[];
  /** unsaved edits keyed by `${frame}:${slot}`; flushed explicitly */
  buffer: Map<string, Mark>;
  retryPending: boolean;
}

export function createAnnotator(file: string, frameCount: number, slotCount = 1): AnnotatorState {
  if (frameCount < 1) throw new Error("frameCount must be >= 1");
  if (slotCount < 1) throw new Error("slotCount must be >= 1");
  return {
    file,
    frameCount,
    frame: 0,
    transform: identityTransform(),
    activeSlot: 0,
    slotCount,
    saved: [],
    buffer: new Map(),
    retryPending: false,
  };
}

export function stepFrame(state: AnnotatorState, delta: 1 | -1): void {
  state.frame = Math.min(state.frameCount - 1, Math.max(0, state.frame + delta));
}

export function cycleSlot(state: AnnotatorState, delta: 1 | -1 = 1): void {
  state.activeSlot = (state.activeSlot + delta + state.slotCount) % state.slotCount;
}

/** Record a click at view coordinates as a native-pixel mark on the active slot. */
export function clickAt(state: AnnotatorState, view: Point): Mark {
  const native = viewToNative(state.transform, view);
  if (native.x < 0 || native.y < 0) {
    throw new Error(`click maps to negative native pixel (${native.x}, ${native.y})`);
  }
  const mark: Mark = { frame: state.frame, slot: state.activeSlot, x: native.x, y: native.y };
  state.buffer.set(`${mark.frame}:${mark.slot}`, mark);
  return mark;
}

export function marksForFrame(state: AnnotatorState, frame: number): Mark[] {
  const merged = new Map<string, Mark>();
  for (const m of state.saved) {
    if (m.frame === frame) merged.set(`${m.frame}:${m.slot}`, m);
  }
  for (const m of state.buffer.values()) {
    if (m.frame === frame) merged.set(`${m.frame}:${m.slot}`, m);
  }
  return [...merged.values()].sort((a, b) => a.slot - b.slot);
}

export function unsavedCount(state: AnnotatorState): number {
  return state.buffer.size;
}

/**
 * Push buffered marks to the service. On failure the buffer is preserved and
 * retryPending is set so the UI can offer a retry prompt.
 */
export async function flush(state: AnnotatorState, api: ApiClient): Promise<boolean> {
  if (state.buffer.size === 0) return true;
  const deltas = [...state.buffer.values()];
  try {
    await api.postAnnotations(state.file, deltas);
  } catch {
    state.retryPending = true;
    return false;
  }
  for (const m of deltas) {
    state.saved = state.saved.filter((s) => !(s.frame === m.frame && s.slot === m.slot));
    state.saved.push(m);
  }
  state.buffer.clear();
  state.retryPending = false;
  return true;
}

/** Frame switch guard: unsaved work must be flushed (or explicitly dropped) first. */
export async function switchFrameSet(
  state: AnnotatorState,
  api: ApiClient,
  nextFile: string,
  nextFrameCount: number,
): Promise<AnnotatorState> {
  const ok = await flush(state, api);
  if (!ok) throw new Error("unsaved marks could not be flushed; retry before switching");
  const fresh = createAnnotator(nextFile, nextFrameCount, state.slotCount);
  const existing = await api.getAnnotations(nextFile);
  fresh.saved = existing.marks;
  return fresh;
}
