/**
 * Marker playback state: frame scrubbing in both directions with
 * per-marker visibility, driving the 3D scatter canvas.
 */

export interface MarkerFrames {
  markerNames: string[];
  /** frames x markers x 3, NaN = gap */
  frames: number[][][];
}

export interface PlaybackState {
  data: MarkerFrames;
  frame: number;
  direction: 1 | -1;
  playing: boolean;
  hidden: Set<string>;
}

export function createPlayback(data: MarkerFrames): PlaybackState {
  if (data.frames.length === 0 || data.markerNames.length === 0) {
    throw new Error("empty marker set");
  }
  return { data, frame: 0, direction: 1, playing: false, hidden: new Set() };
}

export function frameCount(state: PlaybackState): number {
  return state.data.frames.length;
}

/** One playback tick; stops at either end instead of wrapping. */
export function step(state: PlaybackState): number {
  const next = state.frame + state.direction;
  if (next < 0 || next >= frameCount(state)) {
    state.playing = false;
    return state.frame;
  }
  state.frame = next;
  return state.frame;
}

export function play(state: PlaybackState, direction: 1 | -1): void {
  state.direction = direction;
  state.playing = true;
}

export function pause(state: PlaybackState): void {
  state.playing = false;
}

export function seek(state: PlaybackState, frame: number): void {
  if (frame < 0 || frame >= frameCount(state)) {
    throw new Error(`frame ${frame} outside 0..${frameCount(state) - 1}`);
  }
  state.frame = frame;
}

export function toggleMarker(state: PlaybackState, name: string): void {
  if (!state.data.markerNames.includes(name)) {
    throw new Error(`unknown marker ${name}`);
  }
  if (state.hidden.has(name)) {
    state.hidden.delete(name);
  } else {
    state.hidden.add(name);
  }
}

export interface VisiblePoint {
  name: string;
  x: number;
  y: number;
  z: number;
}

/** Markers visible on the current frame (gaps and hidden markers excluded). */
export function visiblePoints(state: PlaybackState): VisiblePoint[] {
  const out: VisiblePoint[] = [];
  const frame = state.data.frames[state.frame]!;
  state.data.markerNames.forEach((name, i) => {
    if (state.hidden.has(name)) return;
    const p = frame[i]!;
    const [x, y, z] = [p[0]!, p[1]!, p[2]!];
    if (Number.isNaN(x) || Number.isNaN(y) || Number.isNaN(z)) return;
    out.push({ name, x, y, z });
  });
  return out;
}

/**
 * Parse the triplet CSV convention (time,<m>_X,<m>_Y,<m>_Z ...) produced by
 * the C3D converter into playback frames.
 */
export function parseTripletCsv(text: string): MarkerFrames {
  const lines = text.split("\n").filter((ln) => ln.trim() !== "");
  if (lines.length < 1) throw new Error("empty marker CSV");
  const header = lines[0]!.split(",").map((h) => h.trim());
  if ((header.length - 1) % 3 !== 0 || header.length < 4) {
    throw new Error("expected time plus X/Y/Z triplets");
  }
  const markerNames: string[] = [];
  for (let c = 1; c < header.length; c += 3) {
    markerNames.push(header[c]!.replace(/_X$/i, ""));
  }
  const frames: number[][][] = [];
  for (let i = 1; i < lines.length; i++) {
    const cells = lines[i]!.split(",");
    if (cells.length !== header.length) {
      throw new Error(`row ${i + 1} has ${cells.length} fields, expected ${header.length}`);
    }
    const frame: number[][] = [];
    for (let m = 0; m < markerNames.length; m++) {
      const xs = cells[1 + 3 * m]!.trim();
      const ys = cells[2 + 3 * m]!.trim();
      const zs = cells[3 + 3 * m]!.trim();
      frame.push([
        xs === "" ? NaN : Number(xs),
        ys === "" ? NaN : Number(ys),
        zs === "" ? NaN : Number(zs),
      ]);
    }
    frames.push(frame);
  }
  return { markerNames, frames };
}

/** Simple fixed-angle orthographic projection for the scene canvas. */
export function projectOrtho(
  p: { x: number; y: number; z: number },
  yawRad: number,
  pitchRad: number,
): { u: number; v: number } {
  const cy = Math.cos(yawRad);
  const sy = Math.sin(yawRad);
  const cp = Math.cos(pitchRad);
  const sp = Math.sin(pitchRad);
  const x1 = cy * p.x + sy * p.y;
  const y1 = -sy * p.x + cy * p.y;
  return { u: x1, v: cp * p.z - sp * y1 };
}
