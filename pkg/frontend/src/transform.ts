/**
 * View <-> native pixel mapping for the zoomable annotation canvas.
 *
 * The view shows the native image scaled by `zoom` (>= 1) with the native
 * point (panX, panY) at the view origin. The annotation record stores
 * native pixels, so this pair of maps must compose to identity well inside
 * half a pixel.
 */

export interface ViewTransform {
  zoom: number;
  panX: number;
  panY: number;
}

export interface Point {
  x: number;
  y: number;
}

export function identityTransform(): ViewTransform {
  return { zoom: 1, panX: 0, panY: 0 };
}

export function validateTransform(t: ViewTransform): void {
  if (!(t.zoom >= 1)) {
    throw new Error(`zoom must be >= 1, got ${t.zoom}`);
  }
  if (!Number.isFinite(t.panX) || !Number.isFinite(t.panY)) {
    throw new Error("pan offsets must be finite");
  }
}

export function viewToNative(t: ViewTransform, view: Point): Point {
  validateTransform(t);
  return { x: view.x / t.zoom + t.panX, y: view.y / t.zoom + t.panY };
}

export function nativeToView(t: ViewTransform, native: Point): Point {
  validateTransform(t);
  return { x: (native.x - t.panX) * t.zoom, y: (native.y - t.panY) * t.zoom };
}

/** Zoom about a fixed view point so the pixel under the cursor stays put. */
export function zoomAt(t: ViewTransform, viewPoint: Point, factor: number): ViewTransform {
  const anchor = viewToNative(t, viewPoint);
  const zoom = Math.max(1, t.zoom * factor);
  return {
    zoom,
    panX: anchor.x - viewPoint.x / zoom,
    panY: anchor.y - viewPoint.y / zoom,
  };
}

export function panBy(t: ViewTransform, dxView: number, dyView: number): ViewTransform {
  validateTransform(t);
  return { zoom: t.zoom, panX: t.panX - dxView / t.zoom, panY: t.panY - dyView / t.zoom };
}
