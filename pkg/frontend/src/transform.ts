/**
 * Coordinate math between the full image and the canvas viewport.
 *
 * The canvas shows one task's region scaled to fit. Everything the server
 * sends is in full-image pixels; everything the pointer reports is in canvas
 * pixels. These helpers convert between the two and are the only place the
 * client does geometry.
 */

export interface Box {
  x: number;
  y: number;
  w: number;
  h: number;
}

/** Uniform scale plus the letterbox offset that centers the region. */
export interface ViewTransform {
  scale: number;
  offsetX: number;
  offsetY: number;
}

export function boxFromTuple(t: [number, number, number, number]): Box {
  return { x: t[0], y: t[1], w: t[2], h: t[3] };
}

export function boxToTuple(b: Box): [number, number, number, number] {
  return [b.x, b.y, b.w, b.h];
}

/** Fit a region into a canvas, preserving aspect ratio and centering. */
export function fitRegion(
  region: Box,
  canvasW: number,
  canvasH: number,
): ViewTransform {
  const scale = Math.min(canvasW / region.w, canvasH / region.h);
  return {
    scale,
    offsetX: (canvasW - region.w * scale) / 2,
    offsetY: (canvasH - region.h * scale) / 2,
  };
}

/** Full-image box to canvas pixels under the current view. */
export function toCanvas(box: Box, region: Box, t: ViewTransform): Box {
  return {
    x: (box.x - region.x) * t.scale + t.offsetX,
    y: (box.y - region.y) * t.scale + t.offsetY,
    w: box.w * t.scale,
    h: box.h * t.scale,
  };
}

/** Canvas-pixel box back to full-image coordinates. Inverse of toCanvas. */
export function toImage(box: Box, region: Box, t: ViewTransform): Box {
  return {
    x: (box.x - t.offsetX) / t.scale + region.x,
    y: (box.y - t.offsetY) / t.scale + region.y,
    w: box.w / t.scale,
    h: box.h / t.scale,
  };
}

/**
 * Intersect a drawn box with the visible region so a drag that runs off the
 * edge cannot claim pixels the annotator never saw. Returns null when the
 * overlap is empty or degenerate.
 */
export function clampToRegion(box: Box, region: Box): Box | null {
  const x0 = Math.max(box.x, region.x);
  const y0 = Math.max(box.y, region.y);
  const x1 = Math.min(box.x + box.w, region.x + region.w);
  const y1 = Math.min(box.y + box.h, region.y + region.h);
  if (x1 <= x0 || y1 <= y0) {
    return null;
  }
  return { x: x0, y: y0, w: x1 - x0, h: y1 - y0 };
}

/** Turn two drag corners, in any order, into a box with positive extent. */
export function normalizeDrag(
  x0: number,
  y0: number,
  x1: number,
  y1: number,
): Box {
  return {
    x: Math.min(x0, x1),
    y: Math.min(y0, y1),
    w: Math.abs(x1 - x0),
    h: Math.abs(y1 - y0),
  };
}
