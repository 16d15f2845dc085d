/** Zoom/pan view transform between image pixels and canvas coordinates.
 *
 * canvas = image * scale + offset.  Clicks must map back to the exact
 * pixel they were placed on regardless of the current zoom and pan.
 */

export interface Point {
  x: number;
  y: number;
}

export interface ViewTransform {
  scale: number;
  offsetX: number;
  offsetY: number;
}

export const identityTransform = (): ViewTransform => ({
  scale: 1,
  offsetX: 0,
  offsetY: 0,
});

export function imageToCanvas(t: ViewTransform, p: Point): Point {
  return { x: p.x * t.scale + t.offsetX, y: p.y * t.scale + t.offsetY };
}

export function canvasToImage(t: ViewTransform, p: Point): Point {
  return { x: (p.x - t.offsetX) / t.scale, y: (p.y - t.offsetY) / t.scale };
}

/** Nearest pixel under a canvas position. */
export function pixelFromCanvas(t: ViewTransform, p: Point): Point {
  const img = canvasToImage(t, p);
  return { x: Math.round(img.x), y: Math.round(img.y) };
}

/** Zoom by `factor` keeping the canvas point `anchor` stationary. */
export function zoomAt(t: ViewTransform, anchor: Point, factor: number): ViewTransform {
  const scale = Math.min(Math.max(t.scale * factor, 0.1), 64);
  const applied = scale / t.scale;
  return {
    scale,
    offsetX: anchor.x - (anchor.x - t.offsetX) * applied,
    offsetY: anchor.y - (anchor.y - t.offsetY) * applied,
  };
}

export function panBy(t: ViewTransform, dx: number, dy: number): ViewTransform {
  return { scale: t.scale, offsetX: t.offsetX + dx, offsetY: t.offsetY + dy };
}

/** Fit an image into a canvas with a small margin, centered. */
export function fitImage(
  imageW: number,
  imageH: number,
  canvasW: number,
  canvasH: number,
): ViewTransform {
  const scale = Math.min(canvasW / imageW, canvasH / imageH) * 0.95;
  return {
    scale,
    offsetX: (canvasW - imageW * scale) / 2,
    offsetY: (canvasH - imageH * scale) / 2,
  };
}

export function insideImage(p: Point, imageW: number, imageH: number): boolean {
  return p.x >= 0 && p.x <= imageW - 1 && p.y >= 0 && p.y <= imageH - 1;
}
