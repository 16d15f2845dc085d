/** Overlay rendering as a pure draw-op list plus a canvas interpreter.
 *
 * Draw order is deterministic: base layer, then extracted paths in
 * creation order, then the point markers (source blue, end green).
 */

import type { Point, ViewTransform } from "./transform.js";
import { imageToCanvas } from "./transform.js";
import type { ViewState } from "./state.js";

export type DrawOp =
  | { kind: "layer"; layer: "image" | "vesselness" | "feature" }
  | { kind: "path"; points: Point[]; color: string; id: number }
  | { kind: "marker"; at: Point; color: "blue" | "green" };

export function buildDrawOps(state: ViewState): DrawOp[] {
  const ops: DrawOp[] = [{ kind: "layer", layer: state.layer }];
  for (const p of state.paths) {
    ops.push({ kind: "path", points: p.points, color: p.color, id: p.id });
  }
  if (state.pendingSource) {
    ops.push({ kind: "marker", at: state.pendingSource, color: "blue" });
  }
  for (const p of state.paths) {
    ops.push({ kind: "marker", at: p.source, color: "blue" });
    ops.push({ kind: "marker", at: p.end, color: "green" });
  }
  if (state.lastEnd && !state.pendingSource) {
    ops.push({ kind: "marker", at: state.lastEnd, color: "blue" });
  }
  return ops;
}

export interface LayerImages {
  image: CanvasImageSource | null;
  vesselness: CanvasImageSource | null;
  feature: CanvasImageSource | null;
}

export function renderOps(
  ctx: CanvasRenderingContext2D,
  ops: DrawOp[],
  t: ViewTransform,
  imageW: number,
  imageH: number,
  layers: LayerImages,
): void {
  ctx.save();
  ctx.fillStyle = "#111418";
  ctx.fillRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  ctx.imageSmoothingEnabled = t.scale < 3;
  for (const op of ops) {
    if (op.kind === "layer") {
      const img = layers[op.layer] ?? layers.image;
      if (img) {
        ctx.drawImage(img, t.offsetX, t.offsetY, imageW * t.scale, imageH * t.scale);
      }
    } else if (op.kind === "path") {
      if (op.points.length < 2) continue;
      ctx.beginPath();
      const first = imageToCanvas(t, op.points[0]);
      ctx.moveTo(first.x, first.y);
      for (const p of op.points.slice(1)) {
        const c = imageToCanvas(t, p);
        ctx.lineTo(c.x, c.y);
      }
      ctx.strokeStyle = op.color;
      ctx.lineWidth = 1.6;
      ctx.stroke();
    } else {
      const c = imageToCanvas(t, op.at);
      ctx.beginPath();
      ctx.arc(c.x, c.y, 4, 0, 2 * Math.PI);
      ctx.fillStyle = op.color === "blue" ? "#3b82f6" : "#22c55e";
      ctx.fill();
      ctx.strokeStyle = "#ffffff";
      ctx.lineWidth = 1;
      ctx.stroke();
    }
  }
  ctx.restore();
}
