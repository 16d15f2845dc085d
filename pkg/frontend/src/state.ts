/** View state and the point-placement state machine.
 *
 * First click places the source, the second places the end and issues
 * the extraction; afterwards every click chains a new extraction whose
 * source is the previous end.  At most one extraction is in flight;
 * requests arriving meanwhile are queued in click order.  Every server
 * round trip lands either in the state (a path) or in `toast`.
 */

import type { Point, ViewTransform } from "./transform.js";
import { identityTransform } from "./transform.js";

export type Layer = "image" | "vesselness" | "feature";

export interface ParamSnapshot {
  alpha: number | null;
  beta: number;
  lambda: number | null;
  refine: boolean;
}

export interface ExtractionRequest {
  source: Point;
  end: Point;
  snapshot: ParamSnapshot;
}

export interface PathRecord {
  id: number;
  points: Point[];
  source: Point;
  end: Point;
  snapshot: ParamSnapshot;
  color: string;
  refined: boolean;
}

export interface ViewState {
  sessionId: string | null;
  imageW: number;
  imageH: number;
  layer: Layer;
  transform: ViewTransform;
  params: ParamSnapshot;
  pendingSource: Point | null;
  lastEnd: Point | null;
  paths: PathRecord[];
  inFlight: ExtractionRequest | null;
  queue: ExtractionRequest[];
  toast: string | null;
  hint: string | null;
  nextPathId: number;
}

export const PALETTE = [
  "#22d3ee",
  "#f59e0b",
  "#a3e635",
  "#e879f9",
  "#f87171",
  "#60a5fa",
  "#fbbf24",
  "#34d399",
];

export function initialState(): ViewState {
  return {
    sessionId: null,
    imageW: 0,
    imageH: 0,
    layer: "image",
    transform: identityTransform(),
    params: { alpha: null, beta: 2000, lambda: null, refine: true },
    pendingSource: null,
    lastEnd: null,
    paths: [],
    inFlight: null,
    queue: [],
    toast: null,
    hint: null,
    nextPathId: 1,
  };
}

export function snapshotKey(s: ParamSnapshot): string {
  return JSON.stringify([s.alpha, s.beta, s.lambda, s.refine]);
}

/** Stable color per distinct parameter snapshot, in order of first use. */
export function colorForSnapshot(state: ViewState, snapshot: ParamSnapshot): string {
  const seen: string[] = [];
  for (const p of state.paths) {
    const key = snapshotKey(p.snapshot);
    if (!seen.includes(key)) seen.push(key);
  }
  const key = snapshotKey(snapshot);
  const idx = seen.includes(key) ? seen.indexOf(key) : seen.length;
  return PALETTE[idx % PALETTE.length];
}

export interface PlaceResult {
  state: ViewState;
  /** Request to start immediately (none when queued or still placing). */
  start: ExtractionRequest | null;
}

/** Handle a click already converted to pixel coordinates. */
export function placePoint(state: ViewState, pixel: Point, inside: boolean): PlaceResult {
  if (!state.sessionId) {
    return { state: { ...state, hint: "load an image first" }, start: null };
  }
  if (!inside) {
    return { state: { ...state, hint: "click inside the image" }, start: null };
  }
  const cleared = { ...state, hint: null };
  if (cleared.pendingSource === null && cleared.lastEnd === null) {
    return { state: { ...cleared, pendingSource: pixel }, start: null };
  }
  const source = cleared.pendingSource ?? cleared.lastEnd!;
  const request: ExtractionRequest = {
    source,
    end: pixel,
    snapshot: { ...cleared.params },
  };
  const next: ViewState = {
    ...cleared,
    pendingSource: null,
    lastEnd: pixel,
  };
  if (next.inFlight) {
    return { state: { ...next, queue: [...next.queue, request] }, start: null };
  }
  return { state: { ...next, inFlight: request }, start: request };
}

/** Drop the chain: the next click places a fresh source. */
export function resetChain(state: ViewState): ViewState {
  return { ...state, pendingSource: null, lastEnd: null, hint: null };
}

export interface CompletionResult {
  state: ViewState;
  /** Next queued request to issue, if any. */
  start: ExtractionRequest | null;
}

export function extractionSucceeded(
  state: ViewState,
  request: ExtractionRequest,
  points: Point[],
  refined: boolean,
): CompletionResult {
  const record: PathRecord = {
    id: state.nextPathId,
    points,
    source: request.source,
    end: request.end,
    snapshot: request.snapshot,
    color: colorForSnapshot(state, request.snapshot),
    refined,
  };
  const next: ViewState = {
    ...state,
    paths: [...state.paths, record],
    nextPathId: state.nextPathId + 1,
    inFlight: null,
    toast: null,
  };
  return dispatchQueued(next);
}

export function extractionFailed(
  state: ViewState,
  _request: ExtractionRequest,
  message: string,
): CompletionResult {
  const next: ViewState = { ...state, inFlight: null, toast: message };
  return dispatchQueued(next);
}

function dispatchQueued(state: ViewState): CompletionResult {
  if (state.queue.length === 0) {
    return { state, start: null };
  }
  const [head, ...rest] = state.queue;
  return { state: { ...state, queue: rest, inFlight: head }, start: head };
}

/** Parameter edits apply to future extractions only; existing paths
 * keep their snapshots. */
export function updateParams(state: ViewState, params: Partial<ParamSnapshot>): ViewState {
  return { ...state, params: { ...state.params, ...params } };
}

export function setLayer(state: ViewState, layer: Layer): ViewState {
  return { ...state, layer };
}

export function clearToast(state: ViewState): ViewState {
  return { ...state, toast: null };
}

/** Legend entries: one per distinct snapshot, in first-use order. */
export function legendEntries(state: ViewState): Array<{ label: string; color: string }> {
  const out: Array<{ label: string; color: string }> = [];
  const seen = new Set<string>();
  for (const p of state.paths) {
    const key = snapshotKey(p.snapshot);
    if (seen.has(key)) continue;
    seen.add(key);
    const s = p.snapshot;
    const label =
      `a=${s.alpha ?? "auto"} b=${s.beta} l=${s.lambda ?? "auto"}` +
      (s.refine ? " refined" : "");
    out.push({ label, color: p.color });
  }
  return out;
}
