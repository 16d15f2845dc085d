import { describe, expect, it } from "vitest";
import {
  extractionFailed,
  extractionSucceeded,
  initialState,
  legendEntries,
  placePoint,
  resetChain,
  snapshotKey,
  updateParams,
  type ViewState,
} from "../src/state.js";

function sessionState(): ViewState {
  const s = initialState();
  s.sessionId = "abc";
  s.imageW = 96;
  s.imageH = 96;
  return s;
}

describe("point placement", () => {
  it("two clicks issue exactly one extraction", () => {
    let s = sessionState();
    const first = placePoint(s, { x: 4, y: 50 }, true);
    s = first.state;
    expect(first.start).toBeNull();
    expect(s.pendingSource).toEqual({ x: 4, y: 50 });
    const second = placePoint(s, { x: 90, y: 52 }, true);
    expect(second.start).not.toBeNull();
    expect(second.start!.source).toEqual({ x: 4, y: 50 });
    expect(second.start!.end).toEqual({ x: 90, y: 52 });
    expect(second.state.pendingSource).toBeNull();
    expect(second.state.inFlight).toBe(second.start);
  });

  it("clicks outside the image are ignored with a hint", () => {
    const s = sessionState();
    const out = placePoint(s, { x: -3, y: 10 }, false);
    expect(out.start).toBeNull();
    expect(out.state.hint).toMatch(/inside/);
    expect(out.state.pendingSource).toBeNull();
  });

  it("third click chains from the previous end exactly", () => {
    let s = sessionState();
    s = placePoint(s, { x: 1, y: 1 }, true).state;
    const second = placePoint(s, { x: 10, y: 10 }, true);
    s = extractionSucceeded(second.state, second.start!, [{ x: 1, y: 1 }, { x: 10, y: 10 }], true).state;
    const third = placePoint(s, { x: 20, y: 5 }, true);
    expect(third.start).not.toBeNull();
    expect(third.start!.source).toEqual({ x: 10, y: 10 });
    expect(third.start!.end).toEqual({ x: 20, y: 5 });
  });

  it("reset drops the chain so the next click places a source", () => {
    let s = sessionState();
    s = placePoint(s, { x: 1, y: 1 }, true).state;
    const second = placePoint(s, { x: 10, y: 10 }, true);
    s = extractionSucceeded(second.state, second.start!, [], true).state;
    s = resetChain(s);
    const fresh = placePoint(s, { x: 30, y: 30 }, true);
    expect(fresh.start).toBeNull();
    expect(fresh.state.pendingSource).toEqual({ x: 30, y: 30 });
  });

  it("requires a session", () => {
    const s = initialState();
    const r = placePoint(s, { x: 1, y: 1 }, true);
    expect(r.start).toBeNull();
    expect(r.state.hint).toMatch(/image/);
  });
});

describe("in-flight queueing", () => {
  it("clicks during an extraction queue and dispatch in order", () => {
    let s = sessionState();
    s = placePoint(s, { x: 0, y: 0 }, true).state;
    const first = placePoint(s, { x: 10, y: 0 }, true);
    s = first.state;
    // two more clicks while busy: each chains and queues
    const q1 = placePoint(s, { x: 20, y: 0 }, true);
    s = q1.state;
    expect(q1.start).toBeNull();
    const q2 = placePoint(s, { x: 30, y: 0 }, true);
    s = q2.state;
    expect(q2.start).toBeNull();
    expect(s.queue.length).toBe(2);
    // completion dispatches the first queued request
    const done1 = extractionSucceeded(s, first.start!, [], false);
    s = done1.state;
    expect(done1.start!.source).toEqual({ x: 10, y: 0 });
    expect(done1.start!.end).toEqual({ x: 20, y: 0 });
    expect(s.queue.length).toBe(1);
    const done2 = extractionSucceeded(s, done1.start!, [], false);
    expect(done2.start!.end).toEqual({ x: 30, y: 0 });
    expect(done2.state.queue.length).toBe(0);
  });

  it("failures surface a toast and still drain the queue", () => {
    let s = sessionState();
    s = placePoint(s, { x: 0, y: 0 }, true).state;
    const first = placePoint(s, { x: 10, y: 0 }, true);
    s = placePoint(first.state, { x: 20, y: 0 }, true).state;
    const failed = extractionFailed(s, first.start!, "source point outside");
    expect(failed.state.toast).toMatch(/outside/);
    expect(failed.start).not.toBeNull();
    expect(failed.state.paths.length).toBe(0);
  });
});

describe("parameter snapshots", () => {
  it("edits color future paths separately, existing paths keep theirs", () => {
    let s = sessionState();
    s = placePoint(s, { x: 0, y: 0 }, true).state;
    const r1 = placePoint(s, { x: 10, y: 0 }, true);
    s = extractionSucceeded(r1.state, r1.start!, [], true).state;
    const colorA = s.paths[0].color;

    s = updateParams(s, { beta: 500 });
    const r2 = placePoint(s, { x: 20, y: 0 }, true);
    expect(r2.start!.snapshot.beta).toBe(500);
    s = extractionSucceeded(r2.state, r2.start!, [], true).state;
    const colorB = s.paths[1].color;
    expect(colorB).not.toBe(colorA);
    expect(s.paths[0].color).toBe(colorA);
    expect(snapshotKey(s.paths[0].snapshot)).not.toBe(snapshotKey(s.paths[1].snapshot));

    const legend = legendEntries(s);
    expect(legend.length).toBe(2);
    expect(legend[0].color).toBe(colorA);
    expect(legend[1].color).toBe(colorB);
  });

  it("same snapshot reuses its color", () => {
    let s = sessionState();
    s = placePoint(s, { x: 0, y: 0 }, true).state;
    const r1 = placePoint(s, { x: 10, y: 0 }, true);
    s = extractionSucceeded(r1.state, r1.start!, [], true).state;
    const r2 = placePoint(s, { x: 20, y: 0 }, true);
    s = extractionSucceeded(r2.state, r2.start!, [], true).state;
    expect(s.paths[1].color).toBe(s.paths[0].color);
    expect(legendEntries(s).length).toBe(1);
  });
});
