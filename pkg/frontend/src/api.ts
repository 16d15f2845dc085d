/** Typed client for the extraction service. */

import type { Point } from "./transform.js";
import type { ParamSnapshot } from "./state.js";

export interface SessionInfo {
  session_id: string;
  width: number;
  height: number;
  config_hash: string;
}

export interface ExtractResponse {
  path: Array<[number, number]>;
  energy: number;
  action_value: number;
  refined: boolean;
  steps: number;
  high_energy: boolean;
  warnings: string[];
  config_hash: string;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function expectJson(resp: Response): Promise<any> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = await resp.json();
      if (body && body.detail) detail = String(body.detail);
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(resp.status, detail);
  }
  return resp.json();
}

export class Client {
  constructor(public base: string = "") {}

  async createSession(png: Blob): Promise<SessionInfo> {
    const resp = await fetch(`${this.base}/sessions`, {
      method: "POST",
      body: png,
      headers: { "content-type": "image/png" },
    });
    return expectJson(resp);
  }

  layerUrl(sessionId: string, layer: "vesselness" | "feature", hash: string): string {
    return `${this.base}/sessions/${sessionId}/${layer}?v=${hash}`;
  }

  async extract(
    sessionId: string,
    source: Point,
    end: Point,
    params?: Partial<ParamSnapshot>,
  ): Promise<ExtractResponse> {
    const body: any = { source: [source.x, source.y], end: [end.x, end.y] };
    if (params) {
      const flat: any = {};
      if (params.alpha !== undefined && params.alpha !== null) flat.alpha = params.alpha;
      if (params.beta !== undefined) flat.beta = params.beta;
      if (params.lambda !== undefined && params.lambda !== null) flat.lambda = params.lambda;
      if (params.refine !== undefined) flat.refine = params.refine;
      if (Object.keys(flat).length > 0) body.params = flat;
    }
    const resp = await fetch(`${this.base}/sessions/${sessionId}/extract`, {
      method: "POST",
      body: JSON.stringify(body),
      headers: { "content-type": "application/json" },
    });
    return expectJson(resp);
  }

  async updateParams(sessionId: string, params: Record<string, unknown>): Promise<{ config_hash: string }> {
    const resp = await fetch(`${this.base}/sessions/${sessionId}/params`, {
      method: "POST",
      body: JSON.stringify(params),
      headers: { "content-type": "application/json" },
    });
    return expectJson(resp);
  }

  async deleteSession(sessionId: string): Promise<void> {
    await fetch(`${this.base}/sessions/${sessionId}`, { method: "DELETE" });
  }
}
