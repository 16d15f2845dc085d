/** Wiring: canvas events, layer toggle, parameter panel, spinner, toasts. */

import { Client, ApiError } from "./api.js";
import { buildDrawOps, renderOps, type LayerImages } from "./overlay.js";
import {
  extractionFailed,
  extractionSucceeded,
  initialState,
  legendEntries,
  placePoint,
  resetChain,
  setLayer,
  updateParams,
  type ExtractionRequest,
  type Layer,
  type ViewState,
} from "./state.js";
import {
  canvasToImage,
  fitImage,
  insideImage,
  panBy,
  pixelFromCanvas,
  zoomAt,
} from "./transform.js";

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const fileInput = document.getElementById("file") as HTMLInputElement;
const layerSelect = document.getElementById("layer") as HTMLSelectElement;
const spinner = document.getElementById("spinner")!;
const toastBox = document.getElementById("toast")!;
const hintBox = document.getElementById("hint")!;
const legendBox = document.getElementById("legend")!;
const statusBox = document.getElementById("status")!;
const alphaInput = document.getElementById("alpha") as HTMLInputElement;
const betaInput = document.getElementById("beta") as HTMLInputElement;
const lambdaInput = document.getElementById("lambda") as HTMLInputElement;
const refineInput = document.getElementById("refine") as HTMLInputElement;
const resetButton = document.getElementById("reset-chain") as HTMLButtonElement;

const client = new Client("");
let state: ViewState = initialState();
const layers: LayerImages = { image: null, vesselness: null, feature: null };

function resizeCanvas(): void {
  canvas.width = canvas.clientWidth;
  canvas.height = canvas.clientHeight;
  render();
}

function render(): void {
  renderOps(ctx, buildDrawOps(state), state.transform, state.imageW, state.imageH, layers);
  spinner.style.display = state.inFlight ? "block" : "none";
  toastBox.textContent = state.toast ?? "";
  toastBox.style.display = state.toast ? "block" : "none";
  hintBox.textContent = state.hint ?? "";
  legendBox.innerHTML = "";
  for (const entry of legendEntries(state)) {
    const div = document.createElement("div");
    const chip = document.createElement("span");
    chip.className = "chip";
    chip.style.background = entry.color;
    div.appendChild(chip);
    div.appendChild(document.createTextNode(entry.label));
    legendBox.appendChild(div);
  }
  if (state.queue.length > 0) {
    statusBox.textContent = `${state.queue.length} click(s) queued`;
  } else if (state.inFlight) {
    statusBox.textContent = "extracting...";
  } else {
    statusBox.textContent = state.sessionId ? "ready" : "no image";
  }
}

function currentParams() {
  return {
    alpha: alphaInput.value === "" ? null : Number(alphaInput.value),
    beta: betaInput.value === "" ? 2000 : Number(betaInput.value),
    lambda: lambdaInput.value === "" ? null : Number(lambdaInput.value),
    refine: refineInput.checked,
  };
}

async function issue(request: ExtractionRequest): Promise<void> {
  try {
    const t0 = performance.now();
    const resp = await client.extract(state.sessionId!, request.source, request.end, {
      alpha: request.snapshot.alpha,
      beta: request.snapshot.beta,
      lambda: request.snapshot.lambda,
      refine: request.snapshot.refine,
    });
    const ms = performance.now() - t0;
    const points = resp.path.map(([x, y]) => ({ x, y }));
    const done = extractionSucceeded(state, request, points, resp.refined);
    state = done.state;
    statusBox.textContent = `path of ${points.length} pts in ${ms.toFixed(0)} ms`;
    render();
    if (done.start) void issue(done.start);
  } catch (err) {
    const message = err instanceof ApiError ? err.message : String(err);
    const done = extractionFailed(state, request, message);
    state = done.state;
    render();
    if (done.start) void issue(done.start);
  }
}

fileInput.addEventListener("change", async () => {
  const file = fileInput.files?.[0];
  if (!file) return;
  try {
    const info = await client.createSession(file);
    const bitmap = await createImageBitmap(file);
    layers.image = bitmap;
    layers.vesselness = null;
    layers.feature = null;
    state = initialState();
    state.sessionId = info.session_id;
    state.imageW = info.width;
    state.imageH = info.height;
    state.params = currentParams();
    state.transform = fitImage(info.width, info.height, canvas.width, canvas.height);
    loadLayer("vesselness", info.config_hash);
    loadLayer("feature", info.config_hash);
    render();
  } catch (err) {
    state = { ...state, toast: err instanceof ApiError ? err.message : String(err) };
    render();
  }
});

function loadLayer(layer: "vesselness" | "feature", hash: string): void {
  if (!state.sessionId) return;
  const img = new Image();
  img.onload = () => {
    layers[layer] = img;
    render();
  };
  img.src = client.layerUrl(state.sessionId, layer, hash);
}

layerSelect.addEventListener("change", () => {
  state = setLayer(state, layerSelect.value as Layer);
  render();
});

for (const input of [alphaInput, betaInput, lambdaInput, refineInput]) {
  input.addEventListener("change", () => {
    state = updateParams(state, currentParams());
  });
}

resetButton.addEventListener("click", () => {
  state = resetChain(state);
  render();
});

// Click places points; drag pans; wheel zooms around the cursor.
let downAt: { x: number; y: number } | null = null;
let moved = false;

canvas.addEventListener("pointerdown", (ev) => {
  downAt = { x: ev.offsetX, y: ev.offsetY };
  moved = false;
});

canvas.addEventListener("pointermove", (ev) => {
  if (!downAt) return;
  const dx = ev.offsetX - downAt.x;
  const dy = ev.offsetY - downAt.y;
  if (moved || Math.hypot(dx, dy) > 3) {
    moved = true;
    state = { ...state, transform: panBy(state.transform, dx, dy) };
    downAt = { x: ev.offsetX, y: ev.offsetY };
    render();
  }
});

canvas.addEventListener("pointerup", (ev) => {
  const wasClick = downAt && !moved;
  downAt = null;
  if (!wasClick) return;
  const pos = { x: ev.offsetX, y: ev.offsetY };
  const pixel = pixelFromCanvas(state.transform, pos);
  const imgPt = canvasToImage(state.transform, pos);
  const inside = insideImage(imgPt, state.imageW, state.imageH);
  const placed = placePoint(state, pixel, inside);
  state = placed.state;
  render();
  if (placed.start) void issue(placed.start);
});

canvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  const factor = ev.deltaY < 0 ? 1.15 : 1 / 1.15;
  state = {
    ...state,
    transform: zoomAt(state.transform, { x: ev.offsetX, y: ev.offsetY }, factor),
  };
  render();
});

window.addEventListener("resize", resizeCanvas);
resizeCanvas();
