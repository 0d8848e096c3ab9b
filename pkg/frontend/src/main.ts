/** DOM wiring: canvases, buttons, keyboard shortcuts, flicker loop. All
 * judgment logic lives in machine.ts; all pixel math in overlay.ts. */

import { ApiClient } from "./api";
import { ReviewMachine } from "./machine";
import { composeOverlay, flickerFrames, outline, paintOutline, symmetricDifference } from "./overlay";
import { decodeImage, decodeMask } from "./pgm";
import type { Comparison } from "./types";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const client = new ApiClient(window.location.origin, undefined, {
  token: new URLSearchParams(window.location.search).get("token") ?? undefined,
});

const beforeCanvas = $<HTMLCanvasElement>("canvas-before");
const afterCanvas = $<HTMLCanvasElement>("canvas-after");
const flickerCanvas = $<HTMLCanvasElement>("canvas-flicker");
const betterBtn = $<HTMLButtonElement>("btn-better");
const worseBtn = $<HTMLButtonElement>("btn-worse");
const retryBtn = $<HTMLButtonElement>("btn-retry");
const errorCard = $("error-card");
const errorText = $("error-text");
const statusLine = $("status-line");
const phaseLine = $("phase-line");
const alphaSlider = $<HTMLInputElement>("alpha");
const zoomSelect = $<HTMLSelectElement>("zoom");
const modeSelect = $<HTMLSelectElement>("mode");
const autoFlicker = $<HTMLInputElement>("auto-flicker");

interface Frames {
  frameA: Uint8ClampedArray;
  frameB: Uint8ClampedArray;
  width: number;
  height: number;
}

let currentComparison: Comparison | null = null;
let frames: Frames | null = null;
let showingAfter = false;
let flickerTimer: number | null = null;

function blit(canvas: HTMLCanvasElement, rgba: Uint8ClampedArray, w: number, h: number): void {
  canvas.width = w;
  canvas.height = h;
  const zoom = Number(zoomSelect.value);
  canvas.style.width = `${w * zoom}px`;
  canvas.style.height = `${h * zoom}px`;
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("no 2d context");
  const copy = new Uint8ClampedArray(rgba); // fresh ArrayBuffer for ImageData
  ctx.putImageData(new ImageData(copy, w, h), 0, 0);
}

async function renderComparison(cmp: Comparison): Promise<void> {
  currentComparison = cmp;
  const image = decodeImage(cmp.image);
  const before = decodeMask(cmp.mask_before);
  const after = decodeMask(cmp.mask_after);
  const alpha = Number(alphaSlider.value) / 100;
  const diff = outline(symmetricDifference(before, after));
  blit(beforeCanvas, paintOutline(composeOverlay(image, before, alpha), diff),
       image.width, image.height);
  blit(afterCanvas, paintOutline(composeOverlay(image, after, alpha), diff),
       image.width, image.height);
  const flick = flickerFrames(image, before, after, alpha);
  frames = { frameA: flick.frameA, frameB: flick.frameB, width: image.width, height: image.height };
  showingAfter = false;
  drawFlicker();
}

function drawFlicker(): void {
  if (!frames) return;
  blit(flickerCanvas, showingAfter ? frames.frameB : frames.frameA, frames.width, frames.height);
  $("flicker-label").textContent = showingAfter ? "after" : "before";
}

function toggleFlickerFrame(): void {
  showingAfter = !showingAfter;
  drawFlicker();
}

function applyMode(): void {
  const flicker = modeSelect.value === "flicker";
  $("side-by-side").style.display = flicker ? "none" : "flex";
  $("flicker-view").style.display = flicker ? "block" : "none";
  if (flickerTimer !== null) {
    window.clearInterval(flickerTimer);
    flickerTimer = null;
  }
  if (flicker && autoFlicker.checked) {
    flickerTimer = window.setInterval(toggleFlickerFrame, 450);
  }
}

const machine = new ReviewMachine(client, {
  render: renderComparison,
  onPhase: (phase, cmp, detail) => {
    const judgeable = phase === "ready";
    betterBtn.disabled = !judgeable;
    worseBtn.disabled = !judgeable;
    errorCard.style.display = phase === "error" ? "block" : "none";
    if (phase === "error") errorText.textContent = detail ?? "decode failure";
    phaseLine.textContent =
      phase === "idle"
        ? "waiting for the next comparison…"
        : phase === "rendering"
          ? "rendering…"
          : phase === "ready"
            ? `judge: ${cmp?.image_id} (round ${cmp?.round}, step ${cmp?.step})`
            : phase === "submitting"
              ? "submitting…"
              : phase;
  },
});

betterBtn.addEventListener("click", () => machine.submit("better"));
worseBtn.addEventListener("click", () => machine.submit("worse"));
retryBtn.addEventListener("click", () => machine.retry());
alphaSlider.addEventListener("input", () => {
  if (currentComparison) void renderComparison(currentComparison);
});
zoomSelect.addEventListener("change", () => {
  if (currentComparison) void renderComparison(currentComparison);
});
modeSelect.addEventListener("change", applyMode);
autoFlicker.addEventListener("change", applyMode);

document.addEventListener("keydown", (ev) => {
  if (ev.target instanceof HTMLInputElement || ev.target instanceof HTMLSelectElement) return;
  if (ev.key === "b" || ev.key === "B") machine.submit("better");
  else if (ev.key === "w" || ev.key === "W") machine.submit("worse");
  else if (ev.key === " ") {
    ev.preventDefault();
    if (modeSelect.value !== "flicker") {
      modeSelect.value = "flicker";
      applyMode();
    }
    toggleFlickerFrame();
  }
});

async function pollStatus(): Promise<void> {
  try {
    const s = await client.status();
    statusLine.textContent =
      `run ${s.run_id} — round ${s.round}/${s.total_rounds}` +
      (s.image_id ? ` — ${s.image_id}` : "") +
      ` — ${s.verdicts_recorded} verdicts` +
      (s.finished ? " — finished" : "");
  } catch {
    statusLine.textContent = "service unreachable";
  }
}

applyMode();
void pollStatus();
window.setInterval(() => void pollStatus(), 3000);
void machine.run();
