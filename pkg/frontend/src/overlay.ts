/** Pure RGBA compositing: tinted mask overlays, diff outlines, flicker
 * frames. Everything returns plain buffers so it is testable headless and
 * canvas-agnostic; the DOM layer just blits the result. */

import type { DecodedImage, DecodedMask } from "./types";

export type Rgb = [number, number, number];

export const MASK_TINT: Rgb = [46, 204, 113]; // green overlay
export const DIFF_TINT: Rgb = [255, 196, 0]; // yellow outline

/** Base image as RGBA (grayscale replicated across channels). */
export function imageToRgba(image: DecodedImage): Uint8ClampedArray {
  const n = image.width * image.height;
  const out = new Uint8ClampedArray(n * 4);
  for (let i = 0; i < n; i++) {
    const r = image.channels === 1 ? image.pixels[i] : image.pixels[i * 3];
    const g = image.channels === 1 ? image.pixels[i] : image.pixels[i * 3 + 1];
    const b = image.channels === 1 ? image.pixels[i] : image.pixels[i * 3 + 2];
    out[i * 4] = r;
    out[i * 4 + 1] = g;
    out[i * 4 + 2] = b;
    out[i * 4 + 3] = 255;
  }
  return out;
}

/** Alpha-blend a tinted mask over the image; alpha in [0,1] applies only on
 * mask-set pixels, so the composition is pixel-accurate at native size. */
export function composeOverlay(
  image: DecodedImage,
  mask: DecodedMask,
  alpha: number,
  tint: Rgb = MASK_TINT,
): Uint8ClampedArray {
  if (mask.width !== image.width || mask.height !== image.height) {
    throw new Error(
      `mask ${mask.width}x${mask.height} does not match image ${image.width}x${image.height}`,
    );
  }
  const out = imageToRgba(image);
  const a = Math.min(1, Math.max(0, alpha));
  for (let i = 0; i < mask.bits.length; i++) {
    if (!mask.bits[i]) continue;
    out[i * 4] = out[i * 4] * (1 - a) + tint[0] * a;
    out[i * 4 + 1] = out[i * 4 + 1] * (1 - a) + tint[1] * a;
    out[i * 4 + 2] = out[i * 4 + 2] * (1 - a) + tint[2] * a;
  }
  return out;
}

/** Symmetric difference of two masks: 1 where exactly one mask is set. */
export function symmetricDifference(a: DecodedMask, b: DecodedMask): DecodedMask {
  if (a.width !== b.width || a.height !== b.height) {
    throw new Error("mask grids differ");
  }
  const bits = new Uint8Array(a.bits.length);
  for (let i = 0; i < bits.length; i++) bits[i] = a.bits[i] === b.bits[i] ? 0 : 1;
  return { width: a.width, height: a.height, bits };
}

/** Outline of a region: set pixels with a 4-neighbor outside the region
 * (grid edges count as outside). Drawn over changed areas to focus the eye. */
export function outline(mask: DecodedMask): DecodedMask {
  const { width: w, height: h, bits } = mask;
  const out = new Uint8Array(bits.length);
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      const i = y * w + x;
      if (!bits[i]) continue;
      const edge = x === 0 || y === 0 || x === w - 1 || y === h - 1;
      const open =
        edge ||
        !bits[i - 1] ||
        !bits[i + 1] ||
        !bits[i - w] ||
        !bits[i + w];
      out[i] = open ? 1 : 0;
    }
  }
  return { width: w, height: h, bits: out };
}

/** Stamp an outline layer onto an RGBA buffer in place. */
export function paintOutline(
  rgba: Uint8ClampedArray,
  layer: DecodedMask,
  tint: Rgb = DIFF_TINT,
): Uint8ClampedArray {
  for (let i = 0; i < layer.bits.length; i++) {
    if (!layer.bits[i]) continue;
    rgba[i * 4] = tint[0];
    rgba[i * 4 + 1] = tint[1];
    rgba[i * 4 + 2] = tint[2];
  }
  return rgba;
}

/** The two frames flicker mode alternates between (before / after), both
 * carrying the diff outline so attention stays on what changed. */
export function flickerFrames(
  image: DecodedImage,
  before: DecodedMask,
  after: DecodedMask,
  alpha: number,
): { frameA: Uint8ClampedArray; frameB: Uint8ClampedArray; changedPixels: number } {
  const diff = outline(symmetricDifference(before, after));
  const frameA = paintOutline(composeOverlay(image, before, alpha), diff);
  const frameB = paintOutline(composeOverlay(image, after, alpha), diff);
  return { frameA, frameB, changedPixels: countChangedPixels(frameA, frameB) };
}

export function countChangedPixels(a: Uint8ClampedArray, b: Uint8ClampedArray): number {
  let changed = 0;
  for (let i = 0; i < a.length; i += 4) {
    if (a[i] !== b[i] || a[i + 1] !== b[i + 1] || a[i + 2] !== b[i + 2] || a[i + 3] !== b[i + 3]) {
      changed++;
    }
  }
  return changed;
}
