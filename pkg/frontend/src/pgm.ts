/** Binary PGM/PPM decoding for the base64 payloads served by the API. */

import type { DecodedImage, DecodedMask } from "./types";

export class DecodeError extends Error {}

export function base64ToBytes(b64: string): Uint8Array {
  if (typeof atob === "function") {
    const bin = atob(b64);
    const out = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
    return out;
  }
  // node (tests)
  const nodeBuffer = (globalThis as { Buffer?: { from(s: string, e: string): Uint8Array } }).Buffer;
  if (!nodeBuffer) throw new DecodeError("no base64 decoder available");
  return new Uint8Array(nodeBuffer.from(b64, "base64"));
}

interface Header {
  magic: "P5" | "P6";
  width: number;
  height: number;
  offset: number;
}

function parseHeader(bytes: Uint8Array): Header {
  const magic = String.fromCharCode(bytes[0] ?? 0, bytes[1] ?? 0);
  if (magic !== "P5" && magic !== "P6") {
    throw new DecodeError(`not a binary PGM/PPM payload (magic ${JSON.stringify(magic)})`);
  }
  let pos = 2;
  const tokens: number[] = [];
  while (tokens.length < 3) {
    if (pos >= bytes.length) throw new DecodeError("truncated netpbm header");
    const c = bytes[pos];
    if (c === 0x23) {
      // '#' comment runs to end of line
      while (pos < bytes.length && bytes[pos] !== 0x0a && bytes[pos] !== 0x0d) pos++;
    } else if (c === 0x20 || c === 0x09 || c === 0x0a || c === 0x0d) {
      pos++;
    } else {
      let start = pos;
      while (pos < bytes.length && !isSpace(bytes[pos])) pos++;
      const token = Number(asciiSlice(bytes, start, pos));
      if (!Number.isInteger(token)) throw new DecodeError("bad netpbm header token");
      tokens.push(token);
    }
  }
  pos++; // single whitespace byte ends the header
  const [width, height, maxval] = tokens;
  if (maxval !== 255) throw new DecodeError(`unsupported maxval ${maxval}`);
  if (width < 1 || height < 1) throw new DecodeError(`bad dimensions ${width}x${height}`);
  return { magic, width, height, offset: pos };
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d;
}

function asciiSlice(bytes: Uint8Array, start: number, end: number): string {
  let s = "";
  for (let i = start; i < end; i++) s += String.fromCharCode(bytes[i]);
  return s;
}

export function decodeImage(b64: string): DecodedImage {
  const bytes = base64ToBytes(b64);
  const { magic, width, height, offset } = parseHeader(bytes);
  const channels = magic === "P5" ? 1 : 3;
  const count = width * height * channels;
  if (bytes.length !== offset + count) {
    throw new DecodeError(`pixel payload is ${bytes.length - offset} bytes, expected ${count}`);
  }
  return { width, height, channels: channels as 1 | 3, pixels: bytes.slice(offset) };
}

export function decodeMask(b64: string): DecodedMask {
  const img = decodeImage(b64);
  if (img.channels !== 1) throw new DecodeError("masks must be single-channel PGM");
  const bits = new Uint8Array(img.pixels.length);
  for (let i = 0; i < img.pixels.length; i++) {
    const v = img.pixels[i];
    if (v !== 0 && v !== 255) throw new DecodeError(`mask byte ${v} is neither 0 nor 255`);
    bits[i] = v === 255 ? 1 : 0;
  }
  return { width: img.width, height: img.height, bits };
}
