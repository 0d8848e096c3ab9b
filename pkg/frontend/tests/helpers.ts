/** Test fixtures: PGM payload builders and a mock feedback service that can
 * inject duplicated submissions (a flaky transport replaying POSTs). */

import type { Comparison, Verdict } from "../src/types";

export function bytesToBase64(bytes: Uint8Array): string {
  return Buffer.from(bytes).toString("base64");
}

export function encodePgm(width: number, height: number, pixels: Uint8Array): string {
  const header = Buffer.from(`P5\n${width} ${height}\n255\n`, "ascii");
  return bytesToBase64(Buffer.concat([header, Buffer.from(pixels)]));
}

export function encodeMaskPgm(width: number, height: number, bits: Uint8Array): string {
  const pixels = new Uint8Array(bits.length);
  for (let i = 0; i < bits.length; i++) pixels[i] = bits[i] ? 255 : 0;
  return encodePgm(width, height, pixels);
}

export function squareBits(size: number, r0: number, c0: number, r1: number, c1: number): Uint8Array {
  const bits = new Uint8Array(size * size);
  for (let r = r0; r < r1; r++) for (let c = c0; c < c1; c++) bits[r * size + c] = 1;
  return bits;
}

export function makeComparison(
  id: string,
  size = 8,
  before?: Uint8Array,
  after?: Uint8Array,
): Comparison {
  const gradient = new Uint8Array(size * size);
  for (let i = 0; i < gradient.length; i++) gradient[i] = (i * 7) % 256;
  return {
    comparison_id: id,
    image_id: `img_${id}`,
    image: encodePgm(size, size, gradient),
    mask_before: encodeMaskPgm(size, size, before ?? squareBits(size, 0, 0, 4, 4)),
    mask_after: encodeMaskPgm(size, size, after ?? squareBits(size, 0, 0, 4, 6)),
    round: 1,
    step: 1,
  };
}

interface MockOptions {
  /** replay every POST twice, as a retrying transport would */
  duplicateSubmissions?: boolean;
}

export class MockService {
  pending: Comparison | null = null;
  private index = 0;
  readonly effective = new Map<string, Verdict>();
  rawSubmissions = 0;
  nextCalls = 0;

  constructor(
    readonly comparisons: Comparison[],
    private readonly options: MockOptions = {},
  ) {}

  private record(id: string, verdict: Verdict): { code: number; reply: unknown } {
    this.rawSubmissions++;
    const existing = this.effective.get(id);
    if (existing) {
      return { code: 200, reply: { comparison_id: id, verdict: existing, duplicate: true } };
    }
    if (!this.pending || this.pending.comparison_id !== id) {
      return { code: 404, reply: { error: `no pending comparison ${id}` } };
    }
    this.effective.set(id, verdict);
    this.pending = null;
    return { code: 200, reply: { comparison_id: id, verdict, duplicate: false } };
  }

  fetch = async (input: string, init?: RequestInit): Promise<Response> => {
    await new Promise((r) => setTimeout(r, 0)); // let timers breathe in tests
    const url = new URL(input, "http://mock");
    if (url.pathname === "/api/v1/session/next") {
      this.nextCalls++;
      if (!this.pending && this.index < this.comparisons.length) {
        this.pending = this.comparisons[this.index++];
      }
      if (!this.pending) return jsonResponse({ status: "idle" });
      return jsonResponse({ status: "awaiting_verdict", ...this.pending });
    }
    if (url.pathname === "/api/v1/session/verdict") {
      const body = JSON.parse(String(init?.body));
      const first = this.record(body.comparison_id, body.verdict);
      if (this.options.duplicateSubmissions) {
        this.record(body.comparison_id, body.verdict);
      }
      return jsonResponse(first.reply, first.code);
    }
    if (url.pathname === "/api/v1/run/status") {
      return jsonResponse({
        run_id: "mock", session_id: "s", awaiting_verdict: this.pending !== null,
        verdicts_recorded: this.effective.size, round: 1, image_id: null,
        total_rounds: 1, total_images: this.comparisons.length,
        finished: this.index >= this.comparisons.length && !this.pending,
      });
    }
    return jsonResponse({ error: "not found" }, 404);
  };
}

export function jsonResponse(doc: unknown, status = 200): Response {
  return new Response(JSON.stringify(doc), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export async function until(cond: () => boolean, timeoutMs = 5000): Promise<void> {
  const start = Date.now();
  while (!cond()) {
    if (Date.now() - start > timeoutMs) throw new Error("condition not reached in time");
    await new Promise((r) => setTimeout(r, 2));
  }
}
