/** Wire types for the feedback service API (v1). */

export interface Comparison {
  comparison_id: string;
  image_id: string;
  /** base64 binary PGM (P5) or PPM (P6) */
  image: string;
  /** base64 binary PGM, values 0/255 */
  mask_before: string;
  mask_after: string;
  round: number;
  step: number;
}

export interface NextReply extends Partial<Comparison> {
  status: "idle" | "awaiting_verdict";
}

export interface VerdictAck {
  comparison_id: string;
  verdict: Verdict;
  duplicate: boolean;
}

export interface RunStatus {
  run_id: string;
  session_id: string;
  awaiting_verdict: boolean;
  verdicts_recorded: number;
  round: number;
  image_id: string | null;
  total_rounds: number;
  total_images: number;
  finished: boolean;
}

export type Verdict = "better" | "worse";

export interface DecodedImage {
  width: number;
  height: number;
  channels: 1 | 3;
  /** row-major, channels interleaved for RGB */
  pixels: Uint8Array;
}

/** Mask bits, 0 or 1 per pixel. */
export interface DecodedMask {
  width: number;
  height: number;
  bits: Uint8Array;
}
