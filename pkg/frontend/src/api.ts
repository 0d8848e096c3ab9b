/** API client: long-polls comparisons and submits verdicts with retry.
 * A submission is idempotent by comparison_id, so retrying after a network
 * failure (or a duplicated transport) records exactly one verdict. */

import type { NextReply, RunStatus, Verdict, VerdictAck } from "./types";

export type FetchFn = (input: string, init?: RequestInit) => Promise<Response>;

export interface ClientOptions {
  token?: string;
  /** backoff schedule for failed verdict submissions, ms */
  retryDelays?: number[];
  sleep?: (ms: number) => Promise<void>;
}

const DEFAULT_RETRIES = [250, 500, 1000, 2000, 4000];

export class ApiClient {
  private readonly fetchFn: FetchFn;
  private readonly retryDelays: number[];
  private readonly sleep: (ms: number) => Promise<void>;

  constructor(
    readonly baseUrl: string,
    fetchFn?: FetchFn,
    private readonly options: ClientOptions = {},
  ) {
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
    this.retryDelays = options.retryDelays ?? DEFAULT_RETRIES;
    this.sleep = options.sleep ?? ((ms) => new Promise((r) => setTimeout(r, ms)));
  }

  private headers(): Record<string, string> {
    const h: Record<string, string> = { "Content-Type": "application/json" };
    if (this.options.token) h["Authorization"] = `Bearer ${this.options.token}`;
    return h;
  }

  async status(): Promise<RunStatus> {
    const res = await this.fetchFn(`${this.baseUrl}/api/v1/run/status`, {
      headers: this.headers(),
    });
    if (!res.ok) throw new Error(`status endpoint returned ${res.status}`);
    return (await res.json()) as RunStatus;
  }

  /** One long-poll; resolves to a comparison or null on idle. */
  async next(waitSeconds: number, sessionId?: string): Promise<NextReply | null> {
    const params = new URLSearchParams({ wait: String(waitSeconds) });
    if (sessionId) params.set("session", sessionId);
    const res = await this.fetchFn(`${this.baseUrl}/api/v1/session/next?${params}`, {
      headers: this.headers(),
    });
    if (!res.ok) throw new Error(`next endpoint returned ${res.status}`);
    const reply = (await res.json()) as NextReply;
    return reply.status === "awaiting_verdict" ? reply : null;
  }

  /** Submit with backoff; safe to call again after failures. */
  async submitVerdict(comparisonId: string, verdict: Verdict): Promise<VerdictAck> {
    let lastError: unknown = null;
    for (let attempt = 0; attempt <= this.retryDelays.length; attempt++) {
      try {
        const res = await this.fetchFn(`${this.baseUrl}/api/v1/session/verdict`, {
          method: "POST",
          headers: this.headers(),
          body: JSON.stringify({ comparison_id: comparisonId, verdict }),
        });
        if (res.status === 404) throw new SubmissionRejected(`unknown comparison ${comparisonId}`);
        if (!res.ok) throw new Error(`verdict endpoint returned ${res.status}`);
        return (await res.json()) as VerdictAck;
      } catch (err) {
        if (err instanceof SubmissionRejected) throw err;
        lastError = err;
        if (attempt < this.retryDelays.length) await this.sleep(this.retryDelays[attempt]);
      }
    }
    throw new Error(`verdict submission failed after retries: ${lastError}`);
  }
}

export class SubmissionRejected extends Error {}
