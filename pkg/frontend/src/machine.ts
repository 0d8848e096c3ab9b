/** Review session state machine, kept DOM-free so the full loop is testable
 * headless. Invariants enforced here:
 *   - verdicts are only accepted in the "ready" phase (after both overlays
 *     rendered) and at most once per comparison;
 *   - the loop never advances past a displayed comparison without a
 *     submission ack;
 *   - a failed render shows an error phase and can only retry, never judge.
 */

import { ApiClient } from "./api";
import type { Comparison, Verdict, VerdictAck } from "./types";

export type Phase = "idle" | "rendering" | "ready" | "submitting" | "error" | "stopped";

export interface MachineHooks {
  /** Decode and paint both overlays; throw to signal a decode failure. */
  render: (cmp: Comparison) => Promise<void>;
  onPhase?: (phase: Phase, cmp: Comparison | null, detail?: string) => void;
}

export class ReviewMachine {
  private phase: Phase = "idle";
  private current: Comparison | null = null;
  private verdictResolver: ((v: Verdict | null) => void) | null = null;
  private retryResolver: ((go: boolean) => void) | null = null;
  private readonly acked = new Set<string>();
  private stopped = false;
  readonly acks: VerdictAck[] = [];

  constructor(
    private readonly client: ApiClient,
    private readonly hooks: MachineHooks,
    private readonly pollWaitSeconds = 25,
  ) {}

  getPhase(): Phase {
    return this.phase;
  }

  getCurrent(): Comparison | null {
    return this.current;
  }

  /** Reviewer pressed Better/Worse. Returns false when not judgeable (not
   * rendered yet, already submitting, error card up): those presses are
   * dropped, which is what makes double-clicks single submissions. */
  submit(verdict: Verdict): boolean {
    if (this.phase !== "ready" || !this.verdictResolver) return false;
    const resolve = this.verdictResolver;
    this.verdictResolver = null;
    this.setPhase("submitting");
    resolve(verdict);
    return true;
  }

  /** Reviewer pressed Retry on the error card. */
  retry(): boolean {
    if (this.phase !== "error" || !this.retryResolver) return false;
    const resolve = this.retryResolver;
    this.retryResolver = null;
    resolve(true);
    return true;
  }

  stop(): void {
    this.stopped = true;
    this.verdictResolver?.(null);
    this.verdictResolver = null;
    this.retryResolver?.(false);
    this.retryResolver = null;
  }

  private setPhase(phase: Phase, detail?: string): void {
    this.phase = phase;
    this.hooks.onPhase?.(phase, this.current, detail);
  }

  private waitVerdict(): Promise<Verdict | null> {
    return new Promise((resolve) => {
      this.verdictResolver = resolve;
    });
  }

  private waitRetry(): Promise<boolean> {
    return new Promise((resolve) => {
      this.retryResolver = resolve;
    });
  }

  /** Main loop; resolves when stop() is called. */
  async run(): Promise<void> {
    while (!this.stopped) {
      let reply;
      try {
        reply = await this.client.next(this.pollWaitSeconds);
      } catch {
        this.setPhase("idle", "service unreachable, repolling");
        continue;
      }
      if (this.stopped) break;
      if (!reply || !reply.comparison_id) {
        if (this.phase !== "idle") this.setPhase("idle");
        continue;
      }
      const cmp = reply as Comparison;
      if (this.acked.has(cmp.comparison_id)) continue; // stale re-serve after our ack
      this.current = cmp;

      this.setPhase("rendering");
      try {
        await this.hooks.render(cmp);
      } catch (err) {
        this.setPhase("error", err instanceof Error ? err.message : String(err));
        const again = await this.waitRetry();
        this.current = null;
        if (!again) break;
        continue; // re-poll: the service re-serves the pending comparison fresh
      }

      this.setPhase("ready");
      const verdict = await this.waitVerdict();
      if (verdict === null) break;
      const ack = await this.client.submitVerdict(cmp.comparison_id, verdict);
      this.acked.add(cmp.comparison_id);
      this.acks.push(ack);
      this.current = null;
    }
    this.current = null;
    this.setPhase("stopped");
  }
}
