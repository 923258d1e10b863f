import type { ApiClient } from "./api.js";
import type { SurveyItemJson } from "./types.js";

export type ReviewPhase = "idle" | "answering" | "finished";

export interface Clock {
  now(): number;
  setInterval(fn: () => void, ms: number): number;
  clearInterval(id: number): void;
}

const wallClock: Clock = {
  now: () => Date.now(),
  setInterval: (fn, ms) => globalThis.setInterval(fn, ms) as unknown as number,
  clearInterval: (id) => globalThis.clearInterval(id as unknown as ReturnType<typeof globalThis.setInterval>),
};

/** One 2AFC sitting: fetch items one at a time, run the per-item countdown,
 * and post either the rater's choice or an explicit blank abstention when
 * the timer expires. Sides are displayed exactly as the server assigned
 * them; the session never swaps or relabels. */
export class ReviewSession {
  phase: ReviewPhase = "idle";
  current: SurveyItemJson | null = null;
  secondsRemaining = 0;
  answered = 0;
  abstained = 0;
  onUpdate: () => void = () => {};

  private itemStartedAt = 0;
  private timerId: number | null = null;

  constructor(
    private readonly api: ApiClient,
    readonly surveyId: string,
    private readonly clock: Clock = wallClock,
  ) {}

  async loadNext(): Promise<void> {
    this.stopTimer();
    const item = await this.api.nextSurveyItem(this.surveyId);
    if ("done" in item) {
      this.phase = "finished";
      this.current = null;
      this.onUpdate();
      return;
    }
    this.current = item;
    this.phase = "answering";
    this.secondsRemaining = Math.ceil(item.time_limit_seconds);
    this.itemStartedAt = this.clock.now();
    this.timerId = this.clock.setInterval(() => this.tick(), 1000);
    this.onUpdate();
  }

  private tick(): void {
    if (this.phase !== "answering") return;
    this.secondsRemaining -= 1;
    if (this.secondsRemaining <= 0) {
      void this.expire();
    }
    this.onUpdate();
  }

  get responseDisabled(): boolean {
    return this.phase !== "answering" || this.secondsRemaining <= 0;
  }

  private elapsedSeconds(): number {
    return (this.clock.now() - this.itemStartedAt) / 1000;
  }

  /** choice is "left" or "right"; mapping back to methods happens on the
   * server at tally time. */
  async answer(choice: "left" | "right"): Promise<void> {
    if (this.responseDisabled || !this.current) return;
    const item = this.current;
    this.stopTimer();
    await this.api.respondSurvey(this.surveyId, item.item_id, choice, this.elapsedSeconds());
    this.answered += 1;
    await this.loadNext();
  }

  /** Timer expiry posts a blank choice; the server tallies it as an
   * abstention. */
  private async expire(): Promise<void> {
    if (!this.current) return;
    const item = this.current;
    this.stopTimer();
    await this.api.respondSurvey(this.surveyId, item.item_id, "", item.time_limit_seconds);
    this.abstained += 1;
    await this.loadNext();
  }

  private stopTimer(): void {
    if (this.timerId !== null) {
      this.clock.clearInterval(this.timerId);
      this.timerId = null;
    }
  }
}
