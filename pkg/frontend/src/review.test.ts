import { describe, expect, it } from "vitest";

import type { ApiClient } from "./api.js";
import { Clock, ReviewSession } from "./review.js";
import type { SurveyItemJson } from "./types.js";

class FakeClock implements Clock {
  private t = 0;
  private fn: (() => void) | null = null;

  now(): number {
    return this.t;
  }

  setInterval(fn: () => void, _ms: number): number {
    this.fn = fn;
    return 1;
  }

  clearInterval(_id: number): void {
    this.fn = null;
  }

  /** Advance one second of wall time and fire the interval if armed. */
  async tick(seconds = 1): Promise<void> {
    for (let i = 0; i < seconds; i++) {
      this.t += 1000;
      this.fn?.();
      // let any response POST triggered by the tick settle
      await Promise.resolve();
      await Promise.resolve();
    }
  }
}

function item(id: string, limit = 5): SurveyItemJson {
  return {
    item_id: id,
    scene_id: "scene-1",
    left_method: "ours",
    right_method: "baseline",
    aspect: "overall",
    question: "Which sequence is better overall?",
    time_limit_seconds: limit,
  };
}

interface Recorded {
  itemId: string;
  choice: string;
  elapsed: number;
}

function fakeApi(items: SurveyItemJson[], recorded: Recorded[]): ApiClient {
  let i = 0;
  return {
    nextSurveyItem: async () => (i < items.length ? items[i++]! : { done: true as const }),
    respondSurvey: async (_s: string, itemId: string, choice: string, elapsed: number) => {
      recorded.push({ itemId, choice, elapsed });
    },
  } as unknown as ApiClient;
}

describe("ReviewSession", () => {
  it("records a choice made within the time limit and advances", async () => {
    const recorded: Recorded[] = [];
    const clock = new FakeClock();
    const session = new ReviewSession(fakeApi([item("a"), item("b")], recorded), "s1", clock);
    await session.loadNext();
    expect(session.phase).toBe("answering");
    expect(session.secondsRemaining).toBe(5);
    expect(session.responseDisabled).toBe(false);

    await clock.tick(2);
    await session.answer("left");
    expect(recorded).toEqual([{ itemId: "a", choice: "left", elapsed: 2 }]);
    expect(session.answered).toBe(1);
    expect(session.current?.item_id).toBe("b");
    expect(session.secondsRemaining).toBe(5);

    await session.answer("right");
    expect(recorded[1]).toMatchObject({ itemId: "b", choice: "right" });
    expect(session.phase).toBe("finished");
    expect(session.current).toBeNull();
  });

  it("posts a blank-choice abstention when the countdown expires", async () => {
    const recorded: Recorded[] = [];
    const clock = new FakeClock();
    const session = new ReviewSession(fakeApi([item("a", 3), item("b", 3)], recorded), "s1", clock);
    await session.loadNext();

    await clock.tick(3);
    expect(recorded).toEqual([{ itemId: "a", choice: "", elapsed: 3 }]);
    expect(session.abstained).toBe(1);
    expect(session.answered).toBe(0);
    expect(session.current?.item_id).toBe("b");
  });

  it("disables responses at zero and ignores late clicks", async () => {
    const recorded: Recorded[] = [];
    const clock = new FakeClock();
    // single item; after expiry the session is finished
    const session = new ReviewSession(fakeApi([item("a", 2)], recorded), "s1", clock);
    await session.loadNext();
    await clock.tick(2);
    expect(session.phase).toBe("finished");
    expect(session.responseDisabled).toBe(true);
    await session.answer("left");
    // only the abstention was posted
    expect(recorded).toEqual([{ itemId: "a", choice: "", elapsed: 2 }]);
  });

  it("counts down once per second", async () => {
    const clock = new FakeClock();
    const session = new ReviewSession(fakeApi([item("a", 10)], []), "s1", clock);
    await session.loadNext();
    await clock.tick(4);
    expect(session.secondsRemaining).toBe(6);
    expect(session.responseDisabled).toBe(false);
  });

  it("finishes immediately on an exhausted survey", async () => {
    const session = new ReviewSession(fakeApi([], []), "s1", new FakeClock());
    await session.loadNext();
    expect(session.phase).toBe("finished");
    expect(session.responseDisabled).toBe(true);
  });
});
