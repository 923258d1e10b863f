import { describe, expect, it } from "vitest";

import type { ApiClient } from "./api.js";
import {
  buildStripView,
  compareStrips,
  generateStrip,
  JobFailedError,
  pollJob,
} from "./stripViewer.js";
import type { JobJson, PlanJson, SceneResultJson } from "./types.js";

function plan(shots = 5): PlanJson {
  return {
    scene_description: "storm at sea",
    setting: "Deck of a trawler.",
    characters: [{ name: "Skipper", appearance: "oilskins" }],
    shots: Array.from({ length: shots }, (_, i) => ({
      index: i + 1,
      size: "wide" as const,
      description: `wave ${i + 1}`,
      referenced_characters: [],
    })),
  };
}

function result(frames: number, planned: number, seed = 7): SceneResultJson {
  return {
    plan_id: "p1",
    seed,
    count_ok: frames === planned,
    frame_count: frames,
    planned_shots: planned,
    cut_rows: [],
    sheet_url: "/scenes/s1/sheet.png",
    frame_urls: Array.from({ length: frames }, (_, i) => `/scenes/s1/frames/${i + 1}.png`),
  };
}

describe("buildStripView", () => {
  it("makes one captioned card per frame with the shot size badge", () => {
    const view = buildStripView("s1", result(5, 5), plan(5));
    expect(view.frames).toHaveLength(5);
    expect(view.frames[0]).toEqual({
      url: "/scenes/s1/frames/1.png",
      caption: "1. wave 1",
      sizeBadge: "wide",
    });
    expect(view.countMismatch).toBe(false);
  });

  it("flags a mismatch when detected frames differ from planned shots", () => {
    const view = buildStripView("s1", result(4, 5), plan(5));
    expect(view.countMismatch).toBe(true);
    expect(view.frameCount).toBe(4);
    expect(view.plannedShots).toBe(5);
    expect(view.frames).toHaveLength(4);
  });

  it("labels surplus frames generically instead of inventing captions", () => {
    const view = buildStripView("s1", result(4, 3), plan(3));
    expect(view.frames[3]).toEqual({ url: "/scenes/s1/frames/4.png", caption: "frame 4", sizeBadge: "?" });
  });
});

describe("compareStrips", () => {
  it("labels the two columns by seed", () => {
    const a = buildStripView("s1", result(3, 3, 1), plan(3));
    const b = buildStripView("s2", result(3, 3, 2), plan(3));
    const cmp = compareStrips(a, b);
    expect(cmp.columns.map((c) => c.label)).toEqual(["seed 1", "seed 2"]);
    expect(cmp.columns[1]?.view.sceneId).toBe("s2");
  });
});

function jobSequence(states: JobJson["state"][]): ApiClient {
  let i = 0;
  return {
    getJob: async (): Promise<JobJson> => {
      const state = states[Math.min(i, states.length - 1)]!;
      i += 1;
      return { id: "j1", kind: "generate", state, outputs: null, error: state === "failed" ? "boom" : null };
    },
  } as unknown as ApiClient;
}

describe("pollJob", () => {
  it("polls until the job is done", async () => {
    const sleeps: number[] = [];
    const job = await pollJob(jobSequence(["queued", "running", "done"]), "j1", {
      intervalMs: 1000,
      sleep: async (ms) => {
        sleeps.push(ms);
      },
    });
    expect(job.state).toBe("done");
    expect(sleeps).toEqual([1000, 1000]);
  });

  it("throws JobFailedError with the server message on failure", async () => {
    await expect(
      pollJob(jobSequence(["running", "failed"]), "j1", { sleep: async () => {} }),
    ).rejects.toThrow(JobFailedError);
    await expect(
      pollJob(jobSequence(["failed"]), "j1", { sleep: async () => {} }),
    ).rejects.toThrow("boom");
  });
});

describe("generateStrip", () => {
  it("submits, polls, and assembles the strip from server responses", async () => {
    const calls: string[] = [];
    const api = {
      generate: async (planId: string, seed: number) => {
        calls.push(`generate ${planId} ${seed}`);
        return "j1";
      },
      getJob: async (): Promise<JobJson> => ({ id: "j1", kind: "generate", state: "done", outputs: {}, error: null }),
      getSceneResult: async () => result(5, 5, 9),
      getPlan: async () => plan(5),
    } as unknown as ApiClient;
    const view = await generateStrip(api, "p1", 9, { sleep: async () => {} });
    expect(calls).toEqual(["generate p1 9"]);
    expect(view.sceneId).toBe("j1");
    expect(view.seed).toBe(9);
    expect(view.frames).toHaveLength(5);
  });
});
