import type { ApiClient } from "./api.js";
import type { JobJson, PlanJson, SceneResultJson } from "./types.js";

export interface FrameCard {
  url: string;
  caption: string;
  sizeBadge: string;
}

export interface StripView {
  sceneId: string;
  seed: number;
  sheetUrl: string;
  frames: FrameCard[];
  /** True when the detected frame count differs from the planned shot count;
   * the UI shows a warning banner. Value comes straight from the server. */
  countMismatch: boolean;
  frameCount: number;
  plannedShots: number;
}

/** Pair captions and size badges with frame URLs. When the generator lost a
 * border the server returns fewer frames than shots; surplus captions are
 * dropped and the mismatch banner carries the discrepancy. */
export function buildStripView(sceneId: string, result: SceneResultJson, plan: PlanJson): StripView {
  const frames = result.frame_urls.map((url, i) => {
    const shot = plan.shots[i];
    return {
      url,
      caption: shot ? `${shot.index}. ${shot.description}` : `frame ${i + 1}`,
      sizeBadge: shot ? shot.size : "?",
    };
  });
  return {
    sceneId,
    seed: result.seed,
    sheetUrl: result.sheet_url,
    frames,
    countMismatch: !result.count_ok,
    frameCount: result.frame_count,
    plannedShots: result.planned_shots,
  };
}

/** Two generations of the same plan side by side, labeled by seed. */
export interface StripComparison {
  columns: { label: string; view: StripView }[];
}

export function compareStrips(a: StripView, b: StripView): StripComparison {
  return {
    columns: [
      { label: `seed ${a.seed}`, view: a },
      { label: `seed ${b.seed}`, view: b },
    ],
  };
}

export class JobFailedError extends Error {
  constructor(readonly job: JobJson) {
    super(job.error ?? `job ${job.id} failed`);
  }
}

/** Poll a job at a fixed interval until it settles. The sleeper is
 * injectable so tests can run the loop without wall-clock delays. */
export async function pollJob(
  api: ApiClient,
  jobId: string,
  {
    intervalMs = 1000,
    timeoutMs = 120_000,
    sleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms)),
  } = {},
): Promise<JobJson> {
  const started = Date.now();
  for (;;) {
    const job = await api.getJob(jobId);
    if (job.state === "done") return job;
    if (job.state === "failed") throw new JobFailedError(job);
    if (Date.now() - started > timeoutMs) {
      throw new Error(`job ${jobId} still ${job.state} after ${timeoutMs} ms`);
    }
    await sleep(intervalMs);
  }
}

/** Full flow: post a generate job, poll it, fetch result + plan, build the
 * strip. */
export async function generateStrip(
  api: ApiClient,
  planId: string,
  seed: number,
  pollOptions?: Parameters<typeof pollJob>[2],
): Promise<StripView> {
  const jobId = await api.generate(planId, seed);
  const job = await pollJob(api, jobId, pollOptions);
  const result = await api.getSceneResult(job.id);
  const plan = await api.getPlan(planId);
  return buildStripView(job.id, result, plan);
}
