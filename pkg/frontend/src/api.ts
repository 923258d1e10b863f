import type {
  JobJson,
  PlanJson,
  SceneResultJson,
  SurveyItemJson,
  SurveyTallyJson,
  ViolationJson,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

/** PUT /plans can legitimately answer 422; the caller needs the violation
 * list rather than an exception. */
export type SaveResult =
  | { ok: true; plan: PlanJson }
  | { ok: false; violations: ViolationJson[] };

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const resp = await this.fetchImpl(this.baseUrl + path, init);
    return resp;
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.request(path, init);
    const body = await resp.json();
    if (!resp.ok) {
      throw new ApiError(resp.status, body?.message ?? `HTTP ${resp.status}`);
    }
    return body as T;
  }

  private post(path: string, payload: unknown): Promise<Response> {
    return this.request(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  async submitPlan(sceneDescription: string): Promise<string> {
    const resp = await this.post("/plans", { scene_description: sceneDescription });
    const body = await resp.json();
    if (!resp.ok) throw new ApiError(resp.status, body?.message ?? "plan submit failed");
    return body.job_id as string;
  }

  getJob(jobId: string): Promise<JobJson> {
    return this.json<JobJson>(`/jobs/${jobId}`);
  }

  getPlan(planId: string): Promise<PlanJson> {
    return this.json<PlanJson>(`/plans/${planId}`);
  }

  async savePlan(planId: string, plan: PlanJson): Promise<SaveResult> {
    const resp = await this.request(`/plans/${planId}`, {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(plan),
    });
    const body = await resp.json();
    if (resp.status === 422 && Array.isArray(body?.violations)) {
      return { ok: false, violations: body.violations as ViolationJson[] };
    }
    if (!resp.ok) throw new ApiError(resp.status, body?.message ?? "save failed");
    return { ok: true, plan: body as PlanJson };
  }

  async generate(planId: string, seed: number): Promise<string> {
    const resp = await this.post(`/plans/${planId}/generate`, { seed });
    const body = await resp.json();
    if (!resp.ok) throw new ApiError(resp.status, body?.message ?? "generate failed");
    return body.job_id as string;
  }

  getSceneResult(sceneId: string): Promise<SceneResultJson> {
    return this.json<SceneResultJson>(`/scenes/${sceneId}/result.json`);
  }

  async createSurvey(sceneIds: string[], rngSeed = 0): Promise<string> {
    const resp = await this.post("/surveys", { scene_ids: sceneIds, rng_seed: rngSeed });
    const body = await resp.json();
    if (!resp.ok) throw new ApiError(resp.status, body?.message ?? "survey create failed");
    return body.survey_id as string;
  }

  nextSurveyItem(surveyId: string): Promise<SurveyItemJson | { done: true }> {
    return this.json(`/surveys/${surveyId}/next`);
  }

  async respondSurvey(
    surveyId: string,
    itemId: string,
    choice: string,
    elapsedSeconds: number,
  ): Promise<void> {
    const resp = await this.post(`/surveys/${surveyId}/responses`, {
      item_id: itemId,
      choice,
      elapsed_seconds: elapsedSeconds,
    });
    if (!resp.ok) {
      const body = await resp.json();
      throw new ApiError(resp.status, body?.message ?? "response rejected");
    }
  }

  getSurveyTally(surveyId: string): Promise<SurveyTallyJson> {
    return this.json<SurveyTallyJson>(`/surveys/${surveyId}/tally`);
  }
}
