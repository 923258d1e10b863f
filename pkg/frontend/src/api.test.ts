import { describe, expect, it } from "vitest";

import { ApiClient, ApiError, FetchLike } from "./api.js";

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

function client(handler: (url: string, init?: RequestInit) => Response | Promise<Response>): {
  api: ApiClient;
  calls: { url: string; init?: RequestInit }[];
} {
  const calls: { url: string; init?: RequestInit }[] = [];
  const fetchImpl: FetchLike = async (url, init) => {
    calls.push({ url, init });
    return handler(url, init);
  };
  return { api: new ApiClient("http://svc", fetchImpl), calls };
}

describe("ApiClient", () => {
  it("submits a plan and returns the job id", async () => {
    const { api, calls } = client(() => jsonResponse(202, { job_id: "01ABC" }));
    const jobId = await api.submitPlan("a duel at dawn");
    expect(jobId).toBe("01ABC");
    expect(calls[0]?.url).toBe("http://svc/plans");
    expect(JSON.parse(String(calls[0]?.init?.body))).toEqual({ scene_description: "a duel at dawn" });
  });

  it("returns violations instead of throwing on a 422 save", async () => {
    const violations = [{ rule: "DuplicateCharacter", field: "characters[1]", message: "dup" }];
    const { api, calls } = client(() => jsonResponse(422, { error: "validation", violations }));
    const result = await api.savePlan("p1", {
      scene_description: "x",
      setting: "y",
      characters: [],
      shots: [],
    });
    expect(result).toEqual({ ok: false, violations });
    expect(calls[0]?.init?.method).toBe("PUT");
  });

  it("returns the canonical plan on a 200 save", async () => {
    const plan = { scene_description: "x", setting: "y", characters: [], shots: [] };
    const { api } = client(() => jsonResponse(200, plan));
    const result = await api.savePlan("p1", plan);
    expect(result).toEqual({ ok: true, plan });
  });

  it("raises ApiError with status and server message on other failures", async () => {
    const { api } = client(() => jsonResponse(404, { error: "not_found", message: "unknown plan p9" }));
    const err = await api.getPlan("p9").catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(404);
    expect((err as ApiError).message).toBe("unknown plan p9");
  });

  it("posts survey responses with item id, choice and elapsed time", async () => {
    const { api, calls } = client(() => jsonResponse(201, { recorded: true }));
    await api.respondSurvey("s1", "i1", "left", 2.5);
    expect(calls[0]?.url).toBe("http://svc/surveys/s1/responses");
    expect(JSON.parse(String(calls[0]?.init?.body))).toEqual({
      item_id: "i1",
      choice: "left",
      elapsed_seconds: 2.5,
    });
  });

  it("passes survey completion through as a done marker", async () => {
    const { api } = client(() => jsonResponse(200, { done: true }));
    const item = await api.nextSurveyItem("s1");
    expect(item).toEqual({ done: true });
  });
});
