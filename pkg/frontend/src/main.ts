import { ApiClient } from "./api.js";
import { PlanDraft } from "./planEditor.js";
import { ReviewSession } from "./review.js";
import { buildStripView, compareStrips, generateStrip, JobFailedError, pollJob, StripView } from "./stripViewer.js";
import { SHOT_SIZES, ShotSizeToken } from "./types.js";

const api = new ApiClient("");

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) {
    if (k === "class") node.className = v;
    else node.setAttribute(k, v);
  }
  node.append(...children);
  return node;
}

function clear(node: HTMLElement): void {
  while (node.firstChild) node.removeChild(node.firstChild);
}

// --- application state ------------------------------------------------------

let draft: PlanDraft | null = null;
let lastStrips: StripView[] = [];
let review: ReviewSession | null = null;

function render(): void {
  const root = document.getElementById("app");
  if (!root) return;
  clear(root);
  root.append(
    el("h1", {}, ["cinestudio"]),
    renderPlanner(),
    renderEditor(),
    renderStrips(),
    renderReview(),
  );
}

// --- planner ---------------------------------------------------------------

function renderPlanner(): HTMLElement {
  const input = el("textarea", { id: "scene-description", rows: "3", placeholder: "Describe the scene…" });
  const status = el("span", { class: "status", id: "plan-status" });
  const button = el("button", { id: "plan-button" }, ["Plan scene"]);
  button.addEventListener("click", async () => {
    status.textContent = "planning…";
    try {
      const jobId = await api.submitPlan(input.value);
      const job = await pollJob(api, jobId);
      const planId = (job.outputs as { plan_id: string }).plan_id;
      const plan = await api.getPlan(planId);
      draft = new PlanDraft(planId, plan);
      status.textContent = `plan ${planId}`;
    } catch (err) {
      status.textContent = err instanceof Error ? err.message : String(err);
    }
    render();
  });
  return el("section", { class: "panel", id: "planner" }, [
    el("h2", {}, ["1. Describe"]),
    input,
    el("div", {}, [button, status]),
  ]);
}

// --- script editor ---------------------------------------------------------

function violationList(fields: string[]): HTMLElement {
  const d = draft!;
  const items = fields.flatMap((f) => d.violationsFor(f));
  const ul = el("ul", { class: "violations" });
  for (const v of items) {
    ul.append(el("li", { class: "violation", "data-rule": v.rule }, [`${v.rule}: ${v.message}`]));
  }
  return ul;
}

function renderEditor(): HTMLElement {
  const section = el("section", { class: "panel", id: "editor" }, [el("h2", {}, ["2. Edit script"])]);
  if (!draft) {
    section.append(el("p", { class: "hint" }, ["Plan a scene to start editing."]));
    return section;
  }
  const d = draft;

  const setting = el("textarea", { id: "setting", rows: "2" });
  setting.value = d.plan.setting;
  setting.addEventListener("input", () => d.setSetting(setting.value));
  section.append(el("label", {}, ["Setting"]), setting, violationList(["setting"]));

  const charList = el("div", { id: "characters" });
  d.plan.characters.forEach((c, i) => {
    const name = el("input", { value: c.name, placeholder: "Name", "data-role": "char-name" });
    const appearance = el("input", { value: c.appearance, placeholder: "Appearance", "data-role": "char-appearance" });
    const onEdit = () => d.setCharacter(i, name.value, appearance.value);
    name.addEventListener("input", onEdit);
    appearance.addEventListener("input", onEdit);
    const remove = el("button", { class: "small" }, ["✕"]);
    remove.addEventListener("click", () => {
      d.removeCharacter(i);
      render();
    });
    charList.append(el("div", { class: "character-row" }, [name, appearance, remove]));
  });
  const addChar = el("button", { class: "small" }, ["+ character"]);
  addChar.addEventListener("click", () => {
    d.addCharacter();
    render();
  });
  section.append(el("label", {}, ["Characters"]), charList, addChar, violationList(["characters"]));

  const shotList = el("div", { id: "shots" });
  d.plan.shots.forEach((shot, i) => {
    const desc = el("input", { value: shot.description, class: "shot-desc" });
    desc.addEventListener("input", () => d.setShotDescription(i, desc.value));
    const size = el("select", { class: "shot-size" });
    for (const token of SHOT_SIZES) {
      const opt = el("option", { value: token }, [token]);
      if (token === shot.size) opt.selected = true;
      size.append(opt);
    }
    size.addEventListener("change", () => d.setShotSize(i, size.value as ShotSizeToken));
    const up = el("button", { class: "small" }, ["↑"]);
    up.addEventListener("click", () => {
      if (i > 0) d.moveShot(i, i - 1);
      render();
    });
    const down = el("button", { class: "small" }, ["↓"]);
    down.addEventListener("click", () => {
      if (i < d.plan.shots.length - 1) d.moveShot(i, i + 1);
      render();
    });
    shotList.append(
      el("div", { class: "shot-row" }, [el("span", { class: "shot-index" }, [String(shot.index)]), size, desc, up, down]),
    );
  });
  section.append(el("label", {}, ["Shots"]), shotList, violationList(["shots"]));

  const save = el("button", { id: "save-plan" }, ["Save"]);
  const saveStatus = el("span", { class: "status", id: "save-status" });
  save.addEventListener("click", async () => {
    const result = await d.save(api);
    saveStatus.textContent = result.ok ? "saved" : "rejected — fix the highlighted fields";
    render();
  });
  section.append(el("div", {}, [save, saveStatus]));
  return section;
}

// --- generation strip ------------------------------------------------------

function stripColumn(label: string, view: StripView): HTMLElement {
  const col = el("div", { class: "strip-column" }, [el("h3", {}, [label])]);
  if (view.countMismatch) {
    col.append(
      el("div", { class: "banner warning", "data-role": "count-banner" }, [
        `Frame count mismatch: detected ${view.frameCount}, planned ${view.plannedShots}.`,
      ]),
    );
  }
  for (const frame of view.frames) {
    col.append(
      el("figure", { class: "frame-card" }, [
        el("img", { src: frame.url, alt: frame.caption }),
        el("figcaption", {}, [el("span", { class: "size-badge" }, [frame.sizeBadge]), ` ${frame.caption}`]),
      ]),
    );
  }
  return col;
}

function renderStrips(): HTMLElement {
  const section = el("section", { class: "panel", id: "strips" }, [el("h2", {}, ["3. Generate"])]);
  if (!draft) {
    section.append(el("p", { class: "hint" }, ["Save a plan to generate keyframes."]));
    return section;
  }
  const seedInput = el("input", { id: "seed", type: "number", value: "0" });
  const status = el("span", { class: "status", id: "generate-status" });
  const button = el("button", { id: "generate-button" }, ["Generate"]);
  button.addEventListener("click", async () => {
    status.textContent = "generating…";
    try {
      const view = await generateStrip(api, draft!.planId, Number(seedInput.value));
      lastStrips = [...lastStrips.slice(-1), view];
      status.textContent = "done";
    } catch (err) {
      status.textContent = err instanceof JobFailedError ? `job failed: ${err.message}` : String(err);
    }
    render();
  });
  section.append(el("div", {}, [el("label", {}, ["Seed "]), seedInput, button, status]));

  if (lastStrips.length === 2) {
    const cmp = compareStrips(lastStrips[0]!, lastStrips[1]!);
    section.append(el("div", { class: "strip-compare" }, cmp.columns.map((c) => stripColumn(c.label, c.view))));
  } else if (lastStrips.length === 1) {
    section.append(stripColumn(`seed ${lastStrips[0]!.seed}`, lastStrips[0]!));
  }
  return section;
}

// --- 2AFC review -----------------------------------------------------------

function renderReview(): HTMLElement {
  const section = el("section", { class: "panel", id: "review" }, [el("h2", {}, ["4. Review (2AFC)"])]);
  const surveyInput = el("input", { id: "survey-id", placeholder: "survey id" });
  const start = el("button", { id: "start-review" }, ["Start session"]);
  start.addEventListener("click", async () => {
    review = new ReviewSession(api, surveyInput.value);
    review.onUpdate = render;
    await review.loadNext();
  });
  section.append(el("div", {}, [surveyInput, start]));

  if (review) {
    if (review.phase === "finished") {
      section.append(el("p", { id: "review-done" }, [`Session complete: ${review.answered} answered, ${review.abstained} abstained.`]));
    } else if (review.current) {
      const item = review.current;
      const left = el("button", { id: "choose-left" }, [`Left (${item.scene_id})`]);
      const right = el("button", { id: "choose-right" }, ["Right"]);
      left.disabled = right.disabled = review.responseDisabled;
      left.addEventListener("click", () => void review!.answer("left"));
      right.addEventListener("click", () => void review!.answer("right"));
      section.append(
        el("p", { class: "question" }, [item.question]),
        el("p", { class: "countdown", id: "countdown" }, [`${review.secondsRemaining}s`]),
        el("div", {}, [left, right]),
      );
    }
  }
  return section;
}

// --- boot -------------------------------------------------------------------

export function boot(): void {
  render();
}

/** Test hook: inject a draft so DOM tests can exercise the editor without a
 * network round trip. */
export function setDraftForTesting(d: PlanDraft | null): void {
  draft = d;
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  boot();
}

export { api, buildStripView, render };
