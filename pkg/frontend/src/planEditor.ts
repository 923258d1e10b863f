import type { ApiClient, SaveResult } from "./api.js";
import type { PlanJson, ShotSizeToken, ViolationJson } from "./types.js";

/** Editable mirror of a server-side plan with per-field dirty flags.
 *
 * All validation lives on the server: Save PUTs the draft and either adopts
 * the canonical response or records the 422 violations, which the form
 * renders inline. While violations are outstanding the draft counts as
 * blocked (the last save was rejected); any further edit clears them until
 * the next save.
 */
export class PlanDraft {
  plan: PlanJson;
  dirty = new Set<string>();
  violations: ViolationJson[] = [];

  constructor(
    readonly planId: string,
    plan: PlanJson,
  ) {
    this.plan = structuredClone(plan);
  }

  get saveBlocked(): boolean {
    return this.violations.length > 0;
  }

  private touch(field: string): void {
    this.dirty.add(field);
    this.violations = [];
  }

  setSetting(value: string): void {
    this.plan.setting = value;
    this.touch("setting");
  }

  setCharacter(i: number, name: string, appearance: string): void {
    const c = this.plan.characters[i];
    if (!c) throw new RangeError(`no character at ${i}`);
    this.plan.characters[i] = { name, appearance };
    this.touch(`characters[${i}]`);
  }

  addCharacter(): void {
    this.plan.characters.push({ name: "", appearance: "" });
    this.touch(`characters[${this.plan.characters.length - 1}]`);
  }

  removeCharacter(i: number): void {
    if (i < 0 || i >= this.plan.characters.length) throw new RangeError(`no character at ${i}`);
    this.plan.characters.splice(i, 1);
    this.touch("characters");
  }

  setShotDescription(i: number, description: string): void {
    const s = this.plan.shots[i];
    if (!s) throw new RangeError(`no shot at ${i}`);
    this.plan.shots[i] = { ...s, description };
    this.touch(`shots[${i}].description`);
  }

  setShotSize(i: number, size: ShotSizeToken): void {
    const s = this.plan.shots[i];
    if (!s) throw new RangeError(`no shot at ${i}`);
    this.plan.shots[i] = { ...s, size };
    this.touch(`shots[${i}].size`);
  }

  /** Drag-reorder: move the shot at `from` to position `to` and renumber
   * every shot 1..N contiguously. */
  moveShot(from: number, to: number): void {
    const n = this.plan.shots.length;
    if (from < 0 || from >= n || to < 0 || to >= n) throw new RangeError("shot move out of range");
    if (from === to) return;
    const [shot] = this.plan.shots.splice(from, 1);
    this.plan.shots.splice(to, 0, shot!);
    this.plan.shots = this.plan.shots.map((s, i) => ({ ...s, index: i + 1 }));
    this.touch("shots");
  }

  /** Violations whose field matches exactly or lies under the given form
   * field (e.g. field "shots" also collects "shots[2].size"). */
  violationsFor(field: string): ViolationJson[] {
    return this.violations.filter((v) => v.field === field || v.field.startsWith(`${field}[`) || v.field.startsWith(`${field}.`));
  }

  async save(api: ApiClient): Promise<SaveResult> {
    const result = await api.savePlan(this.planId, this.plan);
    if (result.ok) {
      this.plan = structuredClone(result.plan);
      this.dirty.clear();
      this.violations = [];
    } else {
      this.violations = result.violations;
    }
    return result;
  }
}
