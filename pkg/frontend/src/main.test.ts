// @vitest-environment happy-dom
import { beforeEach, describe, expect, it } from "vitest";

import { PlanDraft } from "./planEditor.js";
import { SHOT_SIZES } from "./types.js";

async function mountApp() {
  document.body.innerHTML = '<div id="app"></div>';
  const main = await import("./main.js");
  main.setDraftForTesting(null);
  main.boot();
  return main;
}

function draftWithShots(shots = 3): PlanDraft {
  return new PlanDraft("p1", {
    scene_description: "market chase",
    setting: "Bazaar.",
    characters: [{ name: "Mara", appearance: "red scarf" }],
    shots: Array.from({ length: shots }, (_, i) => ({
      index: i + 1,
      size: "medium" as const,
      description: `beat ${i + 1}`,
      referenced_characters: [],
    })),
  });
}

describe("studio page", () => {
  beforeEach(() => {
    document.body.innerHTML = "";
  });

  it("renders the four workflow panels", async () => {
    await mountApp();
    for (const id of ["planner", "editor", "strips", "review"]) {
      expect(document.getElementById(id)).not.toBeNull();
    }
    expect(document.getElementById("plan-button")).not.toBeNull();
  });

  it("offers exactly the three shot size tokens in each dropdown", async () => {
    const main = await mountApp();
    main.setDraftForTesting(draftWithShots(3));
    main.render();
    const selects = document.querySelectorAll<HTMLSelectElement>("#editor select.shot-size");
    expect(selects).toHaveLength(3);
    for (const select of selects) {
      const values = Array.from(select.options).map((o) => o.value);
      expect(values).toEqual([...SHOT_SIZES]);
    }
  });

  it("renders violations inline next to the offending field group", async () => {
    const main = await mountApp();
    const draft = draftWithShots(2);
    draft.violations = [
      { rule: "DuplicateCharacter", field: "characters[0]", message: "character 'Mara' declared twice" },
    ];
    main.setDraftForTesting(draft);
    main.render();
    const editor = document.getElementById("editor")!;
    const inline = editor.querySelectorAll('li.violation[data-rule="DuplicateCharacter"]');
    expect(inline).toHaveLength(1);
    expect(inline[0]?.textContent).toContain("declared twice");
    // the violation sits in the characters group, not under shots
    const lists = editor.querySelectorAll("ul.violations");
    expect(lists[1]?.querySelectorAll("li")).toHaveLength(1); // characters list
    expect(lists[2]?.querySelectorAll("li")).toHaveLength(0); // shots list
  });

  it("renumbers visibly after moving a shot down", async () => {
    const main = await mountApp();
    main.setDraftForTesting(draftWithShots(3));
    main.render();
    const rows = document.querySelectorAll("#shots .shot-row");
    const downButton = rows[0]?.querySelectorAll("button")[1] as HTMLButtonElement;
    downButton.click();
    const indices = Array.from(document.querySelectorAll("#shots .shot-index")).map((n) => n.textContent);
    expect(indices).toEqual(["1", "2", "3"]);
    const descs = Array.from(
      document.querySelectorAll<HTMLInputElement>("#shots .shot-desc"),
    ).map((n) => n.value);
    expect(descs).toEqual(["beat 2", "beat 1", "beat 3"]);
  });
});
