/** Pure-logic tests for the session state module. */

import { describe, expect, it } from "vitest";
import {
  amendEdited,
  canSubmit,
  draftToBody,
  emptyDraft,
  emptyFilter,
  filterToParams,
  groupByCategory,
  type Draft,
} from "../src/state.js";
import { fieldFromDetail, priorityIndex } from "../src/render.js";
import { ALL_FINDINGS, GROUPS } from "./fixtures.js";

function draft(partial: Partial<Draft>): Draft {
  return { ...emptyDraft(), ...partial };
}

describe("canSubmit", () => {
  it("requires an action and a reviewer", () => {
    expect(canSubmit(emptyDraft())).toBe(false);
    expect(canSubmit(draft({ action: "accept" }))).toBe(false);
    expect(canSubmit(draft({ reviewer: "blake" }))).toBe(false);
    expect(canSubmit(draft({ action: "accept", reviewer: "blake" }))).toBe(true);
    expect(canSubmit(draft({ action: "accept", reviewer: "   " }))).toBe(false);
  });

  it("blocks an amend with no edited field, any single edit unblocks", () => {
    const base = draft({ action: "amend", reviewer: "blake" });
    expect(canSubmit(base)).toBe(false);
    expect(amendEdited(base)).toBe(false);
    expect(canSubmit({ ...base, amendedTitle: "t" })).toBe(true);
    expect(canSubmit({ ...base, amendedDescription: "d" })).toBe(true);
    expect(canSubmit({ ...base, amendedSeverity: "Low" })).toBe(true);
    expect(canSubmit({ ...base, amendedTitle: "   " })).toBe(false);
  });

  it("discard needs no amend fields", () => {
    expect(canSubmit(draft({ action: "discard", reviewer: "blake" }))).toBe(true);
  });
});

describe("filterToParams", () => {
  it("emits only non-empty fields", () => {
    expect(filterToParams(emptyFilter()).toString()).toBe("");
    const params = filterToParams({
      ...emptyFilter(),
      severity: "High",
      keyword: " margin ",
    });
    expect(params.get("severity")).toBe("High");
    expect(params.get("keyword")).toBe("margin");
    expect([...params.keys()].sort()).toEqual(["keyword", "severity"]);
  });
});

describe("draftToBody", () => {
  it("drops empty optional fields and keeps filled ones", () => {
    expect(draftToBody(draft({ action: "accept", reviewer: "blake" }))).toEqual({
      action: "accept",
      reviewer: "blake",
    });
    expect(
      draftToBody(
        draft({
          action: "amend",
          reviewer: "blake",
          note: "tighten",
          amendedSeverity: "Low",
        }),
      ),
    ).toEqual({
      action: "amend",
      reviewer: "blake",
      note: "tighten",
      amended_severity: "Low",
    });
  });

  it("refuses a draft with no action", () => {
    expect(() => draftToBody(emptyDraft())).toThrow();
  });
});

describe("groupByCategory", () => {
  it("keeps the flattened order identical to the input", () => {
    const sections = groupByCategory(ALL_FINDINGS);
    const flattened = sections.flatMap((s) => s.findings.map((f) => f.id));
    expect(flattened).toEqual(ALL_FINDINGS.map((f) => f.id));
  });

  it("merges only consecutive rows of one category", () => {
    const sections = groupByCategory(ALL_FINDINGS);
    for (const section of sections) {
      for (const finding of section.findings) {
        expect(finding.category).toBe(section.category);
      }
    }
    for (let i = 1; i < sections.length; i += 1) {
      expect(sections[i].category).not.toBe(sections[i - 1].category);
    }
  });

  it("handles the empty list", () => {
    expect(groupByCategory([])).toEqual([]);
  });
});

describe("render helpers", () => {
  it("maps group ids to priority scores", () => {
    const index = priorityIndex(GROUPS);
    expect(index.get("PF1")).toBe(7);
    expect(index.get("PO1")).toBe(7);
    expect(index.get("ES1")).toBe(4);
    expect(index.size).toBe(3);
  });

  it("finds the field a validation detail names", () => {
    expect(fieldFromDetail("missing field: reviewer")).toBe("reviewer");
    expect(fieldFromDetail("missing field: action")).toBe("action");
    expect(fieldFromDetail("amended_severity is not a severity")).toBe("amended_severity");
    expect(fieldFromDetail("completely unrelated")).toBeNull();
  });
});
