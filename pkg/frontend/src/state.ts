/** Client-side session state and its invariants.  Nothing here persists:
 * a reload starts from the server's truth. */

import type { DecisionAction, FindingPayload } from "./types.js";

export interface Filter {
  severity: string;
  category: string;
  page: string;
  level: string;
  keyword: string;
  status: string;
}

export interface Draft {
  action: DecisionAction | "";
  reviewer: string;
  note: string;
  amendedTitle: string;
  amendedDescription: string;
  amendedSeverity: string;
}

export interface UiState {
  filter: Filter;
  selectedFindingId: string | null;
  draft: Draft;
  /** True while a recalibration is running (ours or another session's). */
  busy: boolean;
}

export function emptyFilter(): Filter {
  return { severity: "", category: "", page: "", level: "", keyword: "", status: "" };
}

export function emptyDraft(): Draft {
  return {
    action: "",
    reviewer: "",
    note: "",
    amendedTitle: "",
    amendedDescription: "",
    amendedSeverity: "",
  };
}

export function initialState(): UiState {
  return {
    filter: emptyFilter(),
    selectedFindingId: null,
    draft: emptyDraft(),
    busy: false,
  };
}

/** Query parameters for GET /api/findings: only the non-empty fields. */
export function filterToParams(filter: Filter): URLSearchParams {
  const params = new URLSearchParams();
  for (const key of ["severity", "category", "page", "level", "keyword", "status"] as const) {
    const value = filter[key].trim();
    if (value) {
      params.set(key, value);
    }
  }
  return params;
}

/** An amend draft counts as edited once any amendable field is non-empty. */
export function amendEdited(draft: Draft): boolean {
  return Boolean(
    draft.amendedTitle.trim() || draft.amendedDescription.trim() || draft.amendedSeverity,
  );
}

/** Submission gate: action and reviewer are always required, and an amend
 * additionally requires at least one edited field. */
export function canSubmit(draft: Draft): boolean {
  if (!draft.action || !draft.reviewer.trim()) {
    return false;
  }
  if (draft.action === "amend" && !amendEdited(draft)) {
    return false;
  }
  return true;
}

/** Request body for POST .../decision; empty optional fields are omitted. */
export function draftToBody(draft: Draft): {
  action: DecisionAction;
  reviewer: string;
  note?: string;
  amended_title?: string;
  amended_description?: string;
  amended_severity?: string;
} {
  if (!draft.action) {
    throw new Error("draft has no action");
  }
  const body: ReturnType<typeof draftToBody> = {
    action: draft.action,
    reviewer: draft.reviewer,
  };
  if (draft.note.trim()) body.note = draft.note;
  if (draft.amendedTitle.trim()) body.amended_title = draft.amendedTitle;
  if (draft.amendedDescription.trim()) body.amended_description = draft.amendedDescription;
  if (draft.amendedSeverity) body.amended_severity = draft.amendedSeverity;
  return body;
}

export interface CategorySection {
  category: string;
  findings: FindingPayload[];
}

/** Split findings into category-labelled sections without reordering a
 * single row: consecutive rows sharing a category form one section, so the
 * flattened list is exactly the server's response order. */
export function groupByCategory(findings: FindingPayload[]): CategorySection[] {
  const sections: CategorySection[] = [];
  for (const finding of findings) {
    const last = sections[sections.length - 1];
    if (last && last.category === finding.category) {
      last.findings.push(finding);
    } else {
      sections.push({ category: finding.category, findings: [finding] });
    }
  }
  return sections;
}
