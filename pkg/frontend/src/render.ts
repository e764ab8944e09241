/** DOM builders for the three panes.  Pure construction from data the server
 * returned; every displayed string is the verbatim API value. */

import type {
  BBox,
  FindingDetail,
  FindingPayload,
  GroupedIssues,
  ResultPayload,
  TraceHop,
} from "./types.js";
import { canSubmit, groupByCategory, type Draft } from "./state.js";

type Child = Node | string;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: Child[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  for (const child of children) {
    node.append(child);
  }
  return node;
}

function clear(container: HTMLElement): void {
  while (container.firstChild) {
    container.removeChild(container.firstChild);
  }
}

export function severityBadge(severity: string): HTMLElement {
  return el(
    "span",
    { class: `badge severity-badge severity-${severity.toLowerCase()}` },
    [severity],
  );
}

export function statusBadge(status: string): HTMLElement {
  return el(
    "span",
    { class: `badge status-badge status-${status.toLowerCase()}`, "data-status": status },
    [status],
  );
}

/** group_id -> priority_score, flattened from GET /api/groups. */
export function priorityIndex(groups: GroupedIssues): Map<string, number> {
  const index = new Map<string, number>();
  for (const bucket of Object.values(groups)) {
    for (const group of bucket) {
      index.set(group.group_id, group.representative_issue.priority_score);
    }
  }
  return index;
}

export interface ListHandlers {
  onSelect(findingId: string): void;
}

/** The findings list: sections per category (first-appearance order), rows in
 * the server's own order, severity/status badges and group priority scores. */
export function renderFindingsList(
  container: HTMLElement,
  findings: FindingPayload[],
  priorities: Map<string, number>,
  selectedId: string | null,
  handlers: ListHandlers,
): void {
  clear(container);
  if (findings.length === 0) {
    container.append(el("p", { class: "empty-state" }, ["No findings"]));
    return;
  }
  for (const section of groupByCategory(findings)) {
    container.append(el("h3", { class: "category-header" }, [section.category]));
    const list = el("ul", { class: "finding-rows" });
    for (const finding of section.findings) {
      const row = el("li", {
        class: `finding-row${finding.id === selectedId ? " selected" : ""}`,
        "data-id": finding.id,
      });
      const button = el("button", { type: "button", class: "finding-select" }, [
        severityBadge(finding.severity),
        statusBadge(finding.status),
        el("span", { class: "finding-title" }, [finding.title]),
        el("span", { class: "finding-page" }, [`page ${finding.page_reference}`]),
      ]);
      if (finding.group_id) {
        const score = priorities.get(finding.group_id);
        button.append(
          el("span", { class: "group-chip", "data-group": finding.group_id }, [
            score === undefined
              ? finding.group_id
              : `${finding.group_id} · priority ${score}`,
          ]),
        );
      }
      button.addEventListener("click", () => handlers.onSelect(finding.id));
      row.append(button);
      list.append(row);
    }
    container.append(list);
  }
}

export function renderBanner(container: HTMLElement, message: string | null, onRetry: () => void): void {
  clear(container);
  if (message === null) {
    container.hidden = true;
    return;
  }
  container.hidden = false;
  const retry = el("button", { type: "button", class: "retry" }, ["Retry"]);
  retry.addEventListener("click", onRetry);
  container.append(el("span", { class: "error-text" }, [message]), retry);
}

export function renderBusyBanner(container: HTMLElement, busy: boolean): void {
  clear(container);
  container.hidden = !busy;
  if (busy) {
    container.append("Recalibration in progress…");
  }
}

function positionOverlay(overlay: HTMLElement, img: HTMLImageElement, bbox: BBox): void {
  const width = img.naturalWidth;
  const height = img.naturalHeight;
  if (!width || !height) {
    return;
  }
  const [x0, y0, x1, y1] = bbox;
  overlay.style.left = `${(x0 / width) * 100}%`;
  overlay.style.top = `${(y0 / height) * 100}%`;
  overlay.style.width = `${((x1 - x0) / width) * 100}%`;
  overlay.style.height = `${((y1 - y0) / height) * 100}%`;
}

/** Element text with the first verbatim occurrence of the excerpt wrapped in
 * <mark>; the full text is always shown, never truncated. */
export function highlightedText(text: string, excerpt: string): Child[] {
  if (!excerpt) {
    return [text];
  }
  const at = text.indexOf(excerpt);
  if (at < 0) {
    return [text];
  }
  return [
    text.slice(0, at),
    el("mark", { class: "excerpt-mark" }, [excerpt]),
    text.slice(at + excerpt.length),
  ];
}

export interface EvidenceHandlers {
  onHop(hop: TraceHop): void;
  pageImageUrl(pageReference: string): string;
}

function breadcrumb(chain: TraceHop[], handlers: EvidenceHandlers): HTMLElement {
  const nav = el("nav", { class: "trace-breadcrumb", "aria-label": "trace" });
  chain.forEach((hop, index) => {
    if (index > 0) {
      nav.append(el("span", { class: "crumb-sep" }, ["→"]));
    }
    const crumb = el(
      "button",
      { type: "button", class: "crumb", "data-id": hop.id, "data-level": hop.level },
      [`${hop.id} (${hop.level})`],
    );
    crumb.addEventListener("click", () => handlers.onHop(hop));
    nav.append(crumb);
  });
  return nav;
}

/** The evidence pane: page image with the finding's box drawn over it, the
 * element text with the excerpt highlighted, and the provenance breadcrumb. */
export function renderEvidencePane(
  container: HTMLElement,
  detail: FindingDetail | null,
  chain: TraceHop[] | null,
  handlers: EvidenceHandlers,
): void {
  clear(container);
  if (chain) {
    container.append(breadcrumb(chain, handlers));
  }
  if (!detail) {
    if (!chain) {
      container.append(el("p", { class: "empty-state" }, ["Select a finding"]));
    }
    return;
  }

  container.append(
    el("header", { class: "finding-header" }, [
      el("h2", {}, [`${detail.id} — ${detail.title}`]),
      severityBadge(detail.severity),
      statusBadge(detail.status),
      el("p", { class: "finding-description" }, [detail.description]),
      el("p", { class: "finding-origin" }, [
        `page ${detail.page_reference} · element ${detail.element_id}` +
          (detail.group_id ? ` · group ${detail.group_id}` : ""),
      ]),
    ]),
  );

  if (!detail.element) {
    container.append(el("p", { class: "source-unavailable" }, ["source unavailable"]));
    if (detail.excerpt) {
      container.append(
        el("blockquote", { class: "excerpt-only" }, [detail.excerpt]),
      );
    }
    return;
  }

  const wrap = el("div", { class: "evidence-image" });
  const img = el("img", {
    src: handlers.pageImageUrl(detail.page_reference),
    alt: `page ${detail.page_reference}`,
  });
  wrap.append(img);
  if (detail.bbox) {
    const overlay = el("div", { class: "bbox-overlay" });
    const bbox = detail.bbox;
    const place = () => positionOverlay(overlay, img, bbox);
    if (img.complete && img.naturalWidth > 0) {
      place();
    } else {
      img.addEventListener("load", place);
    }
    wrap.append(overlay);
  }
  img.addEventListener("error", () => {
    clear(wrap);
    wrap.append(el("p", { class: "source-unavailable" }, ["source unavailable"]));
  });
  container.append(wrap);

  container.append(
    el("section", { class: "element-text" }, [
      el("h4", {}, [`Element ${detail.element.id} (${detail.element.kind})`]),
      el("pre", { class: "element-payload" }, highlightedText(detail.element.text, detail.excerpt)),
    ]),
  );
}

export interface FormHandlers {
  onDraftChange(patch: Partial<Draft>): void;
  onSubmit(): void;
}

const FIELD_NAMES = [
  "action",
  "reviewer",
  "note",
  "amended_title",
  "amended_description",
  "amended_severity",
] as const;

/** Which form field a validation detail string talks about, if any. */
export function fieldFromDetail(detail: string): string | null {
  for (const name of FIELD_NAMES) {
    if (detail.includes(name)) {
      return name;
    }
  }
  return null;
}

export function renderDecisionForm(
  container: HTMLElement,
  draft: Draft,
  busy: boolean,
  validation: string | null,
  handlers: FormHandlers,
): void {
  clear(container);
  const form = el("form", { class: "decision-form" });
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    handlers.onSubmit();
  });

  const actionSelect = el("select", { name: "action", class: "field-action" });
  actionSelect.append(el("option", { value: "" }, ["— action —"]));
  for (const action of ["accept", "amend", "discard"]) {
    const option = el("option", { value: action }, [action]);
    if (draft.action === action) {
      option.selected = true;
    }
    actionSelect.append(option);
  }
  actionSelect.addEventListener("change", () =>
    handlers.onDraftChange({ action: actionSelect.value as Draft["action"] }),
  );

  const reviewer = el("input", {
    name: "reviewer",
    class: "field-reviewer",
    placeholder: "reviewer",
    value: draft.reviewer,
  });
  reviewer.addEventListener("input", () => handlers.onDraftChange({ reviewer: reviewer.value }));

  const note = el("input", {
    name: "note",
    class: "field-note",
    placeholder: "note (optional)",
    value: draft.note,
  });
  note.addEventListener("input", () => handlers.onDraftChange({ note: note.value }));

  form.append(actionSelect, reviewer, note);

  if (draft.action === "amend") {
    const amendBox = el("fieldset", { class: "amend-fields" }, [
      el("legend", {}, ["Amended fields (at least one required)"]),
    ]);
    const title = el("input", {
      name: "amended_title",
      class: "field-amended-title",
      placeholder: "amended title",
      value: draft.amendedTitle,
    });
    title.addEventListener("input", () =>
      handlers.onDraftChange({ amendedTitle: title.value }),
    );
    const description = el("input", {
      name: "amended_description",
      class: "field-amended-description",
      placeholder: "amended description",
      value: draft.amendedDescription,
    });
    description.addEventListener("input", () =>
      handlers.onDraftChange({ amendedDescription: description.value }),
    );
    const severity = el("select", { name: "amended_severity", class: "field-amended-severity" });
    severity.append(el("option", { value: "" }, ["— severity —"]));
    for (const value of ["High", "Medium", "Low"]) {
      const option = el("option", { value }, [value]);
      if (draft.amendedSeverity === value) {
        option.selected = true;
      }
      severity.append(option);
    }
    severity.addEventListener("change", () =>
      handlers.onDraftChange({ amendedSeverity: severity.value }),
    );
    amendBox.append(title, description, severity);
    form.append(amendBox);
  }

  const submit = el(
    "button",
    { type: "submit", class: "submit-decision" },
    ["Submit decision"],
  );
  submit.disabled = busy || !canSubmit(draft);
  form.append(submit);

  if (validation) {
    form.append(el("p", { class: "validation-error" }, [validation]));
    const field = fieldFromDetail(validation);
    if (field) {
      const target = form.querySelector(`[name="${field}"]`);
      if (target) {
        target.classList.add("invalid");
      }
    }
  }

  container.append(form);
}

export interface PlanHandlers {
  onTrace(recordId: string): void;
  onRecalibrate(): void;
}

/** Side panel: levers and plan steps from GET /api/result, plus the
 * recalibrate control.  Step and lever rows load their provenance trace. */
export function renderPlanPanel(
  container: HTMLElement,
  result: ResultPayload | null,
  busy: boolean,
  handlers: PlanHandlers,
): void {
  clear(container);
  const recal = el(
    "button",
    { type: "button", class: "recalibrate" },
    ["Recalibrate"],
  );
  recal.disabled = busy;
  recal.addEventListener("click", () => handlers.onRecalibrate());
  container.append(el("h3", {}, ["Plan"]), recal);

  if (!result) {
    return;
  }

  const levers = el("ul", { class: "lever-rows" });
  for (const lever of result.meso_levers) {
    const row = el("li", { class: "lever-row", "data-id": lever.id });
    const button = el("button", { type: "button", class: "lever-trace" }, [
      `${lever.id} · ${lever.lever_name}`,
    ]);
    button.addEventListener("click", () => handlers.onTrace(lever.id));
    row.append(
      button,
      el("span", { class: "lever-evidence" }, [
        ` evidence: ${lever.evidence_links.join(", ")}`,
      ]),
    );
    levers.append(row);
  }
  container.append(el("h4", {}, ["Levers"]), levers);

  const steps = el("ol", { class: "step-rows" });
  for (const step of result.macro_plan) {
    const row = el("li", { class: "step-row", "data-id": step.id });
    const button = el("button", { type: "button", class: "step-trace" }, [
      `${step.id} · ${step.initiative}`,
    ]);
    button.addEventListener("click", () => handlers.onTrace(step.id));
    row.append(
      button,
      el("span", { class: "step-npv" }, [` NPV ${step.npv.toFixed(2)}`]),
    );
    steps.append(row);
  }
  container.append(el("h4", {}, ["Steps"]), steps);
}
