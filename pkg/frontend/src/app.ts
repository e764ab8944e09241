/** Controller: owns the session state, talks to the service, re-renders.
 *
 * The server is the single source of truth — after any mutation the view is
 * rebuilt from fresh GETs, never from locally patched state.
 */

import { ApiClient, ApiError, UnreachableError } from "./api.js";
import {
  canSubmit,
  draftToBody,
  emptyDraft,
  emptyFilter,
  filterToParams,
  initialState,
  type Draft,
  type UiState,
} from "./state.js";
import {
  renderBanner,
  renderBusyBanner,
  renderDecisionForm,
  renderEvidencePane,
  renderFindingsList,
  renderPlanPanel,
  priorityIndex,
} from "./render.js";
import type {
  FindingDetail,
  FindingPayload,
  GroupedIssues,
  ResultPayload,
  TraceHop,
} from "./types.js";

export interface AppOptions {
  /** Poll interval while a recalibration is running (default 1000 ms). */
  pollIntervalMs?: number;
}

interface Sections {
  banner: HTMLElement;
  busyBanner: HTMLElement;
  filters: HTMLElement;
  findings: HTMLElement;
  evidence: HTMLElement;
  form: HTMLElement;
  plan: HTMLElement;
}

export class App {
  readonly state: UiState = initialState();

  private findings: FindingPayload[] = [];
  private groups: GroupedIssues = {};
  private result: ResultPayload | null = null;
  private detail: FindingDetail | null = null;
  private chain: TraceHop[] | null = null;
  private error: string | null = null;
  private validation: string | null = null;
  private submitting = false;
  private busySource: "self" | "conflict" | null = null;
  private pollTimer: ReturnType<typeof setInterval> | null = null;
  private readonly pollIntervalMs: number;
  private readonly sections: Sections;
  private readonly pending = new Set<Promise<unknown>>();

  constructor(
    root: HTMLElement,
    private readonly api: ApiClient,
    options: AppOptions = {},
  ) {
    this.pollIntervalMs = options.pollIntervalMs ?? 1000;
    this.sections = this.buildSkeleton(root);
  }

  /** First load; also the target of the banner's Retry button. */
  async init(): Promise<void> {
    await this.refresh();
  }

  /** Resolves when every in-flight operation has settled (test hook). */
  async settled(): Promise<void> {
    while (this.pending.size > 0) {
      await Promise.allSettled([...this.pending]);
    }
  }

  // -- skeleton ------------------------------------------------------------

  private buildSkeleton(root: HTMLElement): Sections {
    const banner = document.createElement("div");
    banner.className = "error-banner";
    banner.hidden = true;

    const busyBanner = document.createElement("div");
    busyBanner.className = "busy-banner";
    busyBanner.hidden = true;

    const filters = this.buildFilterBar();

    const findings = document.createElement("section");
    findings.className = "findings-list";

    const evidence = document.createElement("section");
    evidence.className = "evidence-pane";

    const form = document.createElement("section");
    form.className = "decision-section";

    const plan = document.createElement("aside");
    plan.className = "plan-panel";

    const main = document.createElement("main");
    const middle = document.createElement("div");
    middle.className = "evidence-column";
    middle.append(evidence, form);
    main.append(findings, middle, plan);

    root.append(banner, busyBanner, filters, main);
    return { banner, busyBanner, filters, findings, evidence, form, plan };
  }

  private buildFilterBar(): HTMLElement {
    const bar = document.createElement("section");
    bar.className = "filter-bar";

    const severity = document.createElement("select");
    severity.name = "filter-severity";
    for (const value of ["", "High", "Medium", "Low"]) {
      const option = document.createElement("option");
      option.value = value;
      option.textContent = value || "any severity";
      severity.append(option);
    }

    const status = document.createElement("select");
    status.name = "filter-status";
    for (const value of ["", "proposed", "accepted", "amended", "discarded"]) {
      const option = document.createElement("option");
      option.value = value;
      option.textContent = value || "any status";
      status.append(option);
    }

    const keyword = document.createElement("input");
    keyword.name = "filter-keyword";
    keyword.placeholder = "keyword";

    const page = document.createElement("input");
    page.name = "filter-page";
    page.placeholder = "page";

    const apply = document.createElement("button");
    apply.type = "button";
    apply.className = "apply-filter";
    apply.textContent = "Apply";
    apply.addEventListener("click", () => {
      this.state.filter = {
        ...emptyFilter(),
        severity: severity.value,
        status: status.value,
        keyword: keyword.value,
        page: page.value,
      };
      this.track(this.refresh());
    });

    const clearButton = document.createElement("button");
    clearButton.type = "button";
    clearButton.className = "clear-filter";
    clearButton.textContent = "Clear";
    clearButton.addEventListener("click", () => {
      severity.value = "";
      status.value = "";
      keyword.value = "";
      page.value = "";
      this.state.filter = emptyFilter();
      this.track(this.refresh());
    });

    bar.append(severity, status, keyword, page, apply, clearButton);
    return bar;
  }

  // -- data loading --------------------------------------------------------

  /** Re-pull everything the view shows from the server and re-render. */
  async refresh(): Promise<void> {
    try {
      const params = filterToParams(this.state.filter);
      const [findings, groups, result] = await Promise.all([
        this.api.listFindings(params),
        this.api.getGroups(),
        this.api.getResult(),
      ]);
      this.findings = findings;
      this.groups = groups;
      this.result = result;
      this.error = null;
      if (this.state.selectedFindingId) {
        await this.reloadDetail(this.state.selectedFindingId);
      }
      if (this.busySource === "conflict") {
        // The other session's recalibration no longer blocks reads; resume.
        this.setBusy(null);
      }
    } catch (err) {
      this.error = describeError(err);
    }
    this.renderAll();
  }

  private async reloadDetail(id: string): Promise<void> {
    try {
      this.detail = await this.api.getFinding(id);
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        this.state.selectedFindingId = null;
        this.detail = null;
      } else {
        throw err;
      }
    }
  }

  async select(id: string): Promise<void> {
    this.state.selectedFindingId = id;
    this.validation = null;
    try {
      await this.reloadDetail(id);
      this.error = null;
    } catch (err) {
      this.error = describeError(err);
    }
    this.renderAll();
  }

  /** Load the provenance chain for a lever or plan step into the pane. */
  async loadTrace(recordId: string): Promise<void> {
    try {
      this.chain = await this.api.getTrace(recordId);
      this.error = null;
      const last = this.chain[this.chain.length - 1];
      if (last && last.level === "micro") {
        this.state.selectedFindingId = last.id;
        await this.reloadDetail(last.id);
      }
    } catch (err) {
      this.error = describeError(err);
    }
    this.renderAll();
  }

  // -- mutations -----------------------------------------------------------

  async submitDecision(): Promise<void> {
    const id = this.state.selectedFindingId;
    if (!id || this.state.busy || this.submitting) {
      return;
    }
    this.submitting = true;
    this.validation = null;
    this.renderForm();
    try {
      await this.api.submitDecision(id, draftToBody(this.state.draft));
      // Only the server's refreshed answer updates the view (no optimism).
      this.submitting = false;
      await this.refresh();
      this.state.draft = emptyDraft();
      this.renderForm();
    } catch (err) {
      this.submitting = false;
      if (err instanceof ApiError && err.status === 422) {
        this.validation = err.detail || err.message;
      } else if (err instanceof ApiError && err.status === 409) {
        this.setBusy("conflict");
      } else {
        this.error = describeError(err);
      }
      this.renderAll();
    }
  }

  async recalibrate(): Promise<void> {
    if (this.state.busy) {
      return;
    }
    this.setBusy("self");
    this.renderAll();
    try {
      await this.api.recalibrate();
      this.setBusy(null);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.setBusy("conflict");
      } else {
        this.setBusy(null);
        this.error = describeError(err);
      }
    }
    await this.refresh();
  }

  // -- busy / polling ------------------------------------------------------

  private setBusy(source: "self" | "conflict" | null): void {
    this.busySource = source;
    this.state.busy = source !== null;
    if (this.state.busy) {
      this.startPolling();
    } else {
      this.stopPolling();
    }
  }

  private startPolling(): void {
    if (this.pollTimer !== null) {
      return;
    }
    this.pollTimer = setInterval(() => {
      this.track(this.refresh());
    }, this.pollIntervalMs);
  }

  private stopPolling(): void {
    if (this.pollTimer !== null) {
      clearInterval(this.pollTimer);
      this.pollTimer = null;
    }
  }

  // -- rendering -----------------------------------------------------------

  private renderAll(): void {
    renderBanner(this.sections.banner, this.error, () => {
      this.track(this.refresh());
    });
    renderBusyBanner(this.sections.busyBanner, this.state.busy);
    renderFindingsList(
      this.sections.findings,
      this.findings,
      priorityIndex(this.groups),
      this.state.selectedFindingId,
      { onSelect: (id) => this.track(this.select(id)) },
    );
    renderEvidencePane(this.sections.evidence, this.detail, this.chain, {
      onHop: (hop) => {
        if (hop.level === "micro") {
          this.track(this.select(hop.id));
        } else {
          this.track(this.loadTrace(hop.id));
        }
      },
      pageImageUrl: (ref) => this.api.pageImageUrl(ref),
    });
    this.renderForm();
    renderPlanPanel(this.sections.plan, this.result, this.state.busy, {
      onTrace: (recordId) => this.track(this.loadTrace(recordId)),
      onRecalibrate: () => this.track(this.recalibrate()),
    });
  }

  private renderForm(): void {
    if (!this.state.selectedFindingId) {
      this.sections.form.replaceChildren();
      return;
    }
    renderDecisionForm(
      this.sections.form,
      this.state.draft,
      this.state.busy || this.submitting,
      this.validation,
      {
        onDraftChange: (patch) => this.applyDraftPatch(patch),
        onSubmit: () => this.track(this.submitDecision()),
      },
    );
  }

  /** Keystroke path: update state and the submit gate without rebuilding the
   * form (a full rebuild would drop input focus); structural changes
   * (switching action) do rebuild it. */
  private applyDraftPatch(patch: Partial<Draft>): void {
    const structural = patch.action !== undefined && patch.action !== this.state.draft.action;
    Object.assign(this.state.draft, patch);
    if (structural) {
      this.renderForm();
      return;
    }
    const submit = this.sections.form.querySelector<HTMLButtonElement>(".submit-decision");
    if (submit) {
      submit.disabled = this.state.busy || this.submitting || !canSubmit(this.state.draft);
    }
  }

  private track<T>(promise: Promise<T>): Promise<T> {
    this.pending.add(promise);
    void promise.finally(() => this.pending.delete(promise));
    return promise;
  }
}

function describeError(err: unknown): string {
  if (err instanceof UnreachableError) {
    return "Service unreachable";
  }
  if (err instanceof ApiError) {
    return `${err.error} (${err.status}): ${err.detail}`;
  }
  return String(err);
}

function bootstrap(): void {
  const root = document.getElementById("app");
  if (!root) {
    return;
  }
  const app = new App(root, new ApiClient());
  void app.init();
}

if (typeof document !== "undefined") {
  if (document.readyState === "loading") {
    document.addEventListener("DOMContentLoaded", bootstrap);
  } else {
    bootstrap();
  }
}
