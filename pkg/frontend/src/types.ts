/** Wire types for the review service HTTP API (the only network surface). */

export type Severity = "High" | "Medium" | "Low";
export type FindingStatus = "proposed" | "accepted" | "amended" | "discarded";
export type DecisionAction = "accept" | "amend" | "discard";

/** [x0, y0, x1, y1] in page-image pixel coordinates. */
export type BBox = [number, number, number, number];

export interface FindingPayload {
  id: string;
  level: "micro" | "meso" | "macro";
  title: string;
  description: string;
  severity: Severity;
  page_reference: string;
  element_id: string;
  excerpt: string;
  bbox?: BBox;
  category: string;
  links: string[];
  status: FindingStatus;
  group_id: string | null;
}

export interface ElementPayload {
  id: string;
  kind: "text" | "table" | "figure";
  bbox: BBox;
  text: string;
}

export interface FindingDetail extends FindingPayload {
  element: ElementPayload | null;
}

export interface RepresentativeIssue {
  title: string;
  description: string;
  severity: Severity;
  page_reference: string;
  related_issues: string[];
  priority_score: number;
}

export interface IssueGroupPayload {
  group_id: string;
  representative_issue: RepresentativeIssue;
}

export type GroupedIssues = Record<string, IssueGroupPayload[]>;

export interface TraceHop {
  id: string;
  level: "micro" | "meso" | "macro";
  page_reference?: string;
  element_id?: string;
  excerpt?: string;
}

export interface LeverPayload {
  id: string;
  lever_name: string;
  target: { metric: string; value: number; unit: string };
  steps: string[];
  resources: { budget: number; currency: string; headcount: number };
  synergy_notes: string;
  tradeoff_notes: string;
  evidence_links: string[];
}

export interface PlanStepPayload {
  id: string;
  initiative: string;
  sequence_index: number;
  start_quarter: number;
  cashflows: number[];
  discount_rate: number;
  npv: number;
  risk_note: string;
  lever_links: string[];
}

export interface ResultPayload {
  source: string;
  generated_at: string;
  micro_findings: unknown[];
  grouped_issues: GroupedIssues;
  meso_levers: LeverPayload[];
  macro_plan: PlanStepPayload[];
  provenance: Record<string, TraceHop[]>;
}

export interface DecisionBody {
  action: DecisionAction;
  reviewer: string;
  note?: string;
  amended_title?: string;
  amended_description?: string;
  amended_severity?: string;
}

export interface DecisionResponse {
  decision: Record<string, unknown>;
  finding: FindingPayload;
  copy: FindingPayload | null;
}
