/** Canned service payloads for the contract tests, shaped exactly like the
 * review service's JSON answers for the bundled sample report. */

import type {
  ElementPayload,
  FindingPayload,
  GroupedIssues,
  ResultPayload,
  TraceHop,
} from "../src/types.js";

function finding(partial: Omit<FindingPayload, "level" | "status"> & {
  status?: FindingPayload["status"];
}): FindingPayload {
  return { level: "micro", status: "proposed", ...partial };
}

export const F001_01 = finding({
  id: "f001-01",
  title: "Operating margin compression accelerating",
  description: "Margin fell from 6.8% to 4.1% in a single quarter on rising input costs.",
  severity: "High",
  page_reference: "001",
  element_id: "p001-e02",
  excerpt: "operating margin compressed to 4.1%",
  bbox: [40, 120, 572, 180],
  category: "Profit/Financial Performance",
  links: ["f002-01"],
  group_id: "PF1",
});

export const F002_01 = finding({
  id: "f002-01",
  title: "Negative net profit for the quarter",
  description: "Net profit swung to -668.5 thousand USD, erasing the prior quarter's gain.",
  severity: "High",
  page_reference: "002",
  element_id: "p002-e02",
  excerpt: "-668.5",
  bbox: [40, 140, 572, 320],
  category: "Profit/Financial Performance",
  links: ["f001-01", "f002-02"],
  group_id: "PF1",
});

export const F002_02 = finding({
  id: "f002-02",
  title: "Interest and tax expenses remain high",
  description: "Fixed financial charges keep margins suppressed even when gross performance recovers.",
  severity: "Medium",
  page_reference: "002",
  element_id: "p002-e01",
  excerpt: "Interest and tax expenses remain high",
  bbox: [40, 40, 572, 100],
  category: "Profit/Financial Performance",
  links: ["f002-01"],
  group_id: "PF1",
});

export const F003_01 = finding({
  id: "f003-01",
  title: "Technology Offering score fell to 63%",
  description: "Clients rate the technology offering lower for the second consecutive cycle.",
  severity: "Medium",
  page_reference: "003",
  element_id: "p003-e01",
  excerpt: "Technology Offering score fell to 63%",
  bbox: [40, 40, 572, 100],
  category: "Performance/Operations",
  links: ["f003-02"],
  group_id: "PO1",
});

export const F003_02 = finding({
  id: "f003-02",
  title: "Win rate declining in Large Corporate segment",
  description: "Competitive win rate is eroding in the highest-value client segment.",
  severity: "High",
  page_reference: "003",
  element_id: "p003-e02",
  excerpt: "declining in Large Corporate",
  bbox: [40, 140, 572, 400],
  category: "Performance/Operations",
  links: ["f003-01"],
  group_id: "PO1",
});

export const F004_01 = finding({
  id: "f004-01",
  title: "Employee satisfaction dropped to 58%",
  description: "Pulse survey sentiment fell nine points, with workload the leading driver.",
  severity: "Medium",
  page_reference: "004",
  element_id: "p004-e01",
  excerpt: "satisfaction dropped to 58%",
  bbox: [40, 40, 572, 100],
  category: "Employee Satisfaction",
  links: ["f004-02"],
  group_id: "ES1",
});

export const F004_02 = finding({
  id: "f004-02",
  title: "Staffing below plan in the field",
  description: "Chronic understaffing leaves regional teams stretched thin and strains morale.",
  severity: "Low",
  page_reference: "004",
  element_id: "p004-e02",
  excerpt: "staffing remained below plan",
  bbox: [40, 140, 572, 200],
  category: "Employee Satisfaction",
  links: ["f004-01"],
  group_id: "ES1",
});

/** Triage order the service uses: severity rank desc, then page, then id. */
export const ALL_FINDINGS: FindingPayload[] = [
  F001_01,
  F002_01,
  F003_02,
  F002_02,
  F003_01,
  F004_01,
  F004_02,
];

export const HIGH_FINDINGS: FindingPayload[] = [F001_01, F002_01, F003_02];

export const MARGIN_FINDINGS: FindingPayload[] = [F001_01, F002_02];

export const GROUPS: GroupedIssues = {
  "Employee Satisfaction": [
    {
      group_id: "ES1",
      representative_issue: {
        title: "Employee satisfaction dropped to 58%",
        description: "Pulse survey sentiment fell nine points, with workload the leading driver.",
        severity: "Medium",
        page_reference: "004",
        related_issues: ["Staffing below plan in the field (page 004)"],
        priority_score: 4,
      },
    },
  ],
  "Performance/Operations": [
    {
      group_id: "PO1",
      representative_issue: {
        title: "Win rate declining in Large Corporate segment",
        description: "Competitive win rate is eroding in the highest-value client segment.",
        severity: "High",
        page_reference: "003",
        related_issues: ["Technology Offering score fell to 63% (page 003)"],
        priority_score: 7,
      },
    },
  ],
  "Profit/Financial Performance": [
    {
      group_id: "PF1",
      representative_issue: {
        title: "Operating margin compression accelerating",
        description: "Margin fell from 6.8% to 4.1% in a single quarter on rising input costs.",
        severity: "High",
        page_reference: "001",
        related_issues: [
          "Interest and tax expenses remain high (page 002)",
          "Negative net profit for the quarter (page 002)",
        ],
        priority_score: 7,
      },
    },
  ],
};

/** Page-002 table element the f002-01 excerpt is a cell of. */
export const ELEMENT_P002_E02: ElementPayload = {
  id: "p002-e02",
  kind: "table",
  bbox: [40, 140, 572, 320],
  text: "Metric\tQ1\tQ2\nRevenue\t8120.0\t7945.5\nNet profit\t412.3\t-668.5\nOperating margin %\t6.8\t4.1",
};

export const ELEMENT_P001_E02: ElementPayload = {
  id: "p001-e02",
  kind: "text",
  bbox: [40, 120, 572, 180],
  text: "Across the quarter the operating margin compressed to 4.1% as input costs rose faster than pricing could follow.",
};

export const ELEMENTS: Record<string, ElementPayload | null> = {
  "f001-01": ELEMENT_P001_E02,
  "f002-01": ELEMENT_P002_E02,
};

export const TRACE_ST01: TraceHop[] = [
  { id: "st01", level: "macro" },
  { id: "lv01", level: "meso" },
  {
    id: "f001-01",
    level: "micro",
    page_reference: "001",
    element_id: "p001-e02",
    excerpt: "operating margin compressed to 4.1%",
  },
];

export function makeResult(findings: FindingPayload[] = ALL_FINDINGS): ResultPayload {
  return {
    source: "report.pdf",
    generated_at: "1970-01-01T00:00:00Z",
    micro_findings: findings,
    grouped_issues: GROUPS,
    meso_levers: [
      {
        id: "lv01",
        lever_name: "pricing",
        target: { metric: "operating margin", value: 7.0, unit: "%" },
        steps: [
          "Audit discount ladders across the top fifty accounts",
          "Set quarterly price floors for loss-making lines",
        ],
        resources: { budget: 120000.0, currency: "USD", headcount: 2 },
        synergy_notes: "Firmer pricing protects the margin the marketing push must defend.",
        tradeoff_notes: "Price moves may cost marginal deals in price-sensitive accounts.",
        evidence_links: ["f001-01", "f002-01"],
      },
      {
        id: "lv03",
        lever_name: "staffing",
        target: { metric: "field staffing fill rate", value: 95.0, unit: "%" },
        steps: ["Reopen the regional requisitions frozen in Q1"],
        resources: { budget: 90000.0, currency: "USD", headcount: 4 },
        synergy_notes: "Restored capacity supports the margin program's delivery.",
        tradeoff_notes: "Hiring spend lands before the revenue it protects.",
        evidence_links: ["f004-02"],
      },
    ],
    macro_plan: [
      {
        id: "st01",
        initiative: "Margin defense program",
        sequence_index: 1,
        start_quarter: 1,
        cashflows: [-180000.0, 60000.0, 120000.0, 150000.0],
        discount_rate: 0.108,
        npv: 82171.94718737462,
        risk_note: "Price moves may accelerate churn in price-sensitive accounts.",
        lever_links: ["lv01"],
      },
    ],
    provenance: { st01: TRACE_ST01 },
  };
}
