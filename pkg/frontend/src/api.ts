/** Thin fetch client for the review service.  No retries, no caching:
 * every answer shown to the analyst comes straight from the server. */

import type {
  DecisionBody,
  DecisionResponse,
  FindingDetail,
  FindingPayload,
  GroupedIssues,
  ResultPayload,
  TraceHop,
} from "./types.js";

/** Non-2xx answer from the service, carrying its JSON error body. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly error: string,
    public readonly detail: string,
  ) {
    super(`${error}: ${detail}`);
    this.name = "ApiError";
  }
}

/** The service could not be reached at all (fetch rejected). */
export class UnreachableError extends Error {
  readonly cause: unknown;

  constructor(cause: unknown) {
    super("service unreachable");
    this.name = "UnreachableError";
    this.cause = cause;
  }
}

/** The slice of the fetch Response surface this client relies on. */
export interface ResponseLike {
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<ResponseLike>;

async function asApiError(response: ResponseLike): Promise<ApiError> {
  let error = `HTTP ${response.status}`;
  let detail = "";
  try {
    const body = (await response.json()) as { error?: string; detail?: string };
    if (body && typeof body === "object") {
      error = body.error ?? error;
      detail = body.detail ?? "";
    }
  } catch {
    // Non-JSON error body: keep the status-only message.
  }
  return new ApiError(response.status, error, detail);
}

export class ApiClient {
  constructor(private readonly fetchFn: FetchLike = (...a) => fetch(...a)) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: ResponseLike;
    try {
      response = await this.fetchFn(path, init);
    } catch (cause) {
      throw new UnreachableError(cause);
    }
    if (!response.ok) {
      throw await asApiError(response);
    }
    return (await response.json()) as T;
  }

  /** GET /api/findings with only the non-empty filter fields as params. */
  async listFindings(params: URLSearchParams): Promise<FindingPayload[]> {
    const qs = params.toString();
    const body = await this.request<{ findings: FindingPayload[] }>(
      qs ? `/api/findings?${qs}` : "/api/findings",
    );
    return body.findings;
  }

  async getFinding(id: string): Promise<FindingDetail> {
    const body = await this.request<{ finding: FindingDetail }>(
      `/api/findings/${encodeURIComponent(id)}`,
    );
    return body.finding;
  }

  async getGroups(): Promise<GroupedIssues> {
    const body = await this.request<{ grouped_issues: GroupedIssues }>("/api/groups");
    return body.grouped_issues;
  }

  async getTrace(id: string): Promise<TraceHop[]> {
    const body = await this.request<{ id: string; hops: TraceHop[] }>(
      `/api/trace/${encodeURIComponent(id)}`,
    );
    return body.hops;
  }

  async getResult(): Promise<ResultPayload> {
    return this.request<ResultPayload>("/api/result");
  }

  /** URL for the rendered page PNG; the <img> element does the actual GET. */
  pageImageUrl(pageReference: string): string {
    return `/api/pages/${encodeURIComponent(pageReference)}/image`;
  }

  async submitDecision(findingId: string, body: DecisionBody): Promise<DecisionResponse> {
    return this.request<DecisionResponse>(
      `/api/findings/${encodeURIComponent(findingId)}/decision`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      },
    );
  }

  async recalibrate(): Promise<ResultPayload> {
    const body = await this.request<{ result: ResultPayload }>("/api/recalibrate", {
      method: "POST",
    });
    return body.result;
  }
}
