/** Thin fetch client for the review service; errors carry the HTTP status. */

import type {
  DecisionRequest,
  DecisionResponse,
  FlagRecord,
  IngestResponse,
  OptimizationResult,
  QueueItemDetail,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface ApiOptions {
  token?: string;
  fetchFn?: FetchLike;
}

export class ApiClient {
  private readonly fetchFn: FetchLike;
  private readonly token?: string;

  constructor(
    public readonly baseUrl: string,
    options: ApiOptions = {},
  ) {
    this.fetchFn = options.fetchFn ?? ((url, init) => fetch(url, init));
    this.token = options.token;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) {
      headers["Authorization"] = `Bearer ${this.token}`;
    }
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, {
        method,
        headers,
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(0, `network failure: ${String(err)}`);
    }
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const parsed = (await response.json()) as { detail?: unknown };
        if (parsed.detail !== undefined) {
          detail = typeof parsed.detail === "string" ? parsed.detail : JSON.stringify(parsed.detail);
        }
      } catch {
        // body was not JSON; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  health(): Promise<{ status: string; model_version: number | null }> {
    return this.request("GET", "/health");
  }

  ingestContract(contract: unknown): Promise<IngestResponse> {
    return this.request("POST", "/contracts", contract);
  }

  getFlags(contractId: string): Promise<{ contract_id: string; flags: FlagRecord[] }> {
    return this.request("GET", `/contracts/${encodeURIComponent(contractId)}/flags`);
  }

  getRevision(revisionId: string): Promise<QueueItemDetail> {
    return this.request("GET", `/revisions/${encodeURIComponent(revisionId)}`);
  }

  optimize(revisionId: string): Promise<OptimizationResult> {
    return this.request("POST", `/revisions/${encodeURIComponent(revisionId)}/optimize`, {});
  }

  decide(revisionId: string, request: DecisionRequest): Promise<DecisionResponse> {
    return this.request("POST", `/revisions/${encodeURIComponent(revisionId)}/decision`, request);
  }

  retrain(minDecisions?: number): Promise<{ status: string; version?: number }> {
    const query = minDecisions === undefined ? "" : `?min_decisions=${minDecisions}`;
    return this.request("POST", `/retrain${query}`);
  }
}
