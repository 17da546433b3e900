/** Review queue view-model: flag list, detail view, decision flow, conflicts.
 *
 * The store holds a session cache of server state only; reloading always
 * refetches, so the UI reproduces the server exactly after a refresh.
 * Rewards and diffs are displayed verbatim as the API reported them.
 */

import { ApiError } from "./api.js";
import type {
  DecisionRequest,
  DecisionResponse,
  FlagRecord,
  OptimizationResult,
  QueueItemDetail,
  Verdict,
} from "./types.js";

/** Subset of the service client the queue consumes (mockable in tests). */
export interface QueueApi {
  getFlags(contractId: string): Promise<{ contract_id: string; flags: FlagRecord[] }>;
  getRevision(revisionId: string): Promise<QueueItemDetail>;
  optimize(revisionId: string): Promise<OptimizationResult>;
  decide(revisionId: string, request: DecisionRequest): Promise<DecisionResponse>;
}

/** Ambiguous flags first, then ascending acceptability, id as tiebreak.
 * Mirrors the server's queue ordering so local re-sorts never disagree. */
export function sortFlags(flags: FlagRecord[]): FlagRecord[] {
  return [...flags].sort((a, b) => {
    const bandA = a.confidence_band === "Ambiguous" ? 0 : 1;
    const bandB = b.confidence_band === "Ambiguous" ? 0 : 1;
    if (bandA !== bandB) return bandA - bandB;
    if (a.probability_acceptable !== b.probability_acceptable) {
      return a.probability_acceptable - b.probability_acceptable;
    }
    return a.revision_id < b.revision_id ? -1 : a.revision_id > b.revision_id ? 1 : 0;
  });
}

export interface Banner {
  kind: "error" | "auth" | "info";
  message: string;
}

export interface ConflictState {
  revisionId: string;
  request: DecisionRequest;
  message: string;
}

export class QueueStore {
  flags: FlagRecord[] = [];
  contractId: string | null = null;
  selectedId: string | null = null;
  detail: QueueItemDetail | null = null;
  banner: Banner | null = null;
  conflict: ConflictState | null = null;
  validationError: string | null = null;
  busy = false;

  constructor(
    private readonly api: QueueApi,
    public reviewer: string = "reviewer",
  ) {}

  /** Load (or reload) the flag queue; API failures surface as banners. */
  async loadQueue(contractId: string): Promise<void> {
    this.contractId = contractId;
    this.banner = null;
    try {
      const response = await this.api.getFlags(contractId);
      this.flags = sortFlags(response.flags);
      if (this.selectedId && !this.flags.some((f) => f.revision_id === this.selectedId)) {
        this.selectedId = null;
        this.detail = null;
      }
    } catch (err) {
      this.applyError(err);
    }
  }

  get openFlags(): FlagRecord[] {
    return this.flags.filter((f) => f.status !== "Decided");
  }

  get isEmpty(): boolean {
    return this.openFlags.length === 0;
  }

  async select(revisionId: string): Promise<void> {
    this.selectedId = revisionId;
    this.validationError = null;
    try {
      this.detail = await this.api.getRevision(revisionId);
    } catch (err) {
      this.detail = null;
      this.applyError(err);
    }
  }

  /** Request rewrite candidates for the selected item. */
  async optimizeSelected(): Promise<void> {
    if (!this.selectedId) return;
    this.busy = true;
    try {
      await this.api.optimize(this.selectedId);
      await this.select(this.selectedId);
      await this.refreshFlags();
    } catch (err) {
      this.applyError(err);
    } finally {
      this.busy = false;
    }
  }

  /** Client-side validation mirroring the server's 422 rules. */
  validateDecision(verdict: Verdict, finalText?: string): string | null {
    if (verdict === "Edit" && !(finalText ?? "").trim()) {
      return "Edit decisions need replacement text.";
    }
    return null;
  }

  async submitDecision(
    verdict: Verdict,
    options: { candidateIndex?: number | null; finalText?: string; force?: boolean } = {},
  ): Promise<boolean> {
    if (!this.selectedId) return false;
    const clientError = this.validateDecision(verdict, options.finalText);
    if (clientError) {
      this.validationError = clientError; // blocked client-side, no request
      return false;
    }
    const request: DecisionRequest = {
      verdict,
      reviewer: this.reviewer,
      candidate_index: options.candidateIndex ?? null,
      final_text: options.finalText ?? "",
      force: options.force ?? false,
    };
    this.validationError = null;
    this.busy = true;
    try {
      const response = await this.api.decide(this.selectedId, request);
      this.conflict = null;
      this.applyFlagUpdate(response.flag);
      await this.select(this.selectedId);
      return true;
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.conflict = {
          revisionId: this.selectedId,
          request,
          message: err.detail,
        };
        return false;
      }
      if (err instanceof ApiError && err.status === 422) {
        this.validationError = err.detail;
        return false;
      }
      this.applyError(err);
      return false;
    } finally {
      this.busy = false;
    }
  }

  /** User chose "decide anyway" in the conflict dialog. */
  async resolveConflictWithForce(): Promise<boolean> {
    if (!this.conflict) return false;
    const { request } = this.conflict;
    this.conflict = null;
    return this.submitDecision(request.verdict, {
      candidateIndex: request.candidate_index,
      finalText: request.final_text,
      force: true,
    });
  }

  dismissConflict(): void {
    this.conflict = null;
  }

  dismissBanner(): void {
    this.banner = null;
  }

  private async refreshFlags(): Promise<void> {
    if (this.contractId) {
      const response = await this.api.getFlags(this.contractId);
      this.flags = sortFlags(response.flags);
    }
  }

  private applyFlagUpdate(flag: FlagRecord): void {
    this.flags = sortFlags(
      this.flags.map((f) => (f.revision_id === flag.revision_id ? flag : f)),
    );
  }

  private applyError(err: unknown): void {
    if (err instanceof ApiError && err.status === 401) {
      this.banner = { kind: "auth", message: "Authorization required: set your access token." };
    } else if (err instanceof ApiError) {
      this.banner = { kind: "error", message: err.message };
    } else {
      this.banner = { kind: "error", message: String(err) };
    }
  }
}
