/** Wire types mirroring the review service JSON bodies. */

export type ConfidenceBand = "Confident" | "Ambiguous";
export type FlagStatus = "Open" | "Optimized" | "Decided";
export type Verdict = "Accept" | "Reject" | "Edit";

export interface FlagRecord {
  revision_id: string;
  contract_id: string;
  provision_number: string;
  probability_acceptable: number;
  confidence_band: ConfidenceBand;
  status: FlagStatus;
}

export interface EditOp {
  op: "Keep" | "Insert" | "Delete";
  tokens: string[];
}

export interface Candidate {
  text: string;
  /** Classifier reward exactly as the API reported it; never recomputed client-side. */
  reward: number;
  diff?: EditOp[];
}

export interface QueueItemDetail {
  flag: FlagRecord | null;
  provision: { number: string; title: string; template_text: string };
  original_text: string;
  revision_text: string;
  diff: EditOp[];
  candidates: Candidate[];
  chosen_index: number | null;
}

export interface DecisionRequest {
  verdict: Verdict;
  reviewer: string;
  candidate_index?: number | null;
  final_text?: string;
  force?: boolean;
}

export interface DecisionResponse {
  decision: Record<string, unknown>;
  new_revision_id: string | null;
  flag: FlagRecord;
}

export interface IngestResponse {
  contract_id: string;
  flags: FlagRecord[];
}

export interface OptimizationResult {
  source_revision_id: string;
  candidates: Candidate[];
  chosen_index: number;
  prompt_fingerprint: string;
}
