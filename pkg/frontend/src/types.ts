/** Response shapes of the engine API. The console renders these verbatim. */

export interface PosteriorEntry {
  disease: string;
  probability: number;
}

export interface DiagnoseResponse {
  entries: PosteriorEntry[];
  epsilon: number;
}

export interface EvidencePath {
  symptom: string;
  edge_type: string | null;
  weight: number;
  floored: boolean;
}

export interface ExplainResponse {
  disease: string;
  paths: EvidencePath[];
}

export interface DiseaseContribution {
  disease: string;
  probability: number;
  utility: number;
}

export interface Plan {
  chosen: string[];
  expected_utility: number;
  total_cost: number;
  lambda_final: number;
  budget_ok: boolean;
  per_disease_breakdown: DiseaseContribution[];
}

export interface RecommendResponse {
  posterior: PosteriorEntry[];
  plan: Plan;
  constrained: boolean;
}

export interface LikertDraft {
  accuracy: number;
  reliability: number;
  usability: number;
}

export interface FeedbackRequest {
  case_id: string;
  diagnosis_correct: boolean;
  treatment_accepted: boolean;
  likert?: LikertDraft;
  corrected_diagnosis?: string;
  clinician_id?: string;
}

export interface AuditEntry {
  update_id: number;
  events: number;
  before: Record<string, number>;
  after: Record<string, number>;
  reward_before: number;
  reward_after: number;
}

export interface FeedbackResponse {
  accepted: boolean;
  params_updated: boolean;
  audit: AuditEntry;
}

export interface ParamsResponse {
  params: Record<string, number>;
  audit: AuditEntry[];
}

export interface GraphStats {
  nodes: number;
  edges: number;
  capacity: { max_edges: number; batch_budget: number };
  batch_counter: number;
  params: Record<string, number>;
}

export interface ApiErrorBody {
  error: string;
  detail: string;
}
