/** Session state and its pure transitions.
 *
 * The console never computes domain numbers: state carries API responses
 * untouched and the transitions only gate what the user may do next (a plan
 * is only shown after a diagnosis, a case can be submitted once, Likert
 * values must sit in 1..5 before any request leaves the browser).
 */

import type {
  DiagnoseResponse,
  ExplainResponse,
  LikertDraft,
  ParamsResponse,
  RecommendResponse,
} from "./types.js";

export type PlanState = "none" | "ok" | "infeasible";

export interface FeedbackDraft {
  caseId: string;
  diagnosisCorrect: boolean | null;
  treatmentAccepted: boolean | null;
  likert: LikertDraft | null;
  correctedDiagnosis: string;
}

export interface SessionState {
  symptoms: string[];
  profile: Record<string, number>;
  diagnosis: DiagnoseResponse | null;
  explanation: ExplainResponse | null;
  recommendation: RecommendResponse | null;
  planState: PlanState;
  budget: number | null; // null = unlimited
  draft: FeedbackDraft;
  submittedCases: string[];
  params: ParamsResponse | null;
}

export function initialState(): SessionState {
  return {
    symptoms: [],
    profile: {},
    diagnosis: null,
    explanation: null,
    recommendation: null,
    planState: "none",
    budget: null,
    draft: emptyDraft("case-1"),
    submittedCases: [],
    params: null,
  };
}

export function emptyDraft(caseId: string): FeedbackDraft {
  return {
    caseId,
    diagnosisCorrect: null,
    treatmentAccepted: null,
    likert: null,
    correctedDiagnosis: "",
  };
}

export function addSymptom(state: SessionState, id: string): SessionState {
  const trimmed = id.trim();
  if (!trimmed || state.symptoms.includes(trimmed)) {
    return state;
  }
  return { ...state, symptoms: [...state.symptoms, trimmed] };
}

export function removeSymptom(state: SessionState, id: string): SessionState {
  return { ...state, symptoms: state.symptoms.filter((s) => s !== id) };
}

/** Diagnosis may only be requested with at least one symptom entered. */
export function canDiagnose(state: SessionState): boolean {
  return state.symptoms.length > 0;
}

export function applyDiagnosis(
  state: SessionState,
  diagnosis: DiagnoseResponse,
  explanation: ExplainResponse | null,
): SessionState {
  return {
    ...state,
    diagnosis,
    explanation,
    recommendation: null,
    planState: "none",
  };
}

/** The what-if panel is reachable only once a diagnosis exists. */
export function canRecommend(state: SessionState): boolean {
  return state.diagnosis !== null;
}

export function applyPlan(
  state: SessionState,
  recommendation: RecommendResponse,
): SessionState {
  return { ...state, recommendation, planState: "ok" };
}

export function markInfeasible(state: SessionState): SessionState {
  return { ...state, recommendation: null, planState: "infeasible" };
}

export function setBudget(state: SessionState, budget: number | null): SessionState {
  return { ...state, budget };
}

export interface DraftProblem {
  field: string;
  message: string;
}

/** Client-side validation mirroring the API contract. */
export function validateDraft(draft: FeedbackDraft): DraftProblem[] {
  const problems: DraftProblem[] = [];
  if (!draft.caseId.trim()) {
    problems.push({ field: "caseId", message: "case id is required" });
  }
  if (draft.diagnosisCorrect === null) {
    problems.push({ field: "diagnosisCorrect", message: "mark the diagnosis correct or not" });
  }
  if (draft.treatmentAccepted === null) {
    problems.push({ field: "treatmentAccepted", message: "mark the treatment accepted or not" });
  }
  if (draft.likert !== null) {
    for (const dim of ["accuracy", "reliability", "usability"] as const) {
      const value = draft.likert[dim];
      if (!Number.isInteger(value) || value < 1 || value > 5) {
        problems.push({ field: `likert.${dim}`, message: `${dim} must be an integer in 1..5` });
      }
    }
  }
  return problems;
}

/** Duplicate-submission guard: one feedback event per case id. */
export function canSubmitFeedback(state: SessionState): boolean {
  return (
    validateDraft(state.draft).length === 0 &&
    !state.submittedCases.includes(state.draft.caseId)
  );
}

export function markSubmitted(state: SessionState, params: ParamsResponse): SessionState {
  const caseId = state.draft.caseId;
  const n = state.submittedCases.length + 2;
  return {
    ...state,
    submittedCases: [...state.submittedCases, caseId],
    draft: emptyDraft(`case-${n}`),
    params,
  };
}
