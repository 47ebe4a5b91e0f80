/** DOM wiring for the clinician console.
 *
 * Flow: enter symptoms -> diagnose (posterior + per-disease evidence) ->
 * what-if budget slider (re-queries the engine on release; never
 * interpolates client-side) -> feedback form -> refreshed params panel.
 * Mutations render only after the server acknowledges them.
 */

import { ApiClient, ApiError } from "./api.js";
import {
  addSymptom,
  applyDiagnosis,
  applyPlan,
  canDiagnose,
  canRecommend,
  canSubmitFeedback,
  initialState,
  markInfeasible,
  markSubmitted,
  removeSymptom,
  setBudget,
  validateDraft,
  type SessionState,
} from "./state.js";
import {
  renderEmptyPlan,
  renderError,
  renderParams,
  renderPlan,
  renderPosterior,
  renderRetryBanner,
} from "./render.js";
import type { ExplainResponse, LikertDraft } from "./types.js";

declare global {
  interface Window {
    API_BASE?: string;
  }
}

const api = new ApiClient(window.API_BASE ?? "http://127.0.0.1:8000");
let state: SessionState = initialState();

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing element #${id}`);
  return found as T;
}

const symptomInput = el<HTMLInputElement>("symptom-input");
const symptomList = el<HTMLUListElement>("symptom-list");
const diagnoseButton = el<HTMLButtonElement>("diagnose-button");
const posteriorPanel = el<HTMLDivElement>("posterior-panel");
const budgetSlider = el<HTMLInputElement>("budget-slider");
const budgetValue = el<HTMLSpanElement>("budget-value");
const budgetUnlimited = el<HTMLInputElement>("budget-unlimited");
const planPanel = el<HTMLDivElement>("plan-panel");
const feedbackForm = el<HTMLFormElement>("feedback-form");
const feedbackStatus = el<HTMLDivElement>("feedback-status");
const submitFeedback = el<HTMLButtonElement>("submit-feedback");
const paramsPanel = el<HTMLDivElement>("params-panel");
const banner = el<HTMLDivElement>("banner");

function showBanner(html: string): void {
  banner.innerHTML = html;
}

function clearBanner(): void {
  banner.innerHTML = "";
}

function fail(error: unknown, retry: () => void): void {
  if (error instanceof ApiError) {
    showBanner(renderError(error.code, error.message));
  } else {
    showBanner(renderRetryBanner("network failure"));
    banner.querySelector<HTMLButtonElement>("[data-retry]")?.addEventListener(
      "click",
      () => {
        clearBanner();
        retry();
      },
      { once: true },
    );
  }
}

function syncControls(): void {
  diagnoseButton.disabled = !canDiagnose(state);
  budgetSlider.disabled = !canRecommend(state);
  budgetUnlimited.disabled = !canRecommend(state);
  submitFeedback.disabled = !canSubmitFeedback(state);
  symptomList.innerHTML = state.symptoms
    .map(
      (s) =>
        `<li>${s} <button type="button" data-remove="${s}" aria-label="remove ${s}">×</button></li>`,
    )
    .join("");
  for (const button of symptomList.querySelectorAll<HTMLButtonElement>("[data-remove]")) {
    button.addEventListener("click", () => {
      state = removeSymptom(state, button.dataset.remove ?? "");
      syncControls();
    });
  }
}

async function runDiagnosis(): Promise<void> {
  if (!canDiagnose(state)) return;
  clearBanner();
  try {
    const diagnosis = await api.diagnose(state.symptoms);
    const explanations = new Map<string, ExplainResponse>();
    for (const entry of diagnosis.entries) {
      explanations.set(entry.disease, await api.explain(entry.disease, state.symptoms));
    }
    state = applyDiagnosis(state, diagnosis, null);
    posteriorPanel.innerHTML = renderPosterior(diagnosis, explanations);
    planPanel.innerHTML = "";
    syncControls();
  } catch (error) {
    fail(error, runDiagnosis);
  }
}

function currentBudget(): number | null {
  return budgetUnlimited.checked ? null : Number(budgetSlider.value);
}

async function runRecommendation(): Promise<void> {
  if (!canRecommend(state)) return;
  clearBanner();
  state = setBudget(state, currentBudget());
  try {
    const response = await api.recommend(state.symptoms, state.profile, state.budget);
    state = applyPlan(state, response);
    planPanel.innerHTML = renderPlan(response, state.budget);
  } catch (error) {
    if (error instanceof ApiError && error.code === "NoFeasiblePlan") {
      state = markInfeasible(state);
      planPanel.innerHTML = renderEmptyPlan();
      return;
    }
    fail(error, runRecommendation);
  }
}

function readLikert(): LikertDraft | null {
  const accuracy = Number(el<HTMLSelectElement>("likert-accuracy").value);
  const reliability = Number(el<HTMLSelectElement>("likert-reliability").value);
  const usability = Number(el<HTMLSelectElement>("likert-usability").value);
  if (!accuracy && !reliability && !usability) return null;
  return { accuracy, reliability, usability };
}

function readDraft(): void {
  const diagnosisCorrect = feedbackForm.querySelector<HTMLInputElement>(
    'input[name="diagnosis-correct"]:checked',
  );
  const treatmentAccepted = feedbackForm.querySelector<HTMLInputElement>(
    'input[name="treatment-accepted"]:checked',
  );
  state = {
    ...state,
    draft: {
      ...state.draft,
      caseId: el<HTMLInputElement>("case-id").value || state.draft.caseId,
      diagnosisCorrect: diagnosisCorrect ? diagnosisCorrect.value === "yes" : null,
      treatmentAccepted: treatmentAccepted ? treatmentAccepted.value === "yes" : null,
      likert: readLikert(),
      correctedDiagnosis: el<HTMLInputElement>("corrected-diagnosis").value.trim(),
    },
  };
}

async function sendFeedback(): Promise<void> {
  readDraft();
  const problems = validateDraft(state.draft);
  if (problems.length > 0) {
    feedbackStatus.innerHTML = problems
      .map((p) => `<p class="invalid">${p.field}: ${p.message}</p>`)
      .join("");
    return;
  }
  if (!canSubmitFeedback(state)) {
    feedbackStatus.innerHTML = `<p class="invalid">feedback for this case was already submitted</p>`;
    return;
  }
  clearBanner();
  try {
    const draft = state.draft;
    await api.feedback({
      case_id: draft.caseId,
      diagnosis_correct: draft.diagnosisCorrect === true,
      treatment_accepted: draft.treatmentAccepted === true,
      ...(draft.likert ? { likert: draft.likert } : {}),
      ...(draft.correctedDiagnosis
        ? { corrected_diagnosis: draft.correctedDiagnosis }
        : {}),
    });
    const params = await api.params();
    state = markSubmitted(state, params);
    paramsPanel.innerHTML = renderParams(params);
    feedbackStatus.innerHTML = `<p class="acknowledged">feedback recorded</p>`;
    el<HTMLInputElement>("case-id").value = state.draft.caseId;
    syncControls();
  } catch (error) {
    fail(error, sendFeedback);
  }
}

async function refreshParams(): Promise<void> {
  try {
    const params = await api.params();
    state = { ...state, params };
    paramsPanel.innerHTML = renderParams(params);
  } catch (error) {
    fail(error, refreshParams);
  }
}

export function boot(): void {
  el<HTMLButtonElement>("add-symptom").addEventListener("click", () => {
    state = addSymptom(state, symptomInput.value);
    symptomInput.value = "";
    syncControls();
  });
  symptomInput.addEventListener("keydown", (event) => {
    if (event.key === "Enter") {
      event.preventDefault();
      state = addSymptom(state, symptomInput.value);
      symptomInput.value = "";
      syncControls();
    }
  });
  diagnoseButton.addEventListener("click", () => void runDiagnosis());
  budgetSlider.addEventListener("input", () => {
    budgetValue.textContent = budgetSlider.value;
  });
  // re-query on release, not on every tick
  budgetSlider.addEventListener("change", () => void runRecommendation());
  budgetUnlimited.addEventListener("change", () => void runRecommendation());
  feedbackForm.addEventListener("submit", (event) => {
    event.preventDefault();
    void sendFeedback();
  });
  el<HTMLInputElement>("case-id").value = state.draft.caseId;
  syncControls();
  void refreshParams();
}

boot();
