/** Pure HTML renderers.
 *
 * Every number shown to the clinician is the API value passed through
 * String() and wrapped in <span data-num> so tests can assert byte
 * fidelity against recorded responses. No rounding, no re-ranking.
 */

import type {
  AuditEntry,
  DiagnoseResponse,
  EvidencePath,
  ExplainResponse,
  ParamsResponse,
  RecommendResponse,
} from "./types.js";

function esc(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

export function num(value: number): string {
  return `<span data-num>${String(value)}</span>`;
}

function renderEvidence(path: EvidencePath): string {
  const label = path.edge_type === null ? "no edge" : esc(path.edge_type);
  const marker = path.floored ? " (smoothing floor)" : "";
  return `<li class="evidence">${esc(path.symptom)}: ${label} ${num(path.weight)}${marker}</li>`;
}

export function renderPosterior(
  diagnosis: DiagnoseResponse,
  explanations: Map<string, ExplainResponse>,
): string {
  const items = diagnosis.entries.map((entry) => {
    const paths = explanations.get(entry.disease)?.paths;
    const evidence = paths
      ? `<ul>${paths.map(renderEvidence).join("")}</ul>`
      : "";
    return (
      `<li class="diagnosis" data-disease="${esc(entry.disease)}">` +
      `<strong>${esc(entry.disease)}</strong> ${num(entry.probability)}${evidence}</li>`
    );
  });
  return (
    `<ol class="posterior" data-epsilon="${String(diagnosis.epsilon)}">` +
    items.join("") +
    `</ol>`
  );
}

export function renderPlan(response: RecommendResponse, budget: number | null): string {
  const plan = response.plan;
  const chosen = plan.chosen.map((id) => `<li>${esc(id)}</li>`).join("");
  const budgetLine =
    budget === null
      ? `<p class="budget">no budget limit</p>`
      : `<p class="budget">cost ${num(plan.total_cost)} of budget ${String(budget)}` +
        ` — ${plan.budget_ok ? "within budget" : "over budget"}` +
        `${response.constrained ? ` (multiplier ${num(plan.lambda_final)})` : ""}</p>`;
  const breakdown = plan.per_disease_breakdown
    .map(
      (row) =>
        `<tr><td>${esc(row.disease)}</td><td>${num(row.probability)}</td>` +
        `<td>${num(row.utility)}</td></tr>`,
    )
    .join("");
  return (
    `<div class="plan">` +
    `<ul class="chosen">${chosen}</ul>` +
    `<p>expected utility ${num(plan.expected_utility)}</p>` +
    `<p>total cost ${num(plan.total_cost)}</p>` +
    budgetLine +
    `<table class="breakdown"><thead><tr><th>disease</th><th>probability</th>` +
    `<th>utility</th></tr></thead><tbody>${breakdown}</tbody></table>` +
    `</div>`
  );
}

export function renderEmptyPlan(): string {
  return `<div class="plan plan-empty">No feasible plan fits this budget.</div>`;
}

function renderAudit(entry: AuditEntry): string {
  const rows = Object.keys(entry.after)
    .sort()
    .map((name) => {
      const before = entry.before[name];
      const after = entry.after[name];
      const changed = before !== after ? ` class="changed"` : "";
      return `<tr${changed}><td>${esc(name)}</td><td>${num(before)}</td><td>${num(after)}</td></tr>`;
    })
    .join("");
  return (
    `<table class="audit" data-update="${String(entry.update_id)}">` +
    `<thead><tr><th>parameter</th><th>before</th><th>after</th></tr></thead>` +
    `<tbody>${rows}</tbody></table>`
  );
}

export function renderParams(response: ParamsResponse): string {
  const current = Object.keys(response.params)
    .sort()
    .map((name) => `<li>${esc(name)} = ${num(response.params[name])}</li>`)
    .join("");
  const latest = response.audit.at(-1);
  return (
    `<div class="params"><ul class="live">${current}</ul>` +
    (latest ? renderAudit(latest) : `<p class="no-audit">no updates yet</p>`) +
    `</div>`
  );
}

export function renderError(code: string, detail: string): string {
  return `<div class="banner error" data-code="${esc(code)}">${esc(detail)}</div>`;
}

export function renderRetryBanner(message: string): string {
  return `<div class="banner retry">${esc(message)} <button data-retry>retry</button></div>`;
}
