/** Thin typed client over the engine HTTP API. No number munging here. */

import type {
  ApiErrorBody,
  DiagnoseResponse,
  ExplainResponse,
  FeedbackRequest,
  FeedbackResponse,
  GraphStats,
  ParamsResponse,
  RecommendResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    detail: string,
  ) {
    super(detail);
  }
}

async function parse<T>(response: Response): Promise<T> {
  if (response.ok) {
    return (await response.json()) as T;
  }
  let code = "HttpError";
  let detail = `${response.status}`;
  try {
    const body = (await response.json()) as Partial<ApiErrorBody>;
    if (body.error) code = body.error;
    if (body.detail) detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(response.status, code, detail);
}

export class ApiClient {
  constructor(private readonly base: string) {}

  private url(path: string): string {
    return this.base.replace(/\/$/, "") + path;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return fetch(this.url(path), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    }).then((r) => parse<T>(r));
  }

  private get<T>(path: string): Promise<T> {
    return fetch(this.url(path)).then((r) => parse<T>(r));
  }

  diagnose(symptoms: string[]): Promise<DiagnoseResponse> {
    return this.post("/diagnose", { symptoms });
  }

  explain(disease: string, symptoms: string[]): Promise<ExplainResponse> {
    const query = new URLSearchParams({ disease, symptoms: symptoms.join(",") });
    return this.get(`/explain?${query}`);
  }

  recommend(
    symptoms: string[],
    profile: Record<string, number>,
    cMax: number | null,
  ): Promise<RecommendResponse> {
    const body: Record<string, unknown> = { symptoms, profile };
    if (cMax !== null) {
      body.c_max = cMax;
    }
    return this.post("/recommend", body);
  }

  feedback(event: FeedbackRequest): Promise<FeedbackResponse> {
    return this.post("/feedback", event);
  }

  params(): Promise<ParamsResponse> {
    return this.get("/params");
  }

  stats(): Promise<GraphStats> {
    return this.get("/graph/stats");
  }

  health(): Promise<{ status: string }> {
    return this.get("/healthz");
  }
}
