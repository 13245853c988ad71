/** Typed client for the review service's HTTP API.
 *
 * Every method maps to one endpoint and returns the parsed JSON body
 * untouched — the UI never recomputes or reshapes server numbers. Non-2xx
 * responses throw ApiError carrying the status and the server's "error"
 * message so views can surface failures inline.
 */

export type Facet = "compliant" | "noncompliant";
export type Decision = "accept" | "reject";

export interface SearchHit {
  snippet_id: string;
  code: string;
  distance: number;
  rank: number;
}

export interface SearchResponse {
  results: SearchHit[];
  model_hash: string;
  model_tag: string;
}

export interface Health {
  status: string;
  model_hash: string;
}

export interface AcceptanceMetrics {
  model_tag: string | null;
  compliant: number | null;
  noncompliant: number | null;
  overall: number | null;
  n_judgments: number;
}

export interface JudgmentPayload {
  id: string;
  policy_text: string;
  snippet_id: string;
  facet: Facet;
  model_tag: string;
  decision: Decision;
  reviewer: string;
}

export type FetchFn = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function parse<T>(response: Response): Promise<T> {
  let body: unknown = null;
  try {
    body = await response.json();
  } catch {
    // non-JSON bodies fall through to the status-only error below
  }
  if (!response.ok) {
    const message =
      body && typeof body === "object" && typeof (body as { error?: unknown }).error === "string"
        ? (body as { error: string }).error
        : `request failed with status ${response.status}`;
    throw new ApiError(response.status, message);
  }
  return body as T;
}

export class Api {
  constructor(private readonly fetchFn: FetchFn = (input, init) => fetch(input, init)) {}

  private get(path: string): Promise<Response> {
    return this.fetchFn(path);
  }

  private post(path: string, payload: unknown): Promise<Response> {
    return this.fetchFn(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  async health(): Promise<Health> {
    return parse<Health>(await this.get("/health"));
  }

  /** Served model tags; the server shuffles the order on every request, so
   * taking the first element is a masked random pick. */
  async modelTags(): Promise<string[]> {
    const body = await parse<{ model_tags: string[] }>(await this.get("/models"));
    return body.model_tags;
  }

  async search(
    policyText: string,
    facet: Facet,
    k: number,
    modelTag?: string,
  ): Promise<SearchResponse> {
    const payload: Record<string, unknown> = { policy_text: policyText, facet, k };
    if (modelTag !== undefined) payload.model_tag = modelTag;
    return parse<SearchResponse>(await this.post("/search", payload));
  }

  async judge(payload: JudgmentPayload): Promise<{ id: string }> {
    return parse<{ id: string }>(await this.post("/judgments", payload));
  }

  async acceptance(modelTag?: string): Promise<AcceptanceMetrics> {
    const path =
      modelTag === undefined
        ? "/metrics/acceptance"
        : `/metrics/acceptance?model_tag=${encodeURIComponent(modelTag)}`;
    return parse<AcceptanceMetrics>(await this.get(path));
  }
}
