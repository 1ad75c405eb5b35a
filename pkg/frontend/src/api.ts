/** Typed client for the service's /v1 JSON API. Every call goes through
 * request() below, so the only URLs this app can reach are /v1 paths. */

export interface RelevanceDecision {
  accepted: boolean;
  top_score: number;
  threshold: number;
  margin: number;
}

export interface Verdict {
  action: string;
  triggered: string[];
  transformed_text: string | null;
  notes: string[];
}

export interface RailReport {
  input_verdict: Verdict;
  output_verdict: Verdict | null;
  timings: Record<string, number>;
}

export interface AudioRef {
  uri: string;
  format: string;
}

export type Route = "retrieval" | "generation" | "refusal" | "escalated" | "error";

export interface AnswerEnvelope {
  answer_text: string;
  answer_audio: AudioRef | null;
  route_taken: Route;
  relevance: RelevanceDecision | null;
  provenance: Record<string, unknown> | null;
  moderation_id: string | null;
  rail_report: RailReport;
  timings: Record<string, number>;
  corpus_version: number;
  index_version: number;
  warnings: string[];
}

export interface ModerationItem {
  id: string;
  query_text: string;
  reason: string;
  created_at: string;
  status: string;
  resolution: Record<string, unknown> | null;
}

export interface QueuePage {
  items: ModerationItem[];
  next_cursor: string | null;
}

export interface ResolveReceipt {
  record_id: string;
  corpus_version: number;
  index_version: number;
}

export interface HealthInfo {
  status: string;
  corpus_version: number;
  index_version: number;
}

/** Non-2xx responses carry {code, message, trace_id}. */
export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public traceId: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export class NetworkError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "NetworkError";
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private getToken: () => string,
  ) {}

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    let resp: Response;
    try {
      resp = await fetch(this.baseUrl + path, {
        method,
        headers: {
          Authorization: `Bearer ${this.getToken()}`,
          ...(body !== undefined ? { "Content-Type": "application/json" } : {}),
        },
        body: body !== undefined ? JSON.stringify(body) : undefined,
      });
    } catch (err) {
      throw new NetworkError(err instanceof Error ? err.message : String(err));
    }
    if (resp.status === 204) {
      return undefined as T;
    }
    const text = await resp.text();
    if (!resp.ok) {
      let code = "unknown";
      let message = text || resp.statusText;
      let traceId = "";
      try {
        const parsed = JSON.parse(text);
        code = parsed.code ?? code;
        message = parsed.message ?? message;
        traceId = parsed.trace_id ?? "";
      } catch {
        /* non-JSON error body; keep raw text */
      }
      throw new ApiError(resp.status, code, message, traceId);
    }
    return JSON.parse(text) as T;
  }

  ask(text: string, lang: string, sessionId: string): Promise<AnswerEnvelope> {
    return this.request<AnswerEnvelope>("POST", "/v1/ask", {
      text,
      lang,
      session_id: sessionId,
    });
  }

  queue(status = "open", cursor?: string, limit = 50): Promise<QueuePage> {
    const params = new URLSearchParams({ status, limit: String(limit) });
    if (cursor) params.set("cursor", cursor);
    return this.request<QueuePage>("GET", `/v1/moderation/queue?${params}`);
  }

  resolve(
    itemId: string,
    answer: string,
    theme: string,
    subTheme: string,
  ): Promise<ResolveReceipt> {
    return this.request<ResolveReceipt>(
      "POST",
      `/v1/moderation/${encodeURIComponent(itemId)}/resolve`,
      { answer, theme, sub_theme: subTheme },
    );
  }

  health(): Promise<HealthInfo> {
    return this.request<HealthInfo>("GET", "/v1/health");
  }
}
