import type { Catalog, JobResults, JobStatus, SessionBody, Weights } from "./types.js";

export class ApiError extends Error {
  status: number;
  violations: string[];

  constructor(status: number, message: string, violations: string[] = []) {
    super(message);
    this.status = status;
    this.violations = violations;
  }
}

function extractViolations(detail: unknown): string[] {
  if (detail && typeof detail === "object" && "violations" in detail) {
    const v = (detail as { violations: unknown }).violations;
    if (Array.isArray(v)) return v.map(String);
  }
  if (typeof detail === "string") return [detail];
  return [];
}

/** Thin REST client; the server is the only place weights get normalized. */
export class Client {
  constructor(
    private baseUrl = "",
    private fetchFn: typeof fetch = globalThis.fetch.bind(globalThis),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let resp: Response;
    try {
      resp = await this.fetchFn(this.baseUrl + path, {
        headers: { "Content-Type": "application/json" },
        ...init,
      });
    } catch (err) {
      throw new ApiError(0, `server unreachable: ${String(err)}`);
    }
    if (!resp.ok) {
      let detail: unknown = null;
      try {
        detail = (await resp.json()).detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(
        resp.status,
        typeof detail === "string" ? detail : `request failed (${resp.status})`,
        extractViolations(detail),
      );
    }
    return (await resp.json()) as T;
  }

  createSession(prompt: string): Promise<SessionBody> {
    return this.request("/api/sessions", {
      method: "POST",
      body: JSON.stringify({ prompt }),
    });
  }

  getSession(sessionId: string): Promise<SessionBody> {
    return this.request(`/api/sessions/${sessionId}`);
  }

  putTable(
    sessionId: string,
    catalog: Catalog,
    weights: Weights,
    targetKind?: "custom" | "uniform",
  ): Promise<SessionBody> {
    const body =
      targetKind === undefined
        ? { catalog, weights }
        : { catalog, weights, target_kind: targetKind };
    return this.request(`/api/sessions/${sessionId}/table`, {
      method: "PUT",
      body: JSON.stringify(body),
    });
  }

  startGeneration(sessionId: string, n: number, seed?: number): Promise<{ job_id: string }> {
    return this.request(`/api/sessions/${sessionId}/generate`, {
      method: "POST",
      body: JSON.stringify(seed === undefined ? { n } : { n, seed }),
    });
  }

  jobStatus(jobId: string): Promise<JobStatus> {
    return this.request(`/api/jobs/${jobId}`);
  }

  jobResults(jobId: string): Promise<JobResults> {
    return this.request(`/api/jobs/${jobId}/results`);
  }
}
