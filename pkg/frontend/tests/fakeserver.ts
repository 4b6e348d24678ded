import type { Catalog, JobStatus, ResultCard, SessionBody, Weights } from "../src/types.js";

/**
 * In-memory stand-in for the session service, mirroring its contract:
 * catalog validation with violation lists, per-category weight
 * renormalization, one active job per session (409), and polled jobs that
 * complete after a configurable number of status reads.
 */
export class FakeServer {
  sessions = new Map<string, SessionBody>();
  jobs = new Map<string, JobStatus & { ticksLeft: number; cards: ResultCard[] }>();
  detectCatalog: Catalog = {
    gender: ["male", "female", "non-binary"],
    age: ["young adult", "middle-aged", "elderly"],
    race: ["White", "Asian", "Black", "Hispanic"],
  };
  jobTicks = 2;
  private nextSession = 0;
  private nextJob = 0;

  fetch = async (input: RequestInfo | URL, init?: RequestInit): Promise<Response> => {
    const url = String(input);
    const method = (init?.method ?? "GET").toUpperCase();
    const body = init?.body ? JSON.parse(String(init.body)) : null;

    let m: RegExpMatchArray | null;
    if (url.endsWith("/api/sessions") && method === "POST") {
      return this.createSession(body.prompt);
    }
    if ((m = url.match(/\/api\/sessions\/([^/]+)\/table$/)) && method === "PUT") {
      return this.putTable(m[1], body.catalog, body.weights, body.target_kind);
    }
    if ((m = url.match(/\/api\/sessions\/([^/]+)\/generate$/)) && method === "POST") {
      return this.startJob(m[1], body.n);
    }
    if ((m = url.match(/\/api\/sessions\/([^/]+)$/)) && method === "GET") {
      const s = this.sessions.get(m[1]);
      return s ? json(s) : error(404, "unknown session");
    }
    if ((m = url.match(/\/api\/jobs\/([^/]+)$/)) && method === "GET") {
      return this.jobStatus(m[1]);
    }
    if ((m = url.match(/\/api\/jobs\/([^/]+)\/results$/)) && method === "GET") {
      const job = this.jobs.get(m[1]);
      if (!job) return error(404, "unknown job");
      return json({ job_id: job.job_id, state: job.state, results: job.cards });
    }
    return error(404, `no route for ${method} ${url}`);
  };

  private createSession(prompt: string): Response {
    if (!prompt || !prompt.trim()) return error(422, "prompt text is empty");
    const catalog = structuredClone(this.detectCatalog);
    const weights: Weights = {};
    for (const [cat, attrs] of Object.entries(catalog)) {
      weights[cat] = Object.fromEntries(attrs.map((a) => [a, 1 / attrs.length]));
    }
    const session: SessionBody = {
      session_id: `s${this.nextSession++}`,
      prompt,
      catalog,
      weights,
      target_kind: "custom",
      last_job: null,
    };
    this.sessions.set(session.session_id, session);
    return json(session);
  }

  private validateCatalog(catalog: Catalog): string[] {
    const violations: string[] = [];
    const cats = Object.keys(catalog);
    if (cats.length < 2) {
      violations.push(`catalog has only ${cats.length} categories (at least 2 required)`);
    }
    for (const [cat, attrs] of Object.entries(catalog)) {
      if (attrs.length < 2) {
        violations.push(
          `category '${cat}' has only ${attrs.length} attributes (at least 2 required)`,
        );
      }
    }
    return violations;
  }

  private putTable(
    sessionId: string,
    catalog: Catalog,
    weights: Weights,
    targetKind?: string,
  ): Response {
    const session = this.sessions.get(sessionId);
    if (!session) return error(404, "unknown session");
    const active = session.last_job && this.jobs.get(session.last_job);
    if (active && (active.state === "queued" || active.state === "running")) {
      return error(409, "a generation job is running for this session");
    }
    const violations = this.validateCatalog(catalog);
    if (violations.length) return errorDetail(422, { violations });
    if (targetKind !== undefined && targetKind !== "custom" && targetKind !== "uniform") {
      return errorDetail(422, { violations: [`unknown target kind '${targetKind}'`] });
    }
    const normalized: Weights = {};
    for (const [cat, attrs] of Object.entries(catalog)) {
      const given = weights[cat] ?? {};
      let total = 0;
      for (const a of attrs) {
        const v = given[a] ?? 0;
        if (v < 0) return errorDetail(422, { violations: [`negative weight in '${cat}'`] });
        total += v;
      }
      if (total <= 0) {
        return errorDetail(422, { violations: [`weights for '${cat}' sum to zero`] });
      }
      normalized[cat] = Object.fromEntries(attrs.map((a) => [a, (given[a] ?? 0) / total]));
    }
    session.catalog = structuredClone(catalog);
    session.weights = normalized;
    if (targetKind !== undefined) session.target_kind = targetKind;
    return json(session);
  }

  private startJob(sessionId: string, n: number): Response {
    const session = this.sessions.get(sessionId);
    if (!session) return error(404, "unknown session");
    const active = session.last_job && this.jobs.get(session.last_job);
    if (active && (active.state === "queued" || active.state === "running")) {
      return error(409, "a generation job is already running");
    }
    const jobId = `job-${this.nextJob++}`;
    const cards: ResultCard[] = Array.from({ length: n }, (_, i) => {
      const assignment = Object.fromEntries(
        Object.entries(session.catalog).map(([cat, attrs]) => [cat, attrs[i % attrs.length]]),
      );
      return {
        index: i,
        image_url: `/runs/${jobId}/${i}.png`,
        fused_prompt: `${session.prompt}, ${Object.values(assignment).join(", ")}`,
        assignment,
      };
    });
    this.jobs.set(jobId, {
      job_id: jobId,
      session_id: sessionId,
      state: "running",
      completed: 0,
      requested: n,
      manifest: jobId,
      error: null,
      ticksLeft: this.jobTicks,
      cards,
    });
    session.last_job = jobId;
    return json({ job_id: jobId });
  }

  private jobStatus(jobId: string): Response {
    const job = this.jobs.get(jobId);
    if (!job) return error(404, "unknown job");
    if (job.state === "running") {
      job.ticksLeft -= 1;
      job.completed = Math.round(
        job.requested * (1 - Math.max(job.ticksLeft, 0) / this.jobTicks),
      );
      if (job.ticksLeft <= 0) {
        job.state = "done";
        job.completed = job.requested;
      }
    }
    const { ticksLeft, cards, ...status } = job;
    void ticksLeft;
    void cards;
    return json(status);
  }
}

function json(data: unknown, status = 200): Response {
  return new Response(JSON.stringify(data), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

function error(status: number, message: string): Response {
  return json({ detail: message }, status);
}

function errorDetail(status: number, detail: unknown): Response {
  return json({ detail }, status);
}
