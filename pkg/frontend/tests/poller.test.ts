import { describe, expect, it } from "vitest";

import { Client } from "../src/api.js";
import { pollJob } from "../src/poller.js";
import type { JobStatus } from "../src/types.js";
import { FakeServer } from "./fakeserver.js";

const PROMPT = "A portrait photo of a computer programmer";

describe("pollJob", () => {
  it("polls until done and reports progress", async () => {
    const server = new FakeServer();
    server.jobTicks = 3;
    const client = new Client("", server.fetch);
    const session = await client.createSession(PROMPT);
    const { job_id } = await client.startGeneration(session.session_id, 6);

    const seen: JobStatus[] = [];
    const final = await pollJob(client, job_id, {
      intervalMs: 1,
      onProgress: (s) => seen.push(s),
    });

    expect(final.state).toBe("done");
    expect(final.completed).toBe(6);
    expect(seen.length).toBeGreaterThanOrEqual(3);
    const completions = seen.map((s) => s.completed);
    expect([...completions].sort((a, b) => a - b)).toEqual(completions); // monotone
  });

  it("resolves with the failed state instead of throwing", async () => {
    const server = new FakeServer();
    const client = new Client("", server.fetch);
    const session = await client.createSession(PROMPT);
    const { job_id } = await client.startGeneration(session.session_id, 2);
    const job = server.jobs.get(job_id)!;
    job.state = "failed";
    job.error = "backend exploded";

    const final = await pollJob(client, job_id, { intervalMs: 1 });
    expect(final.state).toBe("failed");
    expect(final.error).toBe("backend exploded");
  });

  it("propagates 404 for unknown jobs", async () => {
    const server = new FakeServer();
    const client = new Client("", server.fetch);
    await expect(pollJob(client, "ghost", { intervalMs: 1 })).rejects.toMatchObject({
      status: 404,
    });
  });
});
