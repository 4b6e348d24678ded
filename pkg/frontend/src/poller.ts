import type { Client } from "./api.js";
import type { JobStatus } from "./types.js";

export interface PollOptions {
  intervalMs?: number;
  onProgress?: (status: JobStatus) => void;
}

const sleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

/**
 * Poll a job until it reaches a terminal state. Resolves with the final
 * status for both "done" and "failed"; the caller decides how to render a
 * failure. Progress callbacks fire on every poll, enabling incremental
 * result rendering.
 */
export async function pollJob(
  client: Client,
  jobId: string,
  { intervalMs = 1000, onProgress }: PollOptions = {},
): Promise<JobStatus> {
  for (;;) {
    const status = await client.jobStatus(jobId);
    onProgress?.(status);
    if (status.state === "done" || status.state === "failed") {
      return status;
    }
    await sleep(intervalMs);
  }
}
