export type Catalog = Record<string, string[]>;
export type Weights = Record<string, Record<string, number>>;

export interface SessionBody {
  session_id: string;
  prompt: string;
  catalog: Catalog;
  weights: Weights;
  target_kind: string;
  last_job: string | null;
}

export interface JobStatus {
  job_id: string;
  session_id: string;
  state: "queued" | "running" | "done" | "failed";
  completed: number;
  requested: number;
  manifest: string | null;
  error: string | null;
}

export interface ResultCard {
  index: number;
  image_url: string;
  fused_prompt: string;
  assignment: Record<string, string>;
}

export interface JobResults {
  job_id: string;
  state: string;
  results: ResultCard[];
}
