import { ApiError, Client } from "./api.js";
import { pollJob } from "./poller.js";
import { renderResults, renderStatus, renderTable } from "./render.js";
import type { SessionBody } from "./types.js";
import { TableViewModel } from "./viewmodel.js";

const client = new Client();

const promptInput = document.getElementById("prompt") as HTMLInputElement;
const submitButton = document.getElementById("submit") as HTMLButtonElement;
const tableBox = document.getElementById("table") as HTMLElement;
const statusBox = document.getElementById("status") as HTMLElement;
const generateButton = document.getElementById("generate") as HTMLButtonElement;
const countInput = document.getElementById("count") as HTMLInputElement;
const targetSelect = document.getElementById("target") as HTMLSelectElement;
const resultsBox = document.getElementById("results") as HTMLElement;

let session: SessionBody | null = null;
let vm: TableViewModel | null = null;
let generating = false;

function redraw(): void {
  if (!vm) return;
  renderTable(tableBox, vm, {
    onSlider: (c, a, v) => {
      vm!.setSlider(c, a, v);
      redraw();
    },
    onRemoveAttribute: (c, a) => {
      vm!.removeAttribute(c, a);
      redraw();
    },
    onAddAttribute: (c, a) => {
      vm!.addAttribute(c, a);
      redraw();
    },
    onRemoveCategory: (c) => {
      vm!.removeCategory(c);
      redraw();
    },
    onAddCategory: (c, attrs) => {
      vm!.addCategory(c, attrs);
      redraw();
    },
    onApply: () => void applyEdits(),
  });
  generateButton.disabled = generating || vm.dirty || vm.violations.length > 0;
}

async function submitPrompt(): Promise<void> {
  const text = promptInput.value.trim();
  if (!text) {
    renderStatus(statusBox, "enter a prompt first", "warn");
    return;
  }
  renderStatus(statusBox, "detecting attributes...");
  try {
    session = await client.createSession(text);
  } catch (err) {
    const detail = err instanceof ApiError ? err.message : String(err);
    renderStatus(statusBox, `detection failed: ${detail} (retry when the server is up)`, "error");
    return;
  }
  vm = TableViewModel.fromSession(session);
  targetSelect.value = session.target_kind === "uniform" ? "uniform" : "custom";
  resultsBox.replaceChildren();
  renderStatus(statusBox, "review the detected table, then generate");
  redraw();
}

async function applyEdits(): Promise<void> {
  if (!session || !vm) return;
  const body = vm.toUpdateBody();
  const targetKind = targetSelect.value === "uniform" ? "uniform" : "custom";
  try {
    const stored = await client.putTable(
      session.session_id,
      body.catalog,
      body.weights,
      targetKind,
    );
    session = stored;
    vm.applyServer(stored);
    renderStatus(statusBox, "table saved");
  } catch (err) {
    if (err instanceof ApiError && err.status === 422) {
      vm.applyViolations(err.violations.length ? err.violations : [err.message]);
      renderStatus(statusBox, "the server rejected the table; fix and re-apply", "warn");
    } else if (err instanceof ApiError && err.status === 409) {
      renderStatus(statusBox, "a generation job is running; wait for it to finish", "warn");
    } else {
      renderStatus(statusBox, `save failed: ${String(err)}`, "error");
    }
  }
  redraw();
}

async function generate(): Promise<void> {
  if (!session) return;
  const n = Math.max(1, Number(countInput.value) || 4);
  generating = true;
  redraw();
  try {
    const { job_id } = await client.startGeneration(session.session_id, n);
    renderStatus(statusBox, `job ${job_id} running...`);
    const final = await pollJob(client, job_id, {
      intervalMs: 1000,
      onProgress: async (status) => {
        renderStatus(statusBox, `generating ${status.completed}/${status.requested}`);
        const partial = await client.jobResults(job_id);
        renderResults(resultsBox, partial.results);
      },
    });
    const results = await client.jobResults(job_id);
    renderResults(resultsBox, results.results);
    if (final.state === "failed") {
      renderStatus(
        statusBox,
        `job failed: ${final.error ?? "unknown"} (manifest: ${final.manifest ?? "n/a"})`,
        "error",
      );
    } else {
      renderStatus(statusBox, `done: ${results.results.length} images`);
    }
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      renderStatus(statusBox, "a job is already running for this session", "warn");
    } else {
      renderStatus(statusBox, `generation failed: ${String(err)}`, "error");
    }
  } finally {
    generating = false;
    redraw();
  }
}

submitButton.addEventListener("click", () => void submitPrompt());
promptInput.addEventListener("keydown", (e) => {
  if (e.key === "Enter") void submitPrompt();
});
generateButton.addEventListener("click", () => void generate());
targetSelect.addEventListener("change", () => void applyEdits());
