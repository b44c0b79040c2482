/** The run dashboard: phase, round progress, per-client chips, and — when a
 * run is paused — a banner naming the client and validation rule that caused
 * it. Admin actions appear only for roles whose API call would succeed. */

import type { PauseReason, Role, RunDoc } from "../types.js";

export interface ClientChip {
  clientId: string;
  status: string; // e.g. pending / validated / failed / done
  checkedIn: boolean;
}

export interface RunDashboardModel {
  runId: string;
  jobId: string;
  phase: RunDoc["phase"];
  roundLabel: string;
  progressFraction: number | null;
  clients: ClientChip[];
  pauseBanner: string | null;
  failureBanner: string | null;
  modelVersions: string[];
  actions: { pause: boolean; resume: boolean; forceDeploy: boolean };
}

function reasonText(reason: PauseReason | null): string | null {
  if (!reason) return null;
  if (reason.client && reason.rule) return `client ${reason.client}: ${reason.rule}`;
  if (reason.note) return reason.note;
  return reason.kind;
}

export function projectRunDashboard(
  run: RunDoc,
  viewerRole: Role,
  totalRounds?: number,
): RunDashboardModel {
  const admin = viewerRole === "ServerAdmin";
  const pausable = run.phase === "Validating" || run.phase === "Training";
  return {
    runId: run.run_id,
    jobId: run.job_id,
    phase: run.phase,
    roundLabel:
      totalRounds !== undefined
        ? `round ${run.current_round} / ${totalRounds}`
        : `round ${run.current_round}`,
    progressFraction:
      totalRounds !== undefined && totalRounds > 0
        ? Math.min(1, run.current_round / totalRounds)
        : null,
    clients: run.expected_clients.map((clientId) => ({
      clientId,
      status: run.per_client_status[clientId] ?? "unknown",
      checkedIn: run.checked_in.includes(clientId),
    })),
    pauseBanner: run.phase === "Paused" ? reasonText(run.pause_reason) : null,
    failureBanner: run.phase === "Failed" ? reasonText(run.failure_reason) : null,
    modelVersions: run.global_model_versions,
    actions: {
      pause: admin && pausable,
      resume: admin && run.phase === "Paused",
      forceDeploy: admin && run.global_model_versions.length > 0,
    },
  };
}

export interface RunDashboardHandlers {
  onPause?(note: string): void;
  onResume?(): void;
  onForceDeploy?(modelId: string): void;
}

export function renderRunDashboard(
  container: HTMLElement,
  model: RunDashboardModel,
  handlers: RunDashboardHandlers = {},
): void {
  container.innerHTML = "";
  container.classList.add("run-dashboard");

  const head = document.createElement("header");
  const title = document.createElement("h2");
  title.textContent = `run ${model.runId}`;
  head.appendChild(title);
  const phase = document.createElement("span");
  phase.className = "phase-badge";
  phase.setAttribute("data-phase", model.phase);
  phase.textContent = model.phase;
  head.appendChild(phase);
  const round = document.createElement("span");
  round.className = "round-label";
  round.textContent = model.roundLabel;
  head.appendChild(round);
  container.appendChild(head);

  const alert = document.createElement("p");
  alert.className = "inline-error";
  alert.setAttribute("role", "alert");
  alert.hidden = true;
  container.appendChild(alert);

  if (model.progressFraction !== null) {
    const bar = document.createElement("progress");
    bar.max = 1;
    bar.value = model.progressFraction;
    container.appendChild(bar);
  }

  if (model.pauseBanner) {
    const banner = document.createElement("div");
    banner.className = "pause-banner";
    banner.textContent = `paused — ${model.pauseBanner}`;
    container.appendChild(banner);
  }
  if (model.failureBanner) {
    const banner = document.createElement("div");
    banner.className = "failure-banner";
    banner.textContent = `failed — ${model.failureBanner}`;
    container.appendChild(banner);
  }

  const list = document.createElement("ul");
  list.className = "client-chips";
  for (const chip of model.clients) {
    const li = document.createElement("li");
    li.setAttribute("data-client", chip.clientId);
    li.setAttribute("data-status", chip.status);
    li.textContent = `${chip.clientId} — ${chip.status}${chip.checkedIn ? "" : " (not checked in)"}`;
    list.appendChild(li);
  }
  container.appendChild(list);

  const actions = document.createElement("div");
  actions.className = "admin-actions";
  if (model.actions.pause && handlers.onPause) {
    const btn = document.createElement("button");
    btn.className = "pause-btn";
    btn.textContent = "pause";
    btn.addEventListener("click", () => handlers.onPause!("paused from console"));
    actions.appendChild(btn);
  }
  if (model.actions.resume && handlers.onResume) {
    const btn = document.createElement("button");
    btn.className = "resume-btn";
    btn.textContent = "resume";
    btn.addEventListener("click", () => handlers.onResume!());
    actions.appendChild(btn);
  }
  if (model.actions.forceDeploy && handlers.onForceDeploy) {
    const latest = model.modelVersions[model.modelVersions.length - 1];
    if (latest) {
      const btn = document.createElement("button");
      btn.className = "deploy-btn";
      btn.textContent = `deploy ${latest}`;
      btn.addEventListener("click", () => handlers.onForceDeploy!(latest));
      actions.appendChild(btn);
    }
  }
  container.appendChild(actions);
}
