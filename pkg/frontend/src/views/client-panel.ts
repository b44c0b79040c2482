/** The silo-side panel against the agent's local API: deployment/monitoring
 * thresholds, the monitoring chart with its threshold line, the notification
 * inbox, and the inference endpoint's status. */

import { lineChart } from "../chart.js";
import type { AgentSettingsDoc, AgentStatusDoc, NotificationDoc } from "../types.js";

export interface ClientPanelModel {
  clientId: string;
  serverUrl: string;
  suspended: boolean;
  endpointStatus: string; // "serving <model>" or the NoModelDeployed code
  model: { modelId: string; personalized: boolean; gateMetric: number } | null;
  settings: AgentSettingsDoc;
  chartSvg: string;
  inbox: Array<{ at: string; kind: string; text: string }>;
  inferenceCount: number;
}

export function projectClientPanel(
  status: AgentStatusDoc,
  notifications: NotificationDoc[],
): ClientPanelModel {
  const points = status.monitor_history.map((m) => ({ t: Date.parse(m.at), v: m.metric }));
  return {
    clientId: status.client_id,
    serverUrl: status.server_url,
    suspended: status.suspended,
    endpointStatus: status.model ? `serving ${status.model.model_id}` : "NoModelDeployed",
    model: status.model
      ? {
          modelId: status.model.model_id,
          personalized: status.model.personalized,
          gateMetric: status.model.gate_metric,
        }
      : null,
    settings: status.settings,
    chartSvg: lineChart(points, { threshold: status.settings.monitor_threshold }),
    inbox: [...notifications]
      .reverse()
      .map((n) => ({ at: n.at, kind: n.kind, text: JSON.stringify(n.detail) })),
    inferenceCount: status.inference_count,
  };
}

/** The editable settings, in display order with their input types. */
const SETTING_FIELDS: Array<[keyof AgentSettingsDoc, string]> = [
  ["deploy_threshold", "deployment threshold (blank = contract default)"],
  ["monitor_threshold", "monitoring threshold"],
  ["monitor_period_s", "monitoring period (s)"],
  ["personalization_epochs", "personalization epochs"],
  ["personalization_learning_rate", "personalization learning rate"],
];

export interface ClientPanelHandlers {
  onApply(delta: Record<string, unknown>): void;
}

export function renderClientPanel(
  container: HTMLElement,
  model: ClientPanelModel,
  handlers: ClientPanelHandlers,
): void {
  container.innerHTML = "";
  container.classList.add("client-panel");

  const head = document.createElement("header");
  const h = document.createElement("h2");
  h.textContent = `agent ${model.clientId}`;
  head.appendChild(h);
  if (model.suspended) {
    const s = document.createElement("span");
    s.className = "suspended-badge";
    s.textContent = "SUSPENDED — waiting for a fresh token";
    head.appendChild(s);
  }
  container.appendChild(head);

  const endpoint = document.createElement("p");
  endpoint.className = "endpoint-status";
  endpoint.setAttribute(
    "data-state",
    model.model ? "serving" : "NoModelDeployed",
  );
  endpoint.textContent = model.model
    ? `${model.endpointStatus}${model.model.personalized ? " (personalized)" : ""} — ` +
      `gate metric ${model.model.gateMetric}, ${model.inferenceCount} predictions served`
    : `inference endpoint idle: ${model.endpointStatus}`;
  container.appendChild(endpoint);

  // settings form
  const form = document.createElement("form");
  form.className = "settings-form";
  const inputs = new Map<string, HTMLInputElement>();
  for (const [name, label] of SETTING_FIELDS) {
    const row = document.createElement("label");
    row.textContent = label;
    const input = document.createElement("input");
    input.name = name;
    const value = model.settings[name];
    input.value = value === null || value === undefined ? "" : String(value);
    row.appendChild(input);
    form.appendChild(row);
    inputs.set(name, input);
  }
  const apply = document.createElement("button");
  apply.type = "button";
  apply.className = "apply-btn";
  apply.textContent = "apply settings";
  apply.addEventListener("click", () => {
    const delta: Record<string, unknown> = {};
    for (const [name, input] of inputs) {
      const raw = input.value.trim();
      const before = model.settings[name as keyof AgentSettingsDoc];
      const parsed = raw === "" ? null : Number(raw);
      if (parsed !== before && !(raw === "" && before === null)) delta[name] = parsed;
    }
    handlers.onApply(delta);
  });
  form.appendChild(apply);
  container.appendChild(form);

  const alert = document.createElement("p");
  alert.className = "inline-error";
  alert.setAttribute("role", "alert");
  alert.hidden = true;
  container.appendChild(alert);

  // monitoring chart with the threshold line
  const chartBox = document.createElement("figure");
  chartBox.className = "monitor-chart";
  chartBox.innerHTML = model.chartSvg;
  container.appendChild(chartBox);

  // notification inbox, newest first
  const inbox = document.createElement("ul");
  inbox.className = "inbox";
  for (const note of model.inbox) {
    const li = document.createElement("li");
    li.setAttribute("data-kind", note.kind);
    li.textContent = `${note.at}  ${note.kind}  ${note.text}`;
    inbox.appendChild(li);
  }
  container.appendChild(inbox);
}

export function showPanelError(container: HTMLElement, code: string, detail: string): void {
  const box = container.querySelector<HTMLElement>("[role=alert]");
  if (!box) return;
  box.textContent = `${code}: ${detail}`;
  box.removeAttribute("hidden");
}
