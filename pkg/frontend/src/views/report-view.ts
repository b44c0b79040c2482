/** The run report: metric table per round, contribution shares, and the
 * provenance timeline. All rows come straight from `GET /runs/{id}/report`;
 * what the server filtered for this audience simply is not here. */

import type { ReportDoc } from "../types.js";

export interface ReportModel {
  runId: string;
  phase: string;
  pauseText: string | null;
  metricColumns: string[]; // "mean_MAE", "mean_RMSE", ...
  rows: Array<{ round: number; modelId: string; cells: Array<number | null> }>;
  contribution: Array<{ clientId: string; dataShare: number; rounds: number }>;
  timeline: Array<{ at: string; actor: string; action: string; outcome: string }>;
  deployments: Array<{ clientId: string; status: string; outcome: string | null }>;
}

export function projectReport(report: ReportDoc): ReportModel {
  const metricColumns: string[] = [];
  for (const row of report.per_round) {
    for (const key of Object.keys(row.aggregate)) {
      if (key.startsWith("mean_") && !metricColumns.includes(key)) metricColumns.push(key);
    }
  }
  metricColumns.sort();

  const reason = report.status.pause_reason;
  return {
    runId: report.run.run_id,
    phase: report.status.phase,
    pauseText:
      reason && reason.client && reason.rule ? `client ${reason.client}: ${reason.rule}` : null,
    metricColumns,
    rows: report.per_round.map((row) => ({
      round: row.round,
      modelId: row.model_id,
      cells: metricColumns.map((c) => (c in row.aggregate ? (row.aggregate[c] as number) : null)),
    })),
    contribution: Object.entries(report.contribution ?? {}).map(([clientId, d]) => ({
      clientId,
      dataShare: d.data_share,
      rounds: d.rounds_participated,
    })),
    timeline: report.timeline.map((r) => ({
      at: r.at,
      actor: r.actor,
      action: r.action,
      outcome: r.outcome,
    })),
    deployments: report.deployments.map((d) => ({
      clientId: String(d["client_id"]),
      status: String(d["status"]),
      outcome: d["outcome"] == null ? null : String(d["outcome"]),
    })),
  };
}

function table(headers: string[], rows: string[][], cls: string): HTMLTableElement {
  const t = document.createElement("table");
  t.className = cls;
  const thead = document.createElement("thead");
  const hr = document.createElement("tr");
  for (const h of headers) {
    const th = document.createElement("th");
    th.textContent = h;
    hr.appendChild(th);
  }
  thead.appendChild(hr);
  t.appendChild(thead);
  const body = document.createElement("tbody");
  for (const row of rows) {
    const tr = document.createElement("tr");
    for (const cell of row) {
      const td = document.createElement("td");
      td.textContent = cell;
      tr.appendChild(td);
    }
    body.appendChild(tr);
  }
  t.appendChild(body);
  return t;
}

const round4 = (v: number | null) => (v === null ? "—" : String(Math.round(v * 1e4) / 1e4));

export function renderReport(container: HTMLElement, model: ReportModel): void {
  container.innerHTML = "";
  container.classList.add("report-view");

  const h = document.createElement("h2");
  h.textContent = `report: run ${model.runId} — ${model.phase}`;
  container.appendChild(h);
  if (model.pauseText) {
    const p = document.createElement("p");
    p.className = "pause-banner";
    p.textContent = model.pauseText;
    container.appendChild(p);
  }

  container.appendChild(
    table(
      ["round", "model", ...model.metricColumns],
      model.rows.map((r) => [String(r.round), r.modelId, ...r.cells.map(round4)]),
      "metric-table",
    ),
  );

  if (model.contribution.length > 0) {
    container.appendChild(
      table(
        ["client", "data share", "rounds"],
        model.contribution.map((c) => [c.clientId, round4(c.dataShare), String(c.rounds)]),
        "contribution-table",
      ),
    );
  }

  if (model.deployments.length > 0) {
    container.appendChild(
      table(
        ["client", "status", "outcome"],
        model.deployments.map((d) => [d.clientId, d.status, d.outcome ?? "—"]),
        "deployment-table",
      ),
    );
  }

  const ol = document.createElement("ol");
  ol.className = "timeline";
  for (const entry of model.timeline) {
    const li = document.createElement("li");
    li.setAttribute("data-action", entry.action);
    li.textContent = `${entry.at}  ${entry.actor}  ${entry.action}  ${entry.outcome}`;
    ol.appendChild(li);
  }
  container.appendChild(ol);
}
