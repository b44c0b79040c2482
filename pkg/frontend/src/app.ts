/** Console shell: hash routing, login, and per-view polling loops.
 *
 * Served by the coordination server under /ui (negotiation, runs, reports)
 * and by an agent under /ui (client panel). The shell detects which backend
 * it is running against from the path the user opens; both variants are the
 * same bundle. No state lives here beyond the session token — closing and
 * reopening the page reproduces every view from API data alone. */

import { AgentApi, ApiError, ServerApi } from "./api.js";
import {
  projectClientPanel,
  renderClientPanel,
  showPanelError,
} from "./views/client-panel.js";
import { projectReport, renderReport } from "./views/report-view.js";
import { projectRunDashboard, renderRunDashboard } from "./views/run-dashboard.js";
import {
  projectSessionBoard,
  renderSessionBoard,
  showInlineError,
} from "./views/session-board.js";

export type Route =
  | { page: "login" }
  | { page: "sessions" }
  | { page: "session"; id: string }
  | { page: "runs" }
  | { page: "run"; id: string }
  | { page: "report"; id: string }
  | { page: "client" };

/** `#/sessions/s1` → {page:"session", id:"s1"}; anything unknown → login. */
export function parseRoute(hash: string): Route {
  const parts = hash.replace(/^#\/?/, "").split("/").filter(Boolean);
  switch (parts[0]) {
    case "sessions":
      return parts[1] ? { page: "session", id: parts[1] } : { page: "sessions" };
    case "runs":
      return parts[1] ? { page: "run", id: parts[1] } : { page: "runs" };
    case "reports":
      return parts[1] ? { page: "report", id: parts[1] } : { page: "login" };
    case "client":
      return { page: "client" };
    default:
      return { page: "login" };
  }
}

const POLL_MS = 2000;

/** One console instance: a root element, an authenticated API client, and at
 * most one active polling loop. Two of these side by side are two independent
 * browser sessions as far as the server is concerned. */
export interface Shell {
  root: HTMLElement;
  server: ServerApi;
  agent: AgentApi | null;
  timer: number | null;
}

export function stopConsole(shell: Shell): void {
  if (shell.timer !== null) window.clearInterval(shell.timer);
  shell.timer = null;
}

const stopPolling = stopConsole;

function poll(shell: Shell, tick: () => Promise<void>): void {
  stopPolling(shell);
  void tick();
  shell.timer = window.setInterval(() => void tick(), POLL_MS);
}

export function renderLogin(shell: Shell): void {
  stopPolling(shell);
  shell.root.innerHTML = `
    <form class="login-form">
      <h2>sign in</h2>
      <label>user id <input name="user"></label>
      <label>password <input name="password" type="password"></label>
      <button type="submit">log in</button>
      <p role="alert" hidden class="inline-error"></p>
    </form>`;
  const form = shell.root.querySelector("form")!;
  form.addEventListener("submit", async (ev) => {
    ev.preventDefault();
    const user = (form.querySelector("[name=user]") as HTMLInputElement).value;
    const password = (form.querySelector("[name=password]") as HTMLInputElement).value;
    try {
      await shell.server.login(user, password);
      sessionStorage.setItem("flapu-token", shell.server.token);
      window.location.hash = "#/sessions";
    } catch (err) {
      if (err instanceof ApiError) showInlineError(shell.root, err.code, err.detail);
    }
  });
}

export async function renderSessionPage(shell: Shell, sessionId: string): Promise<void> {
  const viewer = shell.server.user?.user_id ?? "";
  const tick = async () => {
    const session = await shell.server.getSession(sessionId);
    const model = projectSessionBoard(session, viewer);
    renderSessionBoard(shell.root, model, {
      onPropose: async (topic, payloadText) => {
        try {
          await shell.server.propose(sessionId, topic, JSON.parse(payloadText));
          await tick();
        } catch (err) {
          if (err instanceof ApiError) showInlineError(shell.root, err.code, err.detail);
          else showInlineError(shell.root, "BadPayload", String(err));
        }
      },
      onVote: async (proposalId, vote) => {
        try {
          await shell.server.vote(proposalId, sessionId, vote);
          await tick();
        } catch (err) {
          if (err instanceof ApiError) showInlineError(shell.root, err.code, err.detail);
        }
      },
      onSeal: async () => {
        try {
          await shell.server.seal(sessionId);
          await tick();
        } catch (err) {
          if (err instanceof ApiError) showInlineError(shell.root, err.code, err.detail);
        }
      },
      onRenegotiate: async () => {
        const session2 = await shell.server.getSession(sessionId);
        if (session2.contract_id) {
          const next = await shell.server.renegotiate(session2.contract_id, "from console");
          window.location.hash = `#/sessions/${next.session_id}`;
        }
      },
    });
  };
  poll(shell, tick);
}

export async function renderRunPage(shell: Shell, runId: string): Promise<void> {
  const role = shell.server.user?.role ?? "Participant";
  const tick = async () => {
    const run = await shell.server.getRun(runId);
    const model = projectRunDashboard(run, role);
    renderRunDashboard(shell.root, model, {
      onPause: async (note) => {
        try {
          await shell.server.pauseRun(runId, note);
          await tick();
        } catch (err) {
          if (err instanceof ApiError) showInlineError(shell.root, err.code, err.detail);
        }
      },
      onResume: async () => {
        try {
          await shell.server.resumeRun(runId);
          await tick();
        } catch (err) {
          if (err instanceof ApiError) showInlineError(shell.root, err.code, err.detail);
        }
      },
      onForceDeploy: async (modelId) => {
        try {
          const run2 = await shell.server.getRun(runId);
          await shell.server.publishDeployment(modelId, run2.expected_clients);
          await tick();
        } catch (err) {
          if (err instanceof ApiError) showInlineError(shell.root, err.code, err.detail);
        }
      },
    });
  };
  poll(shell, tick);
}

export async function renderReportPage(shell: Shell, runId: string): Promise<void> {
  const tick = async () => {
    const report = await shell.server.getReport(runId);
    renderReport(shell.root, projectReport(report));
  };
  poll(shell, tick);
}

export async function renderClientPage(shell: Shell): Promise<void> {
  if (!shell.agent) {
    const token = window.prompt("agent admin token") ?? "";
    shell.agent = new AgentApi("", token); // same origin: served by the agent
  }
  const agent = shell.agent;
  const tick = async () => {
    const [status, notes] = await Promise.all([agent.status(), agent.notifications()]);
    const model = projectClientPanel(status, notes.notifications);
    renderClientPanel(shell.root, model, {
      onApply: async (delta) => {
        try {
          await agent.applySettings(delta);
          await tick();
        } catch (err) {
          if (err instanceof ApiError) showPanelError(shell.root, err.code, err.detail);
        }
      },
    });
  };
  poll(shell, tick);
}

function renderListPage(
  shell: Shell,
  kind: "sessions" | "runs",
): void {
  const tick = async () => {
    shell.root.innerHTML = `<h2>${kind}</h2><ul class="listing"></ul>`;
    const ul = shell.root.querySelector("ul")!;
    if (kind === "sessions") {
      const { sessions } = await shell.server.listSessions();
      for (const s of sessions) {
        const li = document.createElement("li");
        li.innerHTML = `<a href="#/sessions/${s.session_id}">${s.session_id}</a> v${s.version} ${s.status}`;
        ul.appendChild(li);
      }
    } else {
      const { runs } = await shell.server.listRuns();
      for (const r of runs) {
        const li = document.createElement("li");
        li.innerHTML =
          `<a href="#/runs/${r.run_id}">${r.run_id}</a> ${r.phase} ` +
          `<a href="#/reports/${r.run_id}">report</a>`;
        ul.appendChild(li);
      }
    }
  };
  poll(shell, tick);
}

export function startConsole(root: HTMLElement, serverBase = ""): Shell {
  const shell: Shell = { root, server: new ServerApi(serverBase), agent: null, timer: null };
  const stored = sessionStorage.getItem("flapu-token");
  if (stored) shell.server.token = stored;

  const dispatch = () => {
    const route = parseRoute(window.location.hash);
    switch (route.page) {
      case "login":
        return renderLogin(shell);
      case "sessions":
        return renderListPage(shell, "sessions");
      case "session":
        return void renderSessionPage(shell, route.id);
      case "runs":
        return renderListPage(shell, "runs");
      case "run":
        return void renderRunPage(shell, route.id);
      case "report":
        return void renderReportPage(shell, route.id);
      case "client":
        return void renderClientPage(shell);
    }
  };
  window.addEventListener("hashchange", dispatch);
  dispatch();
  return shell;
}

// boot when loaded as the page's entry module (not under test)
const mount = typeof document !== "undefined" ? document.getElementById("console-root") : null;
if (mount) startConsole(mount);
