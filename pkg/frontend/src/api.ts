/** Thin HTTP clients for the two backends the console talks to: the
 * coordination server (session-token auth) and an agent's local surface
 * (bearer admin token). Both speak JSON and report failures as
 * `{error, detail}`, which we surface as ApiError so views can render the
 * server's own error code inline. */

import type {
  AgentSettingsDoc,
  AgentStatusDoc,
  ClientRecordDoc,
  ContractDoc,
  JobDoc,
  NotificationDoc,
  ReportDoc,
  RunDoc,
  SessionDoc,
  UserDoc,
  VoteValue,
} from "./types.js";

export class ApiError extends Error {
  readonly code: string;
  readonly detail: string;
  readonly status: number;

  constructor(code: string, detail: string, status: number) {
    super(`${code}: ${detail}`);
    this.code = code;
    this.detail = detail;
    this.status = status;
  }
}

async function call<T>(
  base: string,
  path: string,
  opts: { method?: string; token?: string; body?: unknown } = {},
): Promise<T> {
  const headers: Record<string, string> = {};
  if (opts.token) headers["authorization"] = `Bearer ${opts.token}`;
  if (opts.body !== undefined) headers["content-type"] = "application/json";
  let resp: Response;
  try {
    resp = await fetch(base + path, {
      method: opts.method ?? "GET",
      headers,
      body: opts.body === undefined ? undefined : JSON.stringify(opts.body),
      // keep the bearer header on cross-origin calls (an agent-hosted page
      // talking to a server on another port, or a DOM shim under test)
      credentials: "include",
    });
  } catch (err) {
    throw new ApiError("ServerUnreachable", String(err), 0);
  }
  const text = await resp.text();
  let doc: unknown = null;
  if (text) {
    try {
      doc = JSON.parse(text);
    } catch {
      doc = null;
    }
  }
  if (!resp.ok) {
    const e = (doc ?? {}) as { error?: string; detail?: string };
    throw new ApiError(e.error ?? `HTTP${resp.status}`, e.detail ?? text, resp.status);
  }
  return doc as T;
}

// ---- coordination server ----------------------------------------------------

export class ServerApi {
  token = "";
  user: UserDoc | null = null;

  constructor(readonly base: string) {}

  async login(userId: string, password: string): Promise<UserDoc> {
    const doc = await call<{ session_token: string; user: UserDoc }>(
      this.base,
      "/auth/login",
      { method: "POST", body: { user_id: userId, password } },
    );
    this.token = doc.session_token;
    this.user = doc.user;
    return doc.user;
  }

  private get<T>(path: string): Promise<T> {
    return call<T>(this.base, path, { token: this.token });
  }

  private post<T>(path: string, body: unknown = {}): Promise<T> {
    return call<T>(this.base, path, { method: "POST", token: this.token, body });
  }

  whoami(): Promise<UserDoc> {
    return this.get("/auth/whoami");
  }

  createUser(organization: string, role: string): Promise<{ user: UserDoc; initial_password: string }> {
    return this.post("/users", { organization, role });
  }

  listSessions(): Promise<{ sessions: SessionDoc[] }> {
    return this.get("/sessions");
  }

  getSession(sessionId: string): Promise<SessionDoc> {
    return this.get(`/sessions/${sessionId}`);
  }

  openSession(participants: string[]): Promise<SessionDoc> {
    return this.post("/sessions", { participants });
  }

  propose(sessionId: string, topic: string, payload: unknown): Promise<{ proposal_id: string }> {
    return this.post(`/sessions/${sessionId}/topics/${topic}/proposals`, { payload });
  }

  vote(proposalId: string, sessionId: string, vote: VoteValue): Promise<unknown> {
    return this.post(`/proposals/${proposalId}/votes`, { session_id: sessionId, vote });
  }

  seal(sessionId: string): Promise<{ session: SessionDoc; contract: ContractDoc; job: JobDoc }> {
    return this.post(`/sessions/${sessionId}/seal`);
  }

  renegotiate(refId: string, reason: string): Promise<SessionDoc> {
    return this.post("/renegotiations", { ref: refId, reason });
  }

  getContract(contractId: string): Promise<ContractDoc> {
    return this.get(`/contracts/${contractId}`);
  }

  listJobs(): Promise<{ jobs: JobDoc[] }> {
    return this.get("/jobs");
  }

  listRuns(): Promise<{ runs: RunDoc[] }> {
    return this.get("/runs");
  }

  getRun(runId: string): Promise<RunDoc> {
    return this.get(`/runs/${runId}`);
  }

  getReport(runId: string): Promise<ReportDoc> {
    return this.get(`/runs/${runId}/report`);
  }

  startRun(jobId: string, clients: string[]): Promise<RunDoc> {
    return this.post("/runs", { job_id: jobId, clients });
  }

  pauseRun(runId: string, note: string): Promise<RunDoc> {
    return this.post(`/runs/${runId}/pause`, { reason: { note } });
  }

  resumeRun(runId: string): Promise<RunDoc> {
    return this.post(`/runs/${runId}/resume`);
  }

  listClients(): Promise<{ clients: ClientRecordDoc[] }> {
    return this.get("/clients");
  }

  publishDeployment(modelId: string, clients: string[]): Promise<{ directives: Array<Record<string, unknown>> }> {
    return this.post("/deployments", { model_id: modelId, clients });
  }

  requestDeployment(modelId: string, note: string): Promise<{ recorded: boolean; seq: number }> {
    return this.post("/deployment-requests", { model_id: modelId, note });
  }
}

// ---- agent local surface ------------------------------------------------------

export class AgentApi {
  constructor(
    readonly base: string,
    readonly adminToken: string,
  ) {}

  status(): Promise<AgentStatusDoc> {
    return call(this.base, "/status", { token: this.adminToken });
  }

  settings(): Promise<AgentSettingsDoc> {
    return call(this.base, "/config", { token: this.adminToken });
  }

  applySettings(delta: Partial<Record<keyof AgentSettingsDoc, unknown>>): Promise<AgentSettingsDoc> {
    return call(this.base, "/config", { method: "PATCH", token: this.adminToken, body: delta });
  }

  notifications(): Promise<{ notifications: NotificationDoc[] }> {
    return call(this.base, "/notifications", { token: this.adminToken });
  }

  predict(features: number[]): Promise<{ prediction: number; model_id: string }> {
    return call(this.base, "/predict", { method: "POST", body: { features } });
  }
}
