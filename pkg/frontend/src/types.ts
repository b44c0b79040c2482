/** Document shapes as the coordination server and the agent emit them.
 * The console never invents state: every view is a projection of these. */

export type Role = "Participant" | "ServerAdmin" | "ClientAdmin";

export interface ErrorDoc {
  error: string;
  detail: string;
}

export interface UserDoc {
  user_id: string;
  organization: string;
  role: Role;
  status: string;
}

export type VoteValue = "Accept" | "Reject";

export interface ProposalDoc {
  proposal_id: string;
  author: string;
  payload: unknown;
  votes: Record<string, VoteValue>;
  state: "Proposed" | "Agreed" | "Superseded";
}

export interface TopicDoc {
  key: string;
  proposals: ProposalDoc[];
  agreed_proposal_id: string | null;
  default: unknown;
}

export interface SessionDoc {
  session_id: string;
  participants: string[];
  topics: Record<string, TopicDoc>;
  status: "Open" | "Sealed" | "Abandoned";
  contract_id: string | null;
  version: number;
}

export interface ContractDoc {
  contract_id: string;
  session_id: string;
  agreed_values: Record<string, unknown>;
  sealed_at: string;
  signatories: string[];
}

export interface JobDoc {
  job_id: string;
  origin: string;
  contract_id: string | null;
  rounds: number;
  min_clients: number;
  metrics: string[];
  [key: string]: unknown;
}

export interface PauseReason {
  kind: string;
  client?: string;
  rule?: string;
  note?: string;
}

export type RunPhase =
  | "Created"
  | "AwaitingClients"
  | "Validating"
  | "Training"
  | "Evaluating"
  | "Completed"
  | "Paused"
  | "Failed";

export interface RunDoc {
  run_id: string;
  job_id: string;
  contract_id: string | null;
  phase: RunPhase;
  current_round: number;
  grid_index: number;
  expected_clients: string[];
  checked_in: string[];
  per_client_status: Record<string, string>;
  global_model_versions: string[];
  pause_reason: PauseReason | null;
  failure_reason: PauseReason | null;
  created_at: string;
}

export interface RoundRow {
  grid_index: number;
  round: number;
  model_id: string;
  aggregate: Record<string, number>;
  clients: Record<string, unknown>;
}

export interface ProvenanceDoc {
  seq: number;
  at: string;
  actor: string;
  action: string;
  subject: string;
  outcome: string;
  detail: Record<string, unknown>;
}

export interface ContributionDetail {
  data_share: number;
  rounds_participated: number;
  [key: string]: unknown;
}

export interface ReportDoc {
  run: RunDoc;
  job: Record<string, unknown>;
  contract_id: string | null;
  status: { phase: RunPhase; pause_reason: PauseReason | null };
  per_round: RoundRow[];
  evaluations: Record<string, Record<string, unknown>>;
  contribution: Record<string, ContributionDetail> | null;
  timeline: ProvenanceDoc[];
  deployments: Array<Record<string, unknown>>;
  audience: Role;
}

export interface ClientRecordDoc {
  client_id: string;
  owner: string;
  status: string;
  flagged: boolean;
  [key: string]: unknown;
}

// ---- agent local API ------------------------------------------------------

export interface AgentSettingsDoc {
  deploy_threshold: number | null;
  monitor_threshold: number;
  monitor_period_s: number;
  personalization_epochs: number;
  personalization_learning_rate: number;
}

export interface MonitorEntry {
  at: string;
  model_id: string;
  metric: number;
  threshold: number;
}

export interface DeployedModelDoc {
  model_id: string;
  personalized: boolean;
  gate_metric: number;
  deployed_at: string;
}

export interface AgentStatusDoc {
  client_id: string;
  server_url: string;
  suspended: boolean;
  model: DeployedModelDoc | null;
  inference_count: number;
  notification_count: number;
  last_monitor: MonitorEntry | null;
  monitor_history: MonitorEntry[];
  poll_interval_s: number;
  settings: AgentSettingsDoc;
}

export interface NotificationDoc {
  at: string;
  kind: string;
  detail: Record<string, unknown>;
}

/** The thirteen negotiable topics, in the order the board lists them. */
export const TOPIC_KEYS = [
  "data_schema",
  "time_frequency",
  "value_ranges",
  "lag_window",
  "normalization_bounds",
  "model_kind",
  "learning_rate",
  "local_epochs",
  "rounds",
  "train_test_split",
  "evaluation_metrics",
  "min_clients",
  "deploy_threshold_default",
] as const;

export type TopicKey = (typeof TOPIC_KEYS)[number];
