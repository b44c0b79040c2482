"""Run orchestration: drives each federated run from client check-in through
validation, training rounds, aggregation, evaluation, and contribution
accounting.

Every client interaction is a pull-able resource: clients fetch their current
task and post results; nothing here ever initiates a connection to a client.
Transitions for one run are serialized behind a per-run lock; independent runs
proceed concurrently.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import learning
from .errors import (
    ClientNotValidated,
    DimensionMismatch,
    DuplicateResult,
    GridExhausted,
    NotAuthorized,
    TooFewClients,
    UnexpectedClient,
    UnknownRun,
    ValueOutOfRange,
    WrongPhase,
    WrongRound,
)
from .jobs import FLJob, JobFactory, ORIGIN_ADMIN
from .learning import ModelWeights
from .modelstore import ISSUED_BY_RUN, ModelStore
from .provenance import Ledger, utcnow
from .registry import ROLE_SERVER_ADMIN, ClientRegistry, UserAccount

PHASES = (
    "Created",
    "AwaitingClients",
    "Validating",
    "Paused",
    "Preprocessing",
    "Training",
    "Aggregating",
    "Evaluating",
    "Completed",
    "Failed",
)

# Legal phase graph. Completed→Training is the grid re-entry used by
# advance_grid; Failed is reachable from anywhere and terminal.
_NEXT: dict[str, set[str]] = {
    "Created": {"AwaitingClients"},
    "AwaitingClients": {"Validating"},
    "Validating": {"Paused", "Preprocessing"},
    "Preprocessing": {"Training"},
    "Training": {"Aggregating", "Paused"},
    "Aggregating": {"Training", "Evaluating"},
    "Evaluating": {"Completed"},
    "Paused": {"Validating", "Training"},
    "Completed": {"Training"},
    "Failed": set(),
}

STATUS_IDLE = "Idle"
STATUS_TASK_ISSUED = "TaskIssued"
STATUS_RESULT_RECEIVED = "ResultReceived"
STATUS_FAULTED = "Faulted"

DEFAULT_PHASE_TIMEOUT_S = 600.0


@dataclass
class ClientRoundResult:
    """One client's locally trained model for one round."""

    run_id: str
    round: int
    client_id: str
    weight_vector: list[float]
    sample_count: int
    local_metrics: dict[str, float] = field(default_factory=dict)
    wall_time_ms: float = 0.0

    def __post_init__(self):
        if isinstance(self.round, bool) or not isinstance(self.round, int) or self.round < 1:
            raise ValueOutOfRange(f"round must be a positive integer, got {self.round!r}")
        if isinstance(self.sample_count, bool) or not isinstance(self.sample_count, int) \
                or self.sample_count < 1:
            raise ValueOutOfRange(f"sample_count must be >= 1, got {self.sample_count!r}")
        # constructing the weights object enforces finiteness and shape
        ModelWeights(np.asarray(self.weight_vector, dtype=float))

    def weights(self) -> ModelWeights:
        return ModelWeights(np.asarray(self.weight_vector, dtype=float))

    def to_doc(self) -> dict:
        return {
            "run_id": self.run_id,
            "round": self.round,
            "client_id": self.client_id,
            "weight_vector": [float(v) for v in self.weight_vector],
            "sample_count": self.sample_count,
            "local_metrics": dict(self.local_metrics),
            "wall_time_ms": self.wall_time_ms,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "ClientRoundResult":
        return cls(
            run_id=doc["run_id"],
            round=doc["round"],
            client_id=doc["client_id"],
            weight_vector=list(doc["weight_vector"]),
            sample_count=doc["sample_count"],
            local_metrics=dict(doc.get("local_metrics", {})),
            wall_time_ms=float(doc.get("wall_time_ms", 0.0)),
        )


@dataclass
class ContributionLedger:
    """Who brought what to a run: data share, participation, local quality."""

    run_id: str
    per_client: dict[str, dict]

    def __post_init__(self):
        total = sum(entry["data_share"] for entry in self.per_client.values())
        if self.per_client and abs(total - 1.0) > 1e-9:
            raise ValueError(f"data shares sum to {total!r}, not 1")

    def to_doc(self) -> dict:
        return {"run_id": self.run_id, "per_client": {k: dict(v) for k, v in self.per_client.items()}}


@dataclass
class RunState:
    run_id: str
    job_id: str
    phase: str = "Created"
    current_round: int = 0
    grid_index: int = 0
    expected_clients: set[str] = field(default_factory=set)
    per_client_status: dict[str, str] = field(default_factory=dict)
    global_model_versions: list[str] = field(default_factory=list)
    pause_reason: Optional[dict] = None
    failure_reason: Optional[dict] = None
    paused_from: Optional[str] = None
    checked_in: set[str] = field(default_factory=set)
    validation_reports: dict[str, dict] = field(default_factory=dict)
    round_results: dict[str, ClientRoundResult] = field(default_factory=dict)
    evaluations: dict[str, dict] = field(default_factory=dict)
    sample_totals: dict[str, int] = field(default_factory=dict)
    metric_history: dict[str, list[float]] = field(default_factory=dict)
    rounds_participated: dict[str, int] = field(default_factory=dict)
    contribution: Optional[ContributionLedger] = None
    history: list[dict] = field(default_factory=list)
    phase_history: list[tuple[str, str]] = field(default_factory=list)
    job_doc: dict = field(default_factory=dict)
    contract_id: Optional[str] = None
    created_at: str = field(default_factory=utcnow)
    phase_entered_at: float = 0.0

    def grid_entry(self) -> dict:
        return self.history[self.grid_index]

    def to_doc(self) -> dict:
        return {
            "run_id": self.run_id,
            "job_id": self.job_id,
            "contract_id": self.contract_id,
            "phase": self.phase,
            "current_round": self.current_round,
            "grid_index": self.grid_index,
            "expected_clients": sorted(self.expected_clients),
            "checked_in": sorted(self.checked_in),
            "per_client_status": dict(self.per_client_status),
            "global_model_versions": list(self.global_model_versions),
            "pause_reason": self.pause_reason,
            "failure_reason": self.failure_reason,
            "contribution": self.contribution.to_doc() if self.contribution else None,
            "created_at": self.created_at,
        }


class Orchestrator:
    def __init__(
        self,
        ledger: Ledger,
        registry: ClientRegistry,
        jobs: JobFactory,
        models: ModelStore,
        phase_timeout_s: float = DEFAULT_PHASE_TIMEOUT_S,
        clock: Callable[[], float] = time.time,
    ):
        self._ledger = ledger
        self._registry = registry
        self._jobs = jobs
        self._models = models
        self._timeout = phase_timeout_s
        self._clock = clock
        self.runs: dict[str, RunState] = {}
        self._runs_lock = threading.RLock()
        self._locks: dict[str, threading.RLock] = {}
        # a duplicate-token alarm pauses every active run the client is part of
        registry.alarm_hook = self._on_token_alarm

    # -- lookup -------------------------------------------------------------

    def get_run(self, run_id: str) -> RunState:
        run = self.runs.get(run_id)
        if run is None:
            raise UnknownRun(f"no run {run_id!r}")
        return run

    def runs_for_client(self, client_id: str) -> list[RunState]:
        with self._runs_lock:
            return [r for r in self.runs.values() if client_id in r.expected_clients]

    def _run_lock(self, run_id: str) -> threading.RLock:
        with self._runs_lock:
            if run_id not in self._locks:
                self._locks[run_id] = threading.RLock()
            return self._locks[run_id]

    def _job(self, run: RunState) -> FLJob:
        return self._jobs.get_job(run.job_id)

    # -- phase machinery -----------------------------------------------------

    def _transition(self, run: RunState, phase: str) -> None:
        if phase != "Failed" and phase not in _NEXT[run.phase]:
            raise WrongPhase(f"run {run.run_id}: no transition {run.phase} -> {phase}")
        run.phase = phase
        run.phase_entered_at = self._clock()
        run.phase_history.append((phase, utcnow()))

    def _issue_tasks(self, run: RunState, skip_received: bool = False) -> None:
        for cid in run.expected_clients:
            if skip_received and run.per_client_status.get(cid) == STATUS_RESULT_RECEIVED:
                continue
            run.per_client_status[cid] = STATUS_TASK_ISSUED

    # -- operations ------------------------------------------------------------

    def start_run(self, job: FLJob, requested_clients: list[str], actor: str = "system") -> RunState:
        clients = list(dict.fromkeys(requested_clients))
        if len(clients) < job.min_clients:
            raise TooFewClients(
                f"job needs {job.min_clients} clients, got {len(clients)}"
            )
        for cid in clients:
            record = self._registry.get_client(cid)
            if record.status != "Validated":
                raise ClientNotValidated(f"client {cid} is {record.status}")
            if job.origin == ORIGIN_ADMIN and not record.test_ok:
                raise ClientNotValidated(f"client {cid} has not opted into test runs")
        run = RunState(
            run_id=uuid.uuid4().hex[:12],
            job_id=job.job_id,
            expected_clients=set(clients),
            per_client_status={cid: STATUS_IDLE for cid in clients},
            job_doc=job.to_doc(),
            contract_id=job.contract_id,
        )
        run.phase_entered_at = self._clock()
        run.phase_history.append(("Created", utcnow()))
        with self._runs_lock:
            self.runs[run.run_id] = run
            self._locks[run.run_id] = threading.RLock()
        with self._run_lock(run.run_id):
            self._transition(run, "AwaitingClients")
            self._ledger.append(
                actor=actor,
                action="start_run",
                subject=f"run/{run.run_id}",
                detail={"run_id": run.run_id, "job_id": job.job_id, "clients": clients},
            )
        return run

    def on_client_checkin(self, run_id: str, client_id: str) -> RunState:
        with self._run_lock(run_id):
            run = self.get_run(run_id)
            if client_id not in run.expected_clients:
                raise UnexpectedClient(f"client {client_id} is not part of run {run_id}")
            if client_id in run.checked_in:
                # Re-poll from an agent that already arrived; nothing changed,
                # so nothing goes in the ledger.
                return run
            run.checked_in.add(client_id)
            self._ledger.append(
                actor=client_id,
                action="checkin",
                subject=f"run/{run_id}",
                detail={"present": sorted(run.checked_in)},
            )
            if run.phase == "AwaitingClients" and run.checked_in >= run.expected_clients:
                self._transition(run, "Validating")
                self._issue_tasks(run)
            return run

    def on_validation_result(self, run_id: str, client_id: str, report: dict) -> RunState:
        with self._run_lock(run_id):
            run = self.get_run(run_id)
            if client_id not in run.expected_clients:
                raise UnexpectedClient(f"client {client_id} is not part of run {run_id}")
            if run.phase != "Validating":
                raise WrongPhase(f"run {run_id} is {run.phase}, not Validating")
            if client_id in run.validation_reports:
                raise DuplicateResult(f"client {client_id} already reported validation")
            violations = list(report.get("violations", ()))
            run.validation_reports[client_id] = dict(report)
            self._ledger.append(
                actor=client_id,
                action="validation_result",
                subject=f"run/{run_id}",
                outcome="ok" if not violations else "failed",
                detail={"client_id": client_id, "violations": violations},
            )
            if violations:
                run.per_client_status[client_id] = STATUS_FAULTED
                self._pause(
                    run,
                    {
                        "kind": "ValidationFailure",
                        "client": client_id,
                        "rule": violations[0].get("rule", "unknown"),
                    },
                    actor="system",
                )
                return run
            run.per_client_status[client_id] = STATUS_RESULT_RECEIVED
            passed = [
                cid for cid, rep in run.validation_reports.items() if not rep.get("violations")
            ]
            if set(passed) >= run.expected_clients:
                self._transition(run, "Preprocessing")
                self._enter_training(run)
            return run

    def _enter_training(self, run: RunState) -> None:
        """Store the zero initial model for the current grid entry and open
        round 1. Callable from Preprocessing, Completed (grid advance), or
        Paused (resume)."""
        job = self._job(run)
        initial = ModelWeights.zeros(job.feature_count, job.model_kind)
        version = self._models.store_model(run.run_id, run.grid_index, 0, initial)
        run.global_model_versions.append(version.model_id)
        lr, epochs = job.hyperparameters(run.grid_index)
        run.history.append(
            {
                "grid_index": run.grid_index,
                "hyperparameters": {"learning_rate": lr, "local_epochs": epochs},
                "initial_model_id": version.model_id,
                "rounds": [],
                "evaluations": {},
                "contribution": None,
            }
        )
        run.current_round = 1
        run.round_results.clear()
        self._transition(run, "Training")
        self._issue_tasks(run)

    def on_round_result(self, run_id: str, result: ClientRoundResult) -> RunState:
        with self._run_lock(run_id):
            run = self.get_run(run_id)
            if result.client_id not in run.expected_clients:
                raise UnexpectedClient(f"client {result.client_id} is not part of run {run_id}")
            if run.phase != "Training":
                raise WrongPhase(f"run {run_id} is {run.phase}, not Training")
            if result.round != run.current_round:
                raise WrongRound(
                    f"run {run_id} is in round {run.current_round}, result is for {result.round}"
                )
            if result.client_id in run.round_results:
                raise DuplicateResult(
                    f"client {result.client_id} already reported round {result.round}"
                )
            job = self._job(run)
            if len(result.weight_vector) != job.feature_count + 1:
                raise DimensionMismatch(
                    f"expected {job.feature_count + 1} parameters, got {len(result.weight_vector)}"
                )
            run.round_results[result.client_id] = result
            run.per_client_status[result.client_id] = STATUS_RESULT_RECEIVED
            self._ledger.append(
                actor=result.client_id,
                action="round_result",
                subject=f"run/{run_id}",
                detail={
                    "round": result.round,
                    "grid_index": run.grid_index,
                    "sample_count": result.sample_count,
                },
            )
            if set(run.round_results) >= run.expected_clients:
                self._aggregate_round(run)
            return run

    def _aggregate_round(self, run: RunState) -> None:
        job = self._job(run)
        self._transition(run, "Aggregating")
        pairs = [(res.weights(), res.sample_count) for res in run.round_results.values()]
        new_global = learning.aggregate(pairs, mode=job.aggregation)
        version = self._models.store_model(run.run_id, run.grid_index, run.current_round, new_global)
        run.global_model_versions.append(version.model_id)
        per_client = {}
        for cid, res in run.round_results.items():
            per_client[cid] = {
                "sample_count": res.sample_count,
                "local_metrics": dict(res.local_metrics),
                "wall_time_ms": res.wall_time_ms,
            }
            run.sample_totals[cid] = run.sample_totals.get(cid, 0) + res.sample_count
            run.rounds_participated[cid] = run.rounds_participated.get(cid, 0) + 1
            primary = job.metrics[0]
            if primary in res.local_metrics:
                run.metric_history.setdefault(cid, []).append(float(res.local_metrics[primary]))
        run.grid_entry()["rounds"].append(
            {"round": run.current_round, "model_id": version.model_id, "per_client": per_client}
        )
        next_phase = "Evaluating" if run.current_round >= job.rounds else "Training"
        self._ledger.append(
            actor="system",
            action="aggregate",
            subject=f"run/{run.run_id}",
            detail={
                "round": run.current_round,
                "grid_index": run.grid_index,
                "model_id": version.model_id,
                "clients": sorted(run.round_results),
                "next_phase": next_phase,
            },
        )
        run.round_results.clear()
        if next_phase == "Training":
            run.current_round += 1
        self._transition(run, next_phase)
        self._issue_tasks(run)

    def on_evaluation_result(
        self,
        run_id: str,
        client_id: str,
        metrics: dict[str, float],
        sample_count: Optional[int] = None,
    ) -> RunState:
        with self._run_lock(run_id):
            run = self.get_run(run_id)
            if client_id not in run.expected_clients:
                raise UnexpectedClient(f"client {client_id} is not part of run {run_id}")
            if run.phase != "Evaluating":
                raise WrongPhase(f"run {run_id} is {run.phase}, not Evaluating")
            if client_id in run.evaluations:
                raise DuplicateResult(f"client {client_id} already reported evaluation")
            entry = {"metrics": {k: float(v) for k, v in metrics.items()}}
            if sample_count is not None:
                entry["sample_count"] = int(sample_count)
            run.evaluations[client_id] = entry
            run.per_client_status[client_id] = STATUS_RESULT_RECEIVED
            self._ledger.append(
                actor=client_id,
                action="evaluation_result",
                subject=f"run/{run_id}",
                detail={"grid_index": run.grid_index, **entry},
            )
            if set(run.evaluations) >= run.expected_clients:
                self.finalize_run(run_id)
            return run

    def finalize_run(self, run_id: str, actor: str = "system") -> ContributionLedger:
        with self._run_lock(run_id):
            run = self.get_run(run_id)
            if run.phase != "Evaluating" or set(run.evaluations) < run.expected_clients:
                raise WrongPhase(
                    f"run {run_id} is not ready to finalize (phase {run.phase}, "
                    f"{len(run.evaluations)}/{len(run.expected_clients)} evaluations)"
                )
            total = sum(run.sample_totals.values())
            per_client = {}
            for cid in sorted(run.expected_clients):
                history = run.metric_history.get(cid, [])
                per_client[cid] = {
                    "data_share": run.sample_totals.get(cid, 0) / total if total else 0.0,
                    "rounds_participated": run.rounds_participated.get(cid, 0),
                    "mean_local_metric": sum(history) / len(history) if history else None,
                }
            contribution = ContributionLedger(run_id=run_id, per_client=per_client)
            run.contribution = contribution
            entry = run.grid_entry()
            entry["evaluations"] = dict(run.evaluations)
            entry["contribution"] = contribution.to_doc()
            self._transition(run, "Completed")
            for cid in run.expected_clients:
                run.per_client_status[cid] = STATUS_IDLE
            self._ledger.append(
                actor=actor,
                action="finalize",
                subject=f"run/{run_id}",
                detail={"grid_index": run.grid_index, "contribution": contribution.to_doc()},
            )
            job = self._job(run)
            if run.grid_index + 1 < job.grid_size:
                self.advance_grid(run_id, actor=actor)
            else:
                self._conclude(run, job)
            return contribution

    def _conclude(self, run: RunState, job: FLJob) -> None:
        """End of the whole run: rotate every participant's token and publish
        the winning model as a deployment directive."""
        for cid in sorted(run.expected_clients):
            record = self._registry.get_client(cid)
            self._registry.issue_token(cid, record.contract_id)
        best = self._best_grid_entry(run, job)
        model = self._models.latest_model(run.run_id, best)
        recipe = {
            "job_id": job.job_id,
            "model_kind": job.model_kind,
            "lag_window": job.lag_window,
            "normalization_bounds": {
                k: [lo, hi] for k, (lo, hi) in job.normalization_bounds.items()
            },
            "schema": job.schema.to_doc(),
            "metrics": list(job.metrics),
            "deploy_threshold_default": job.deploy_threshold_default,
            "train_test_split": job.train_test_split,
        }
        self._models.publish_deployment(
            sorted(run.expected_clients), model.model_id, ISSUED_BY_RUN, recipe=recipe
        )

    def _best_grid_entry(self, run: RunState, job: FLJob) -> int:
        """Grid entry with the lowest mean client test metric (primary metric);
        ties and missing data fall back to the earliest entry."""
        primary = job.metrics[0]
        best_g, best_score = 0, None
        for entry in run.history:
            scores = [
                e["metrics"][primary]
                for e in entry.get("evaluations", {}).values()
                if primary in e.get("metrics", {})
            ]
            if not scores:
                continue
            score = sum(scores) / len(scores)
            if best_score is None or score < best_score:
                best_g, best_score = entry["grid_index"], score
        return best_g

    def advance_grid(self, run_id: str, actor: str = "system") -> RunState:
        with self._run_lock(run_id):
            run = self.get_run(run_id)
            job = self._job(run)
            if run.grid_index + 1 >= job.grid_size:
                raise GridExhausted(
                    f"run {run_id} finished grid entry {run.grid_index} of {job.grid_size}"
                )
            if run.phase != "Completed":
                raise WrongPhase(f"run {run_id} is {run.phase}, not Completed")
            run.grid_index += 1
            run.evaluations = {}
            run.sample_totals = {}
            run.metric_history = {}
            run.rounds_participated = {}
            run.contribution = None
            self._ledger.append(
                actor=actor,
                action="advance_grid",
                subject=f"run/{run_id}",
                detail={"grid_index": run.grid_index},
            )
            self._enter_training(run)
            return run

    # -- pause / resume / fail ------------------------------------------------

    def _pause(self, run: RunState, reason: dict, actor: str) -> None:
        if not reason:
            raise ValueOutOfRange("pause requires a structured reason")
        run.paused_from = run.phase
        self._transition(run, "Paused")
        run.pause_reason = dict(reason)
        self._ledger.append(
            actor=actor,
            action="pause",
            subject=f"run/{run.run_id}",
            detail={"reason": run.pause_reason, "paused_from": run.paused_from},
        )

    def pause_run(self, run_id: str, reason: dict, actor: str = "system") -> RunState:
        with self._run_lock(run_id):
            run = self.get_run(run_id)
            if run.phase not in ("Validating", "Training"):
                raise WrongPhase(f"cannot pause from {run.phase}")
            self._pause(run, reason, actor)
            return run

    def resume_run(self, run_id: str, admin: UserAccount) -> RunState:
        with self._run_lock(run_id):
            run = self.get_run(run_id)
            if admin.role != ROLE_SERVER_ADMIN:
                raise NotAuthorized("only the server admin resumes runs")
            if run.phase != "Paused":
                raise WrongPhase(f"run {run_id} is {run.phase}, not Paused")
            target = run.paused_from or "Validating"
            run.pause_reason = None
            run.paused_from = None
            self._transition(run, target)
            if target == "Validating":
                # everyone revalidates: the fix may have changed any dataset
                run.validation_reports.clear()
                self._issue_tasks(run)
            else:
                self._issue_tasks(run, skip_received=True)
            self._ledger.append(
                actor=admin.user_id,
                action="resume",
                subject=f"run/{run_id}",
                detail={"phase": target},
            )
            return run

    def fail_run(self, run_id: str, reason: dict, actor: str = "system") -> RunState:
        with self._run_lock(run_id):
            run = self.get_run(run_id)
            if run.phase == "Failed":
                return run
            self._transition(run, "Failed")
            run.failure_reason = dict(reason)
            self._ledger.append(
                actor=actor,
                action="fail",
                subject=f"run/{run_id}",
                detail={"reason": run.failure_reason},
            )
            return run

    def _on_token_alarm(self, client_id: str, fingerprints: list[str]) -> None:
        for run in self.runs_for_client(client_id):
            with self._run_lock(run.run_id):
                if run.phase in ("Validating", "Training"):
                    run.per_client_status[client_id] = STATUS_FAULTED
                    self._pause(
                        run,
                        {"kind": "TokenAlarm", "client": client_id, "fingerprints": fingerprints},
                        actor="system",
                    )

    # -- timeouts ---------------------------------------------------------------

    def check_timeouts(self, now: Optional[float] = None) -> list[RunState]:
        """Move overdue runs out of their stuck phase. Validating/Training
        pause for the admin to investigate; phases that may not pause fail."""
        now = self._clock() if now is None else now
        touched = []
        with self._runs_lock:
            candidates = list(self.runs.values())
        for run in candidates:
            with self._run_lock(run.run_id):
                if run.phase not in ("AwaitingClients", "Validating", "Training", "Evaluating"):
                    continue
                if now - run.phase_entered_at <= self._timeout:
                    continue
                if run.phase in ("Validating", "Training"):
                    self._pause(run, {"kind": "PhaseTimeout", "phase": run.phase}, actor="system")
                else:
                    self.fail_run(
                        run.run_id, {"kind": "PhaseTimeout", "phase": run.phase}, actor="system"
                    )
                touched.append(run)
        return touched

    # -- pull-able task resources -------------------------------------------------

    def get_task(self, run_id: str, client_id: str) -> dict:
        """The client's current instruction. Purely a read; never mutates."""
        with self._run_lock(run_id):
            run = self.get_run(run_id)
            if client_id not in run.expected_clients:
                raise UnexpectedClient(f"client {client_id} is not part of run {run_id}")
            job = self._job(run)
            base = {
                "run_id": run.run_id,
                "phase": run.phase,
                "round": run.current_round,
                "grid_index": run.grid_index,
            }
            if run.phase == "AwaitingClients":
                return {**base, "type": "checkin"}
            if run.phase == "Validating":
                if client_id in run.validation_reports:
                    return {**base, "type": "wait"}
                return {**base, "type": "validate", "job": run.job_doc}
            if run.phase == "Training":
                if client_id in run.round_results:
                    return {**base, "type": "wait"}
                lr, epochs = job.hyperparameters(run.grid_index)
                model = self._models.latest_model(run.run_id, run.grid_index)
                return {
                    **base,
                    "type": "train",
                    "job": run.job_doc,
                    "hyperparameters": {"learning_rate": lr, "local_epochs": epochs},
                    "global_model": model.weights_doc,
                    "model_id": model.model_id,
                }
            if run.phase == "Evaluating":
                if client_id in run.evaluations:
                    return {**base, "type": "wait"}
                model = self._models.latest_model(run.run_id, run.grid_index)
                return {
                    **base,
                    "type": "evaluate",
                    "job": run.job_doc,
                    "global_model": model.weights_doc,
                    "model_id": model.model_id,
                    "metrics": list(job.metrics),
                }
            if run.phase in ("Completed", "Failed"):
                return {**base, "type": "none"}
            # Paused, Preprocessing, Aggregating: try again shortly
            reason = {"reason": run.pause_reason} if run.phase == "Paused" else {}
            return {**base, "type": "wait", **reason}
