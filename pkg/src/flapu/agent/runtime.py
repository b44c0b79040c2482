"""The long-running agent process.

Three concurrent activities share one ``Agent`` object:

- the poll loop, which discovers runs and deployment directives and acts on
  them (always agent-initiated; the server cannot reach in);
- the monitor loop, which periodically re-scores the deployed model on the
  silo's held-out data and raises a notification when it drifts past the
  configured threshold;
- the local HTTP surface (see ``local_api``), which serves predictions and
  lets the silo's own administrator inspect and tune the agent.

They coordinate through two conventions: the deployed model is a frozen
object swapped in a single assignment, so a reader sees either the old or the
new model but never a mixture; and all durable state goes through
``_save_state``, which writes a temp file and renames it into place.
"""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import canonical, transport
from ..errors import (
    AuthFailed,
    BadRequestShape,
    DataUnreadable,
    DuplicateResult,
    FlapuError,
    InvalidSetting,
    NoModelDeployed,
    NoValidationData,
    ServerUnreachable,
    StaleGeneration,
    TokenMismatch,
    UnknownClient,
    WrongPhase,
    WrongRound,
    WrongStatus,
)
from ..learning import ModelWeights
from ..provenance import Ledger, utcnow
from .client import ServerClient
from .config import AgentConfig, apply_settings
from .data import load_dataset
from .pipeline import (
    gate_metric,
    personalize,
    prepared_arrays,
    run_evaluation,
    run_training,
    run_validation,
    should_deploy,
    train_test_arrays,
)

# Errors meaning "our credentials are no good"; polling stops until the
# operator replaces the token file.
_AUTH_ERRORS = (AuthFailed, StaleGeneration, TokenMismatch, UnknownClient)

# Errors meaning "a peer moved the run along while we were working"; the next
# poll will pick up whatever the run wants now.
_RACE_ERRORS = (WrongPhase, WrongRound, DuplicateResult)


@dataclass(frozen=True)
class DeployedModel:
    """The model currently serving predictions, plus everything needed to
    re-score it later."""

    model_id: str
    weights: ModelWeights
    recipe: dict
    personalized: bool
    gate_metric: float
    deployed_at: str

    def to_doc(self) -> dict:
        return {
            "model_id": self.model_id,
            "weights": self.weights.to_doc(),
            "recipe": self.recipe,
            "personalized": self.personalized,
            "gate_metric": self.gate_metric,
            "deployed_at": self.deployed_at,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "DeployedModel":
        return cls(
            model_id=doc["model_id"],
            weights=ModelWeights.from_doc(doc["weights"]),
            recipe=doc["recipe"],
            personalized=doc["personalized"],
            gate_metric=doc["gate_metric"],
            deployed_at=doc["deployed_at"],
        )


class Agent:
    def __init__(self, config: AgentConfig, server: Optional[ServerClient] = None):
        self.config = config
        config.state_dir.mkdir(parents=True, exist_ok=True)
        self.server = server or ServerClient(
            config.server_url, config.client_id, config.token_path, instance=config.instance
        )
        self.ledger = Ledger(config.state_dir / "ledger.jsonl")
        self.schedule = transport.PollSchedule(
            config.poll_base_s, config.poll_factor, config.poll_max_s
        )
        self.suspended = False
        self.current: Optional[DeployedModel] = None
        self.notifications: list[dict] = []
        self.monitor_history: list[dict] = []
        self.inference_count = 0
        self._lock = threading.RLock()
        self._state_path = config.state_dir / "state.json"
        self._checked_in: set[str] = set()
        self._notified_keys: set[tuple[str, str]] = set()
        self._load_state()

    # -- polling -------------------------------------------------------------

    def poll_once(self) -> list[str]:
        """One sweep: every assigned run, then the deployment stream. Returns
        human-readable notes of what was acted on (empty = quiet poll)."""
        news: list[str] = []
        try:
            for summary in self.server.assignments():
                news.extend(self._handle_run(summary["run_id"]))
            for directive in self.server.deployments():
                news.extend(self._handle_directive(directive))
        except _AUTH_ERRORS as err:
            self._suspend(err)
        return news

    def step(self) -> float:
        """One iteration of the main loop; returns seconds until the next."""
        if self.suspended:
            try:
                if not self.server.reload_token():
                    return self.config.poll_base_s
            except AuthFailed:
                return self.config.poll_base_s
            # fresh material appeared on disk -- resume immediately
            self.suspended = False
            self.notify("AuthRecovered", {"generation": self.server.generation})
        try:
            news = self.poll_once()
        except ServerUnreachable:
            news = []
        return self.schedule.advance(bool(news))

    def run_forever(self, stop: threading.Event) -> None:
        while not stop.is_set():
            stop.wait(self.step())

    def start_monitor(self, stop: threading.Event) -> threading.Thread:
        """Spawn the drift-monitor loop; the period is re-read every lap so a
        config change takes effect without a restart."""

        def loop():
            while not stop.is_set():
                stop.wait(self.config.monitor_period_s)
                if stop.is_set():
                    return
                try:
                    self.monitor_tick()
                except FlapuError as err:
                    self.notify_once("MonitorError", err.code, {"error": err.code, "detail": err.detail})

        thread = threading.Thread(target=loop, daemon=True, name=f"monitor-{self.config.client_id}")
        thread.start()
        return thread

    # -- run participation -----------------------------------------------------

    def _handle_run(self, run_id: str) -> list[str]:
        task = self.server.task(run_id)
        kind = task["type"]
        if kind in ("wait", "none"):
            return []
        try:
            if kind == "checkin":
                self.server.checkin(run_id)
                if run_id in self._checked_in:
                    return []  # still waiting for peers; nothing new happened
                self._checked_in.add(run_id)
                self._task_record(run_id, task, "ok")
                return [f"checked in to run {run_id}"]
            if kind == "validate":
                report = run_validation(self._local_data(), task["job"])
                self.server.post_result(run_id, {"type": "validation", **report.to_doc()})
                self._task_record(
                    run_id, task, "ok" if report.passed else "ValidationFailed",
                    {"violations": len(report.violations)},
                )
                if not report.passed:
                    self.notify(
                        "ValidationFailed",
                        {"run_id": run_id, "violations": report.violations},
                    )
                return [f"posted validation for run {run_id}"]
            if kind == "train":
                result = run_training(self._local_data(), task)
                self.server.post_result(run_id, result)
                self._task_record(run_id, task, "ok", {"sample_count": result["sample_count"]})
                return [f"trained round {task['round']} of run {run_id}"]
            if kind == "evaluate":
                result = run_evaluation(self._local_data(), task)
                self.server.post_result(run_id, result)
                self._task_record(run_id, task, "ok", {"sample_count": result["sample_count"]})
                return [f"evaluated run {run_id}"]
            return []  # unknown task type: a newer server; skip rather than guess
        except _RACE_ERRORS:
            return []
        except FlapuError as err:
            if isinstance(err, _AUTH_ERRORS):
                raise
            self._task_record(run_id, task, err.code)
            self.notify_once(
                "TaskFailed", f"{run_id}:{kind}",
                {"run_id": run_id, "task": kind, "error": err.code, "detail": err.detail},
            )
            return []

    def _local_data(self):
        return load_dataset(self.config.data_path)

    def _task_record(self, run_id: str, task: dict, outcome: str, extra: Optional[dict] = None) -> None:
        detail = {"type": task["type"], "round": task.get("round"), **(extra or {})}
        self.ledger.append(
            actor=self.config.client_id,
            action="run_task",
            subject=f"run/{run_id}",
            outcome=outcome,
            detail=detail,
        )

    # -- deployment ------------------------------------------------------------

    def _handle_directive(self, directive: dict) -> list[str]:
        if directive["status"] != "Fetched":
            return []  # already acknowledged (possibly before a restart)
        directive_id = directive["directive_id"]
        model_id = directive["model_id"]
        try:
            model_doc = self.server.model(model_id)
            weights = ModelWeights.from_doc(model_doc["weights"])
            recipe = directive["recipe"]
            candidate, personalized = self._maybe_personalize(weights, model_id, recipe)
            X, y = self._holdout_arrays(recipe)
            metric = gate_metric(candidate, X, y)
            threshold = self._deploy_threshold(recipe)
        except FlapuError as err:
            if isinstance(err, _AUTH_ERRORS):
                raise
            # Can't gate the candidate; leave the directive un-acknowledged so
            # the next poll retries, and tell the local admin once.
            self.notify_once(
                "DeploymentGateError", directive_id,
                {"directive_id": directive_id, "model_id": model_id,
                 "error": err.code, "detail": err.detail},
            )
            return []

        if should_deploy(metric, threshold):
            deployed = DeployedModel(
                model_id=model_id,
                weights=candidate,
                recipe=recipe,
                personalized=personalized,
                gate_metric=metric,
                deployed_at=utcnow(),
            )
            with self._lock:
                self.current = deployed  # single assignment: readers never see a mix
                self._save_state()
            self._ack(directive_id, "deployed", metric)
            self._decision_record(directive_id, model_id, "deployed", metric, threshold)
            return [f"deployed model {model_id} (gate {metric:.6g} <= {threshold:.6g})"]

        self._ack(directive_id, "rejected", metric)
        self._decision_record(directive_id, model_id, "rejected", metric, threshold)
        self.notify_once(
            "DeploymentRejected", directive_id,
            {"directive_id": directive_id, "model_id": model_id,
             "gate_metric": metric, "threshold": threshold},
        )
        return [f"rejected model {model_id} (gate {metric:.6g} > {threshold:.6g})"]

    def _ack(self, directive_id: str, outcome: str, metric: float) -> None:
        try:
            self.server.acknowledge(directive_id, outcome, metric)
        except WrongStatus:
            pass  # acknowledged in a previous life; the decision stands

    def _decision_record(
        self, directive_id: str, model_id: str, outcome: str, metric: float, threshold: float
    ) -> None:
        self.ledger.append(
            actor=self.config.client_id,
            action="deploy_decision",
            subject=f"deployment/{directive_id}",
            outcome=outcome,
            detail={"model_id": model_id, "gate_metric": metric, "threshold": threshold},
        )

    def _maybe_personalize(
        self, weights: ModelWeights, model_id: str, recipe: dict
    ) -> tuple[ModelWeights, bool]:
        epochs = self.config.personalization_epochs
        if epochs == 0:
            return weights, False
        (X_train, y_train), _ = train_test_arrays(self._local_data(), recipe)
        tuned = personalize(
            weights, X_train, y_train,
            learning_rate=self.config.personalization_learning_rate,
            epochs=epochs,
        )
        self.ledger.append(
            actor=self.config.client_id,
            action="personalize",
            subject=f"model/{model_id}",
            detail={"epochs": epochs, "learning_rate": self.config.personalization_learning_rate},
        )
        return tuned, True

    def _deploy_threshold(self, recipe: dict) -> float:
        if self.config.deploy_threshold is not None:
            return self.config.deploy_threshold
        threshold = recipe.get("deploy_threshold_default")
        if threshold is None:
            raise InvalidSetting(
                "no deploy_threshold configured and the directive carries no default"
            )
        return float(threshold)

    def _holdout_arrays(self, recipe: dict):
        """The fixed evaluation set used for gating and monitoring: the
        dedicated holdout file when configured, otherwise the chronological
        test tail of the training data."""
        if self.config.fixed_test_path is not None:
            try:
                holdout = load_dataset(self.config.fixed_test_path)
            except DataUnreadable as err:
                raise NoValidationData(f"holdout set unavailable: {err.detail}")
            return prepared_arrays(holdout, recipe)
        try:
            dataset = load_dataset(self.config.data_path)
        except DataUnreadable as err:
            raise NoValidationData(f"no holdout configured and local data unreadable: {err.detail}")
        _, (X_test, y_test) = train_test_arrays(dataset, recipe)
        return X_test, y_test

    # -- monitoring --------------------------------------------------------------

    def monitor_tick(self) -> dict:
        """Re-score the deployed model on the holdout set. Returns the history
        entry; with no model deployed the tick is recorded as skipped."""
        at = utcnow()
        current = self.current
        if current is None:
            entry = {"at": at, "skipped": True}
            self.ledger.append(
                actor=self.config.client_id,
                action="monitor",
                subject="model/none",
                outcome="skipped",
                detail={},
            )
            return entry
        X, y = self._holdout_arrays(current.recipe)
        metric = gate_metric(current.weights, X, y)
        threshold = self.config.monitor_threshold
        entry = {"at": at, "model_id": current.model_id, "metric": metric, "threshold": threshold}
        with self._lock:
            self.monitor_history.append(entry)
            self._save_state()
        self.ledger.append(
            actor=self.config.client_id,
            action="monitor",
            subject=f"model/{current.model_id}",
            detail={"metric": metric, "threshold": threshold},
        )
        if metric > threshold:
            self.notify(
                "MonitorAlarm",
                {"model_id": current.model_id, "metric": metric, "threshold": threshold},
            )
        return entry

    # -- local surface -------------------------------------------------------------

    def infer(self, features) -> dict:
        """Predict with the deployed model. Features are in the model's own
        (normalized) space; the answer identifies which model produced it."""
        current = self.current  # grab once; a concurrent deploy swaps atomically
        if current is None:
            raise NoModelDeployed("no model has been accepted on this silo")
        d = current.weights.d
        if not isinstance(features, (list, tuple)) or len(features) != d:
            raise BadRequestShape(f"features must be a list of {d} numbers")
        try:
            x = np.asarray(features, dtype=float)
        except (TypeError, ValueError):
            raise BadRequestShape("features must all be numbers")
        if not np.all(np.isfinite(x)):
            raise BadRequestShape("features must be finite")
        prediction = float(current.weights.predict(x.reshape(1, -1))[0])
        with self._lock:
            self.inference_count += 1
        return {"prediction": prediction, "model_id": current.model_id}

    def configure(self, delta: dict) -> dict:
        """Apply a settings change from the local admin. All-or-nothing: the
        new config is validated before the swap, so a bad delta changes
        nothing."""
        new_config = apply_settings(self.config, delta)
        self.config = new_config
        self.ledger.append(
            actor=self.config.client_id,
            action="configure",
            subject=f"client/{self.config.client_id}",
            detail={"changed": {name: getattr(new_config, name) for name in delta}},
        )
        return new_config.settings_doc()

    def notify(self, kind: str, detail: dict) -> dict:
        """Queue a notification for the silo's administrator."""
        note = {"at": utcnow(), "kind": kind, "detail": detail}
        with self._lock:
            self.notifications.append(note)
            self._save_state()
        self.ledger.append(
            actor=self.config.client_id,
            action="notify",
            subject=f"client/{self.config.client_id}",
            detail={"kind": kind},
        )
        return note

    def notify_once(self, kind: str, key: str, detail: dict) -> None:
        """Like notify, but at most once per (kind, key) per process -- retry
        loops should not flood the admin with copies of the same complaint."""
        if (kind, key) in self._notified_keys:
            return
        self._notified_keys.add((kind, key))
        self.notify(kind, detail)

    def status(self) -> dict:
        current = self.current
        return {
            "client_id": self.config.client_id,
            "server_url": self.config.server_url,
            "suspended": self.suspended,
            "model": None if current is None else {
                "model_id": current.model_id,
                "personalized": current.personalized,
                "gate_metric": current.gate_metric,
                "deployed_at": current.deployed_at,
            },
            "inference_count": self.inference_count,
            "notification_count": len(self.notifications),
            "last_monitor": self.monitor_history[-1] if self.monitor_history else None,
            "monitor_history": list(self.monitor_history),
            "poll_interval_s": self.schedule.current,
            "settings": self.config.settings_doc(),
        }

    def _suspend(self, err: FlapuError) -> None:
        if self.suspended:
            return
        self.suspended = True
        self.notify("AuthSuspended", {"error": err.code, "detail": err.detail})

    # -- persistence ------------------------------------------------------------

    def _save_state(self) -> None:
        doc = {
            "current_model": self.current.to_doc() if self.current else None,
            "notifications": self.notifications,
            "monitor_history": self.monitor_history,
            "inference_count": self.inference_count,
        }
        tmp = self._state_path.with_suffix(".json.tmp")
        tmp.write_text(canonical.dumps(doc))
        os.replace(tmp, self._state_path)

    def _load_state(self) -> None:
        if not self._state_path.exists():
            return
        try:
            doc = canonical.loads(self._state_path.read_text())
        except ValueError:
            return  # corrupt state file: start empty rather than refuse to boot
        model_doc = doc.get("current_model")
        self.current = DeployedModel.from_doc(model_doc) if model_doc else None
        self.notifications = list(doc.get("notifications", []))
        self.monitor_history = list(doc.get("monitor_history", []))
        self.inference_count = int(doc.get("inference_count", 0))
