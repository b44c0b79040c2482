"""Experiment tracking and report generation on top of the provenance ledger.

Everything in a report is derived from the ledger, the run histories, and the
model store — there is no hidden state. Reports are filtered by audience:
the server admin sees everything, a participant sees aggregate numbers plus
full detail for their own clients only, and nothing here ever carries secrets
or raw dataset rows.
"""

from __future__ import annotations

from typing import Optional

from .errors import NotAuthorized
from .modelstore import ModelStore
from .orchestrator import Orchestrator, RunState
from .provenance import Ledger, ProvenanceRecord
from .registry import (
    ROLE_CLIENT_ADMIN,
    ROLE_PARTICIPANT,
    ROLE_SERVER_ADMIN,
    ClientRegistry,
    UserAccount,
)

# records about credentials and tokens: visible only within one's own scope
SECURITY_ACTIONS = frozenset({"auth_fail", "alarm", "issue_token", "rotate", "create_user"})


def _subject_identity(subject: str) -> Optional[str]:
    """Identity a record is about, when the subject names a client or user."""
    if subject.startswith(("client/", "user/")):
        return subject.split("/", 1)[1]
    return None


def replay_run_phases(records: list[ProvenanceRecord], run_id: str) -> list[str]:
    """Reconstruct a run's phase history purely from its ledger records."""
    subject = f"run/{run_id}"
    phases: list[str] = []
    expected: set[str] = set()
    seen: set[str] = set()
    passed: set[str] = set()

    def enter(phase: str) -> None:
        phases.append(phase)
        if phase == "Validating":
            passed.clear()

    for rec in records:
        if rec.subject != subject:
            continue
        if rec.action == "start_run":
            expected = set(rec.detail["clients"])
            enter("Created")
            enter("AwaitingClients")
        elif rec.action == "checkin":
            seen.add(rec.actor)
            if phases and phases[-1] == "AwaitingClients" and seen >= expected:
                enter("Validating")
        elif rec.action == "validation_result":
            # a failed report triggers its own "pause" record; nothing to do here
            if rec.outcome == "ok":
                passed.add(rec.actor)
                if phases and phases[-1] == "Validating" and passed >= expected:
                    enter("Preprocessing")
                    enter("Training")
        elif rec.action == "aggregate":
            enter("Aggregating")
            enter(rec.detail["next_phase"])
        elif rec.action == "finalize":
            enter("Completed")
        elif rec.action == "advance_grid":
            enter("Training")
        elif rec.action == "pause":
            enter("Paused")
        elif rec.action == "resume":
            enter(rec.detail["phase"])
        elif rec.action == "fail":
            enter("Failed")
    return phases


class Reporting:
    def __init__(
        self,
        ledger: Ledger,
        orchestrator: Orchestrator,
        models: ModelStore,
        registry: ClientRegistry,
    ):
        self._ledger = ledger
        self._orch = orchestrator
        self._models = models
        self._registry = registry

    # -- scope ---------------------------------------------------------------

    def _own_clients(self, account: UserAccount) -> set[str]:
        if account.role == ROLE_PARTICIPANT:
            return {c.client_id for c in self._registry.clients.values() if c.owner == account.user_id}
        if account.role == ROLE_CLIENT_ADMIN:
            org_owners = {
                u.user_id
                for u in self._registry.users.values()
                if u.organization == account.organization
            }
            return {c.client_id for c in self._registry.clients.values() if c.owner in org_owners}
        return set()

    def _scope(self, account: UserAccount) -> set[str]:
        return {account.user_id} | self._own_clients(account)

    # -- experiment records ----------------------------------------------------

    def experiment_records(self, run_id: str) -> list[dict]:
        """One tracking record per grid entry: every round's global model
        reference with per-client metrics and sample counts."""
        run = self._orch.get_run(run_id)
        out = []
        for entry in run.history:
            out.append(
                {
                    "run_id": run.run_id,
                    "grid_index": entry["grid_index"],
                    "hyperparameters": dict(entry["hyperparameters"]),
                    "initial_model_id": entry["initial_model_id"],
                    "rounds": [
                        {
                            "round": r["round"],
                            "model_id": r["model_id"],
                            "per_client": {cid: dict(d) for cid, d in r["per_client"].items()},
                        }
                        for r in entry["rounds"]
                    ],
                    "evaluations": {cid: dict(e) for cid, e in entry["evaluations"].items()},
                    "contribution": entry.get("contribution"),
                    "job": run.job_doc,
                    "contract_id": run.contract_id,
                }
            )
        return out

    # -- reports ------------------------------------------------------------------

    def build_report(self, run_id: str, audience: UserAccount) -> dict:
        run = self._orch.get_run(run_id)
        job_doc = run.job_doc
        admin = audience.role == ROLE_SERVER_ADMIN
        own = self._own_clients(audience)
        metric_names = list(job_doc.get("metrics", ()))

        per_round = []
        for entry in run.history:
            for row in entry["rounds"]:
                per_round.append(
                    self._round_row(entry["grid_index"], row, metric_names, admin, own)
                )

        evaluations = {}
        for entry in run.history:
            for cid, ev in entry["evaluations"].items():
                visible = admin or cid in own
                evaluations.setdefault(str(entry["grid_index"]), {})[cid] = (
                    dict(ev) if visible else {"metrics": dict(ev.get("metrics", {}))}
                )

        contribution = None
        if run.contribution is not None:
            contribution = {}
            for cid, detail in run.contribution.per_client.items():
                if admin or cid in own:
                    contribution[cid] = dict(detail)
                else:
                    contribution[cid] = {
                        "data_share": detail["data_share"],
                        "rounds_participated": detail["rounds_participated"],
                    }

        timeline = [
            rec.to_doc()
            for rec in self._ledger.query(subject=f"run/{run_id}")
        ]

        deployments = []
        for directive in self._models.directives.values():
            if not directive.model_id.startswith(f"{run_id}."):
                continue
            if admin or directive.client_id in own:
                deployments.append(directive.to_doc())
            else:
                deployments.append(
                    {
                        "directive_id": directive.directive_id,
                        "client_id": directive.client_id,
                        "status": directive.status,
                        "outcome": directive.outcome,
                    }
                )

        return {
            "run": run.to_doc(),
            "job": job_doc,
            "contract_id": run.contract_id,
            "status": {"phase": run.phase, "pause_reason": run.pause_reason},
            "per_round": per_round,
            "evaluations": evaluations,
            "contribution": contribution,
            "timeline": timeline,
            "deployments": deployments,
            "audience": audience.role,
        }

    @staticmethod
    def _round_row(grid_index: int, row: dict, metric_names: list[str], admin: bool, own: set[str]) -> dict:
        per_client = row["per_client"]
        aggregate: dict = {"clients": len(per_client)}
        for name in metric_names:
            values = [
                d["local_metrics"][name]
                for d in per_client.values()
                if name in d.get("local_metrics", {})
            ]
            if values:
                aggregate[f"mean_{name}"] = sum(values) / len(values)
        clients = {}
        for cid, detail in per_client.items():
            if admin or cid in own:
                clients[cid] = dict(detail)
        return {
            "grid_index": grid_index,
            "round": row["round"],
            "model_id": row["model_id"],
            "aggregate": aggregate,
            "clients": clients,
        }

    # -- history queries --------------------------------------------------------------

    def query_history(
        self,
        caller: UserAccount,
        actor: Optional[str] = None,
        action: Optional[str] = None,
        subject: Optional[str] = None,
        since: Optional[str] = None,
        until: Optional[str] = None,
    ) -> list[ProvenanceRecord]:
        """Ledger query with audience rules: admins see everything; everyone
        else sees shared governance/run records plus security records (token
        issuance, auth failures, alarms) only for their own identities."""
        if caller.role == ROLE_SERVER_ADMIN:
            return self._ledger.query(
                actor=actor, action=action, subject=subject, since=since, until=until
            )
        scope = self._scope(caller)
        if action in SECURITY_ACTIONS:
            named = [s for s in (actor, _subject_identity(subject or "")) if s]
            if not named or any(s not in scope for s in named):
                raise NotAuthorized(
                    f"{caller.user_id} may only query {action} records for their own identities"
                )
        records = self._ledger.query(
            actor=actor, action=action, subject=subject, since=since, until=until
        )
        return [r for r in records if self._security_visible(r, scope)]

    @staticmethod
    def _security_visible(record: ProvenanceRecord, scope: set[str]) -> bool:
        if record.action not in SECURITY_ACTIONS:
            return True
        if record.actor in scope:
            return True
        named = _subject_identity(record.subject)
        return named is not None and named in scope
