"""Append-only provenance ledger.

Every successful mutating operation anywhere in the system emits exactly one
record; failed authentication attempts and duplicate-token alarms are recorded
too. Records get a gap-free sequence number from a single serialized writer
and are appended to an on-disk JSONL file before the originating operation
reports success, so replaying the file reconstructs the stores.
"""

from __future__ import annotations

import datetime as _dt
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Optional

from . import canonical
from .errors import UnknownAction

# Closed action vocabulary. Core verbs cover the cross-module lifecycle
# (negotiate, authenticate, run, deploy); the rest name the remaining
# record-emitting operations so that nothing mutates silently.
ACTIONS = frozenset(
    {
        # negotiation
        "open_session",
        "propose",
        "vote",
        "seal",
        "renegotiate",
        # identity
        "create_user",
        "register",
        "issue_token",
        "rotate",
        "auth_fail",
        "alarm",
        # jobs and runs
        "create_job",
        "start_run",
        "checkin",
        "validation_result",
        "round_result",
        "evaluation_result",
        "aggregate",
        "finalize",
        "advance_grid",
        "pause",
        "resume",
        "fail",
        # models
        "store_model",
        "publish_deployment",
        "deployment_fetched",
        "acknowledge",
        "request_deploy",
        # client-local lifecycle
        "run_task",
        "personalize",
        "deploy_decision",
        "monitor",
        "notify",
        "configure",
    }
)


def utcnow() -> str:
    return _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


@dataclass(frozen=True)
class ProvenanceRecord:
    seq: int
    actor: str
    action: str
    subject: str
    outcome: str  # "ok" or an error code
    at: str
    detail: dict = field(default_factory=dict)

    def to_doc(self) -> dict:
        return {
            "seq": self.seq,
            "actor": self.actor,
            "action": self.action,
            "subject": self.subject,
            "outcome": self.outcome,
            "at": self.at,
            "detail": self.detail,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "ProvenanceRecord":
        return cls(
            seq=doc["seq"],
            actor=doc["actor"],
            action=doc["action"],
            subject=doc["subject"],
            outcome=doc["outcome"],
            at=doc["at"],
            detail=doc.get("detail", {}),
        )


class Ledger:
    """Serialized appender plus snapshot reads over the full record list."""

    def __init__(self, path: Optional[Path] = None):
        self._lock = threading.Lock()
        self._records: list[ProvenanceRecord] = []
        self._path = Path(path) if path is not None else None
        if self._path is not None and self._path.exists():
            for line in self._path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    self._records.append(ProvenanceRecord.from_doc(canonical.loads(line)))
        self._listeners: list[Callable[[ProvenanceRecord], None]] = []

    def add_listener(self, fn: Callable[[ProvenanceRecord], None]) -> None:
        self._listeners.append(fn)

    def append(
        self,
        actor: str,
        action: str,
        subject: str,
        outcome: str = "ok",
        detail: Optional[dict] = None,
        at: Optional[str] = None,
    ) -> ProvenanceRecord:
        if action not in ACTIONS:
            raise UnknownAction(f"action {action!r} is not in the ledger vocabulary")
        with self._lock:
            record = ProvenanceRecord(
                seq=len(self._records) + 1,
                actor=actor,
                action=action,
                subject=subject,
                outcome=outcome,
                at=at if at is not None else utcnow(),
                detail=detail or {},
            )
            if self._path is not None:
                with self._path.open("a", encoding="utf-8") as fh:
                    fh.write(canonical.dumps(record.to_doc()) + "\n")
                    fh.flush()
            self._records.append(record)
        for fn in self._listeners:
            fn(record)
        return record

    def records(self) -> list[ProvenanceRecord]:
        with self._lock:
            return list(self._records)

    def query(
        self,
        actor: Optional[str] = None,
        action: Optional[str] = None,
        subject: Optional[str] = None,
        since: Optional[str] = None,
        until: Optional[str] = None,
    ) -> list[ProvenanceRecord]:
        """Records matching all given filters, in seq order."""
        out = []
        for rec in self.records():
            if actor is not None and rec.actor != actor:
                continue
            if action is not None and rec.action != action:
                continue
            if subject is not None and rec.subject != subject:
                continue
            if since is not None and rec.at < since:
                continue
            if until is not None and rec.at > until:
                continue
            out.append(rec)
        return out

    def export_lines(self) -> Iterator[str]:
        """Newline-delimited canonical JSON, one record per line."""
        for rec in self.records():
            yield canonical.dumps(rec.to_doc())

    @staticmethod
    def parse_export(lines: Iterable[str]) -> list[ProvenanceRecord]:
        return [ProvenanceRecord.from_doc(canonical.loads(line)) for line in lines if line.strip()]
