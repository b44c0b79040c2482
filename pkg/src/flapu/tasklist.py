"""Catalog of the forty operational tasks the platform must support.

The catalog doubles as an executable coverage checklist: scenario scripts mark
each task as they exercise the corresponding interface, and the checklist
reports which tasks have evidence behind them. Keeping the list in one place
makes "does the system actually cover its operating model?" a testable
question instead of a documentation claim.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import FlapuError

ACTOR_PARTICIPANT = "Participant"
ACTOR_SERVER_ADMIN = "ServerAdmin"
ACTOR_CLIENT_ADMIN = "ClientAdmin"
ACTOR_SERVER = "Server"
ACTOR_CLIENT = "Client"
ACTOR_EXTERNAL = "ExternalApplication"

ACTORS = (
    ACTOR_PARTICIPANT,
    ACTOR_SERVER_ADMIN,
    ACTOR_CLIENT_ADMIN,
    ACTOR_SERVER,
    ACTOR_CLIENT,
    ACTOR_EXTERNAL,
)


class UnknownTask(FlapuError):
    """Raised when a checklist mark names a task outside the catalog."""


@dataclass(frozen=True)
class OperationalTask:
    task_id: int
    actor: str
    summary: str


TASKS: tuple[OperationalTask, ...] = (
    OperationalTask(1, ACTOR_PARTICIPANT, "take part in a negotiation session"),
    OperationalTask(2, ACTOR_PARTICIPANT, "view the history of federated runs"),
    OperationalTask(3, ACTOR_PARTICIPANT, "request a new negotiation session"),
    OperationalTask(4, ACTOR_PARTICIPANT, "request deployment of a model"),
    OperationalTask(5, ACTOR_SERVER_ADMIN, "create user accounts"),
    OperationalTask(6, ACTOR_SERVER_ADMIN, "control a federated run (pause/resume)"),
    OperationalTask(7, ACTOR_SERVER_ADMIN, "create a training job manually"),
    OperationalTask(8, ACTOR_SERVER_ADMIN, "set up a negotiation session"),
    OperationalTask(9, ACTOR_CLIENT_ADMIN, "set the local monitoring threshold"),
    OperationalTask(10, ACTOR_CLIENT_ADMIN, "set the local deployment threshold"),
    OperationalTask(11, ACTOR_CLIENT_ADMIN, "monitor the local system"),
    OperationalTask(12, ACTOR_CLIENT_ADMIN, "manage the model inference endpoint"),
    OperationalTask(13, ACTOR_SERVER, "prepare a run report"),
    OperationalTask(14, ACTOR_SERVER, "create a training job from submitted parameters"),
    OperationalTask(15, ACTOR_SERVER, "turn a sealed contract into a training job"),
    OperationalTask(16, ACTOR_SERVER, "store and retrieve run information"),
    OperationalTask(17, ACTOR_SERVER, "run the federated process end to end"),
    OperationalTask(18, ACTOR_SERVER, "deploy a specific model version"),
    OperationalTask(19, ACTOR_SERVER, "expose messages for clients to fetch"),
    OperationalTask(20, ACTOR_SERVER, "authenticate and compress message envelopes"),
    OperationalTask(21, ACTOR_SERVER, "authenticate a client message"),
    OperationalTask(22, ACTOR_SERVER, "generate a device token"),
    OperationalTask(23, ACTOR_SERVER, "register a client device"),
    OperationalTask(24, ACTOR_SERVER, "monitor the federated process"),
    OperationalTask(25, ACTOR_SERVER, "check registered clients"),
    OperationalTask(26, ACTOR_CLIENT, "send messages to the server"),
    OperationalTask(27, ACTOR_CLIENT, "run the local training pipeline"),
    OperationalTask(28, ACTOR_CLIENT, "store and retrieve local information"),
    OperationalTask(29, ACTOR_CLIENT, "monitor the local training process"),
    OperationalTask(30, ACTOR_CLIENT, "configure monitoring"),
    OperationalTask(31, ACTOR_CLIENT, "configure personalization"),
    OperationalTask(32, ACTOR_CLIENT, "configure model deployment"),
    OperationalTask(33, ACTOR_CLIENT, "monitor the deployed model"),
    OperationalTask(34, ACTOR_CLIENT, "authenticate and compress outgoing envelopes"),
    OperationalTask(35, ACTOR_CLIENT, "perform model inference"),
    OperationalTask(36, ACTOR_CLIENT, "personalize the global model locally"),
    OperationalTask(37, ACTOR_CLIENT, "decide whether to deploy a model"),
    OperationalTask(38, ACTOR_CLIENT, "prepare a local report"),
    OperationalTask(39, ACTOR_CLIENT, "notify the local administrator"),
    OperationalTask(40, ACTOR_EXTERNAL, "send an inference request"),
)

_BY_ID = {task.task_id: task for task in TASKS}


def get_task(task_id: int) -> OperationalTask:
    try:
        return _BY_ID[task_id]
    except KeyError:
        raise UnknownTask(f"no operational task {task_id}") from None


@dataclass
class CoverageChecklist:
    """Collects evidence that each catalogued task was exercised."""

    evidence: dict[int, list[str]] = field(default_factory=dict)

    def mark(self, task_id: int, note: str = "") -> None:
        get_task(task_id)
        self.evidence.setdefault(task_id, []).append(note)

    def merge(self, other: "CoverageChecklist") -> None:
        for task_id, notes in other.evidence.items():
            self.evidence.setdefault(task_id, []).extend(notes)

    @property
    def covered(self) -> list[int]:
        return sorted(self.evidence)

    @property
    def missing(self) -> list[int]:
        return sorted(set(_BY_ID) - set(self.evidence))

    @property
    def complete(self) -> bool:
        return not self.missing

    def summary(self) -> str:
        return f"{len(self.evidence)}/{len(TASKS)}"

    def report(self) -> list[dict]:
        return [
            {
                "task_id": task.task_id,
                "actor": task.actor,
                "summary": task.summary,
                "covered": task.task_id in self.evidence,
                "evidence": list(self.evidence.get(task.task_id, ())),
            }
            for task in TASKS
        ]
