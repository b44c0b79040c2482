"""Negotiation of training contracts among participants.

Sessions move through proposal/vote cycles per topic until every topic has a
unanimously accepted proposal, at which point the session can be sealed into
an immutable contract. Every mutation is expressed as an event: the public
operations validate, build the event (generating ids and timestamps), apply
it, and append it to the provenance ledger. Replaying the ledger through
:func:`apply_event` reconstructs identical session state, byte for byte.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from . import canonical
from .errors import (
    AlreadySealed,
    DuplicateParticipant,
    NotAParticipant,
    PayloadTypeMismatch,
    ProposalNotOpen,
    SessionSealed,
    TooFewParticipants,
    TopicsUnresolved,
    UnknownParticipant,
    NotFound,
)
from .provenance import Ledger, utcnow

TOPIC_KEYS = (
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
)

CUSTOM_PREFIX = "custom:"

ACCEPT = "Accept"
REJECT = "Reject"


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _check_bounds_map(value: Any) -> bool:
    if not isinstance(value, dict) or not value:
        return False
    for name, pair in value.items():
        if not isinstance(name, str):
            return False
        if not (isinstance(pair, (list, tuple)) and len(pair) == 2):
            return False
        lo, hi = pair
        if not (_is_number(lo) and _is_number(hi) and lo < hi):
            return False
    return True


def _check_data_schema(value: Any) -> bool:
    if not isinstance(value, dict):
        return False
    columns = value.get("columns")
    if not isinstance(columns, list) or len(columns) < 2:
        return False
    for col in columns:
        if not (isinstance(col, (list, tuple)) and len(col) == 2):
            return False
        name, kind = col
        if not isinstance(name, str) or kind not in ("timestamp", "real"):
            return False
    kinds = [kind for _, kind in columns]
    if kinds.count("timestamp") != 1 or columns[0][1] != "timestamp":
        return False
    max_missing = value.get("max_missing_fraction", 0.0)
    return _is_number(max_missing) and 0 <= max_missing < 1


TOPIC_VALIDATORS: dict[str, Callable[[Any], bool]] = {
    "data_schema": _check_data_schema,
    "time_frequency": lambda v: _is_number(v) and v > 0,
    "value_ranges": _check_bounds_map,
    "lag_window": lambda v: _is_int(v) and v >= 1,
    "normalization_bounds": _check_bounds_map,
    "model_kind": lambda v: v == "linear_regression",
    "learning_rate": lambda v: _is_number(v) and v > 0,
    "local_epochs": lambda v: _is_int(v) and v >= 1,
    "rounds": lambda v: _is_int(v) and v >= 1,
    "train_test_split": lambda v: _is_number(v) and 0 < v < 1,
    "evaluation_metrics": lambda v: (
        isinstance(v, list)
        and len(v) > 0
        and len(set(v)) == len(v)
        and all(m in ("MAE", "RMSE") for m in v)
    ),
    "min_clients": lambda v: _is_int(v) and v >= 2,
    "deploy_threshold_default": lambda v: _is_number(v) and v > 0,
}


def validate_topic_payload(topic_key: str, payload: Any) -> None:
    if topic_key.startswith(CUSTOM_PREFIX):
        return  # free-form namespace, no semantics attached
    checker = TOPIC_VALIDATORS.get(topic_key)
    if checker is None:
        raise PayloadTypeMismatch(f"unknown topic key {topic_key!r}")
    if not checker(payload):
        raise PayloadTypeMismatch(f"payload {payload!r} is not valid for topic {topic_key!r}")


# ---------------------------------------------------------------------------
# state


@dataclass
class Proposal:
    proposal_id: str
    author: str
    payload: Any
    votes: dict[str, str] = field(default_factory=dict)
    state: str = "Proposed"  # Proposed | Agreed | Superseded

    def to_doc(self) -> dict:
        return {
            "proposal_id": self.proposal_id,
            "author": self.author,
            "payload": self.payload,
            "votes": dict(self.votes),
            "state": self.state,
        }


@dataclass
class Topic:
    key: str
    proposals: list[Proposal] = field(default_factory=list)
    agreed_proposal_id: Optional[str] = None
    default: Any = None

    def to_doc(self) -> dict:
        return {
            "key": self.key,
            "proposals": [p.to_doc() for p in self.proposals],
            "agreed_proposal_id": self.agreed_proposal_id,
            "default": self.default,
        }


@dataclass
class NegotiationSession:
    session_id: str
    participants: list[str]  # sorted, immutable after creation
    topics: dict[str, Topic]
    status: str = "Open"  # Open | Sealed | Abandoned
    contract_id: Optional[str] = None
    version: int = 1

    def topic(self, key: str) -> Topic:
        if key not in self.topics:
            raise NotFound(f"no topic {key!r} in session {self.session_id}")
        return self.topics[key]

    def find_proposal(self, proposal_id: str) -> tuple[Topic, Proposal]:
        for topic in self.topics.values():
            for proposal in topic.proposals:
                if proposal.proposal_id == proposal_id:
                    return topic, proposal
        raise NotFound(f"no proposal {proposal_id!r} in session {self.session_id}")

    def unresolved_topics(self) -> list[str]:
        return [
            key
            for key in sorted(self.topics)
            if not key.startswith(CUSTOM_PREFIX) and self.topics[key].agreed_proposal_id is None
        ]

    def to_doc(self) -> dict:
        return {
            "session_id": self.session_id,
            "participants": list(self.participants),
            "topics": {key: topic.to_doc() for key, topic in self.topics.items()},
            "status": self.status,
            "contract_id": self.contract_id,
            "version": self.version,
        }


@dataclass
class GovernanceContract:
    contract_id: str
    session_id: str
    agreed_values: dict[str, Any]
    sealed_at: str
    signatories: list[str]

    def to_doc(self) -> dict:
        return {
            "contract_id": self.contract_id,
            "session_id": self.session_id,
            "agreed_values": self.agreed_values,
            "sealed_at": self.sealed_at,
            "signatories": list(self.signatories),
        }

    def canonical_bytes(self) -> bytes:
        return canonical.dump_bytes(self.to_doc())

    def content_hash(self) -> str:
        return canonical.content_hash(self.to_doc())


# ---------------------------------------------------------------------------
# event application (pure, deterministic given the event)

GOVERNANCE_ACTIONS = ("open_session", "propose", "vote", "seal", "renegotiate")


class GovernanceState:
    """All sessions and contracts; the target of event application."""

    def __init__(self):
        self.sessions: dict[str, NegotiationSession] = {}
        self.contracts: dict[str, GovernanceContract] = {}


def _new_session_from_event(event: dict) -> NegotiationSession:
    topics = {}
    for key in event["topic_keys"]:
        topics[key] = Topic(key=key, default=event.get("topic_defaults", {}).get(key))
    session = NegotiationSession(
        session_id=event["session_id"],
        participants=list(event["participants"]),
        topics=topics,
        version=event.get("version", 1),
    )
    for pre in event.get("prefill", []):
        topic = session.topics[pre["topic_key"]]
        topic.proposals.append(
            Proposal(
                proposal_id=pre["proposal_id"],
                author=event["requested_by"],
                payload=pre["payload"],
                votes={event["requested_by"]: ACCEPT},
            )
        )
    return session


def apply_event(state: GovernanceState, action: str, event: dict) -> None:
    """Apply one recorded negotiation event. Pure state transition: all ids and
    timestamps come from the event, so replay is exact."""
    if action == "open_session":
        state.sessions[event["session_id"]] = _new_session_from_event(event)
    elif action == "propose":
        session = state.sessions[event["session_id"]]
        topic = session.topics[event["topic_key"]]
        for prior in topic.proposals:
            if prior.state == "Proposed":
                prior.state = "Superseded"
        topic.proposals.append(
            Proposal(
                proposal_id=event["proposal_id"],
                author=event["author"],
                payload=event["payload"],
                votes={event["author"]: ACCEPT},
            )
        )
    elif action == "vote":
        session = state.sessions[event["session_id"]]
        _, proposal = session.find_proposal(event["proposal_id"])
        proposal.votes[event["participant"]] = event["vote"]
        accepted = all(
            proposal.votes.get(member) == ACCEPT for member in session.participants
        )
        if accepted:
            proposal.state = "Agreed"
            topic, _ = session.find_proposal(event["proposal_id"])
            topic.agreed_proposal_id = proposal.proposal_id
    elif action == "seal":
        session = state.sessions[event["session_id"]]
        session.status = "Sealed"
        session.contract_id = event["contract_id"]
        state.contracts[event["contract_id"]] = GovernanceContract(
            contract_id=event["contract_id"],
            session_id=event["session_id"],
            agreed_values=event["agreed_values"],
            sealed_at=event["sealed_at"],
            signatories=list(event["signatories"]),
        )
    elif action == "renegotiate":
        old = state.sessions.get(event.get("previous_session_id", ""))
        if old is not None and old.status == "Open":
            old.status = "Abandoned"
        state.sessions[event["session_id"]] = _new_session_from_event(event)
    else:
        raise ValueError(f"not a governance action: {action!r}")


def replay(records) -> GovernanceState:
    """Rebuild governance state from ledger records (ignores other actions)."""
    state = GovernanceState()
    for rec in records:
        if rec.action in GOVERNANCE_ACTIONS and rec.outcome == "ok":
            apply_event(state, rec.action, rec.detail)
    return state


# ---------------------------------------------------------------------------
# engine


class GovernanceEngine:
    """Validates operations, generates events, applies them, and records them.

    ``participant_check`` hooks into user management so only registered
    participants can be placed in a session.
    """

    def __init__(self, ledger: Ledger, participant_check: Optional[Callable[[str], bool]] = None):
        self._ledger = ledger
        self._check = participant_check or (lambda _: True)
        self._lock = threading.RLock()
        self.state = GovernanceState()

    # -- reads ------------------------------------------------------------

    def get_session(self, session_id: str) -> NegotiationSession:
        with self._lock:
            session = self.state.sessions.get(session_id)
            if session is None:
                raise NotFound(f"no session {session_id!r}")
            return session

    def get_contract(self, contract_id: str) -> GovernanceContract:
        with self._lock:
            contract = self.state.contracts.get(contract_id)
            if contract is None:
                raise NotFound(f"no contract {contract_id!r}")
            return contract

    def list_sessions(self) -> list[NegotiationSession]:
        with self._lock:
            return list(self.state.sessions.values())

    # -- mutations ---------------------------------------------------------

    def _commit(self, actor: str, action: str, subject: str, event: dict) -> None:
        apply_event(self.state, action, event)
        self._ledger.append(actor=actor, action=action, subject=subject, detail=event)

    def open_session(
        self,
        opened_by: str,
        participants: list[str],
        topic_defaults: Optional[dict] = None,
        extra_topics: Optional[list[str]] = None,
    ) -> NegotiationSession:
        with self._lock:
            if len(set(participants)) != len(participants):
                raise DuplicateParticipant(f"participants {participants} contain duplicates")
            if len(participants) < 2:
                raise TooFewParticipants(f"need at least 2 participants, got {len(participants)}")
            for member in participants:
                if not self._check(member):
                    raise UnknownParticipant(f"participant {member!r} is not a registered user")
            for key in extra_topics or []:
                if not key.startswith(CUSTOM_PREFIX):
                    raise PayloadTypeMismatch(
                        f"extra topics must live under the {CUSTOM_PREFIX!r} namespace, got {key!r}"
                    )
            event = {
                "session_id": uuid.uuid4().hex[:12],
                "participants": sorted(participants),
                "topic_keys": list(TOPIC_KEYS) + sorted(extra_topics or []),
                "topic_defaults": topic_defaults or {},
                "version": 1,
                "opened_by": opened_by,
                "at": utcnow(),
            }
            self._commit(opened_by, "open_session", f"session/{event['session_id']}", event)
            return self.state.sessions[event["session_id"]]

    def _open_session_checked(self, session_id: str) -> NegotiationSession:
        session = self.get_session(session_id)
        if session.status == "Sealed":
            raise SessionSealed(f"session {session_id} is sealed")
        if session.status == "Abandoned":
            raise SessionSealed(f"session {session_id} was abandoned by renegotiation")
        return session

    def _member_checked(self, session: NegotiationSession, participant: str) -> None:
        if participant not in session.participants:
            raise NotAParticipant(f"{participant!r} is not a member of session {session.session_id}")

    def submit_proposal(
        self, session_id: str, participant: str, topic_key: str, payload: Any
    ) -> Proposal:
        with self._lock:
            session = self._open_session_checked(session_id)
            self._member_checked(session, participant)
            topic = session.topic(topic_key)
            if topic.agreed_proposal_id is not None:
                raise ProposalNotOpen(f"topic {topic_key!r} already has an agreed proposal")
            validate_topic_payload(topic_key, payload)
            event = {
                "session_id": session_id,
                "proposal_id": uuid.uuid4().hex[:12],
                "topic_key": topic_key,
                "author": participant,
                "payload": payload,
                "at": utcnow(),
            }
            self._commit(participant, "propose", f"session/{session_id}/topic/{topic_key}", event)
            _, proposal = session.find_proposal(event["proposal_id"])
            return proposal

    def cast_vote(self, session_id: str, participant: str, proposal_id: str, vote: str) -> Proposal:
        with self._lock:
            session = self._open_session_checked(session_id)
            self._member_checked(session, participant)
            _, proposal = session.find_proposal(proposal_id)
            if proposal.state != "Proposed":
                raise ProposalNotOpen(f"proposal {proposal_id} is {proposal.state}")
            if vote not in (ACCEPT, REJECT):
                raise PayloadTypeMismatch(f"vote must be {ACCEPT!r} or {REJECT!r}, got {vote!r}")
            event = {
                "session_id": session_id,
                "proposal_id": proposal_id,
                "participant": participant,
                "vote": vote,
                "at": utcnow(),
            }
            self._commit(participant, "vote", f"session/{session_id}/proposal/{proposal_id}", event)
            return proposal

    def seal_session(self, session_id: str, sealed_by: str) -> GovernanceContract:
        with self._lock:
            session = self.get_session(session_id)
            if session.status == "Sealed":
                raise AlreadySealed(f"session {session_id} is already sealed")
            if session.status == "Abandoned":
                raise SessionSealed(f"session {session_id} was abandoned by renegotiation")
            self._member_checked(session, sealed_by)
            unresolved = session.unresolved_topics()
            if unresolved:
                raise TopicsUnresolved(
                    f"topics without agreement: {', '.join(unresolved)}", topics=unresolved
                )
            agreed_values = {}
            for key, topic in session.topics.items():
                if topic.agreed_proposal_id is None:
                    continue  # unresolved custom topics stay out of the contract
                _, proposal = session.find_proposal(topic.agreed_proposal_id)
                agreed_values[key] = proposal.payload
            event = {
                "session_id": session_id,
                "contract_id": uuid.uuid4().hex[:12],
                "agreed_values": agreed_values,
                "sealed_at": utcnow(),
                "signatories": list(session.participants),
                "sealed_by": sealed_by,
            }
            self._commit(sealed_by, "seal", f"contract/{event['contract_id']}", event)
            return self.state.contracts[event["contract_id"]]

    def request_renegotiation(self, ref_id: str, participant: str, reason: str) -> NegotiationSession:
        """Open a follow-up session (version + 1) from a session or contract id,
        pre-filled with the previous agreed values as fresh proposals."""
        with self._lock:
            contract = self.state.contracts.get(ref_id)
            if contract is not None:
                previous = self.get_session(contract.session_id)
            else:
                previous = self.get_session(ref_id)
            if participant not in previous.participants:
                raise NotAParticipant(f"{participant!r} is not a signatory/participant of {ref_id}")
            prefill = []
            for key in sorted(previous.topics):
                topic = previous.topics[key]
                if topic.agreed_proposal_id is None:
                    continue
                _, agreed = previous.find_proposal(topic.agreed_proposal_id)
                prefill.append(
                    {
                        "topic_key": key,
                        "proposal_id": uuid.uuid4().hex[:12],
                        "payload": agreed.payload,
                    }
                )
            event = {
                "session_id": uuid.uuid4().hex[:12],
                "previous_session_id": previous.session_id,
                "participants": list(previous.participants),
                "topic_keys": list(previous.topics.keys()),
                "topic_defaults": {},
                "version": previous.version + 1,
                "requested_by": participant,
                "reason": reason,
                "prefill": prefill,
                "at": utcnow(),
            }
            self._commit(participant, "renegotiate", f"session/{event['session_id']}", event)
            return self.state.sessions[event["session_id"]]
