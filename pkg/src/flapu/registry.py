"""Identity management: participant accounts, client device registration,
per-run device tokens, and authentication of every inbound client message.

Human accounts use salted password digests and short-lived session tokens;
devices use 32-byte token secrets that rotate after every training run, with
the generation counter strictly increasing. Secrets never leave through any
serialized resource; the one-time delivery route hands the secret to the
owning participant exactly once per generation.
"""

from __future__ import annotations

import hashlib
import hmac
import secrets
import threading
import uuid
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import transport
from .errors import (
    ClientNotValidated,
    ContractNotSealed,
    DuplicateOrganizationRole,
    NoActiveContract,
    NotAuthorized,
    NotFound,
    StaleGeneration,
    TokenAlreadyDelivered,
    TokenMismatch,
    UnknownClient,
)
from .provenance import Ledger, utcnow

ROLE_SERVER_ADMIN = "ServerAdmin"
ROLE_PARTICIPANT = "Participant"
ROLE_CLIENT_ADMIN = "ClientAdmin"
ROLES = (ROLE_SERVER_ADMIN, ROLE_PARTICIPANT, ROLE_CLIENT_ADMIN)

_PBKDF2_ITERATIONS = 100_000


def _hash_password(password: str, salt: bytes) -> str:
    digest = hashlib.pbkdf2_hmac("sha256", password.encode("utf-8"), salt, _PBKDF2_ITERATIONS)
    return f"{salt.hex()}${digest.hex()}"


def _verify_password(password: str, stored: str) -> bool:
    try:
        salt_hex, digest_hex = stored.split("$")
    except ValueError:
        return False
    candidate = _hash_password(password, bytes.fromhex(salt_hex))
    return hmac.compare_digest(candidate, stored)


@dataclass
class UserAccount:
    user_id: str
    organization: str
    role: str
    credential_hash: str
    status: str = "Active"  # Active | Disabled

    def to_doc(self) -> dict:
        # credential hash never serializes outward
        return {
            "user_id": self.user_id,
            "organization": self.organization,
            "role": self.role,
            "status": self.status,
        }


@dataclass
class ClientRecord:
    client_id: str
    owner: str
    contract_id: str
    status: str  # Pending | Validated | Rejected | Revoked
    registered_at: str
    reject_reason: str = ""
    current_token_id: Optional[str] = None
    test_ok: bool = False
    flagged: bool = False

    def to_doc(self) -> dict:
        return {
            "client_id": self.client_id,
            "owner": self.owner,
            "contract_id": self.contract_id,
            "status": self.status,
            "registered_at": self.registered_at,
            "reject_reason": self.reject_reason,
            "current_token_id": self.current_token_id,
            "test_ok": self.test_ok,
            "flagged": self.flagged,
        }


@dataclass
class DeviceToken:
    token_id: str
    client_id: str
    secret: bytes
    contract_id: str
    generation: int
    state: str = "Active"  # Active | Rotated | Revoked
    issued_at: str = field(default_factory=utcnow)
    delivered: bool = False

    def to_doc(self) -> dict:
        # the secret is deliberately absent
        return {
            "token_id": self.token_id,
            "client_id": self.client_id,
            "contract_id": self.contract_id,
            "generation": self.generation,
            "state": self.state,
            "issued_at": self.issued_at,
            "delivered": self.delivered,
        }


class ClientRegistry:
    """Users, clients, and device tokens, with serialized mutations.

    ``contract_lookup`` resolves a contract id to its sealed contract (or
    raises); ``alarm_hook`` lets the run orchestrator react to duplicate-token
    alarms without a circular dependency.
    """

    def __init__(
        self,
        ledger: Ledger,
        contract_lookup: Optional[Callable[[str], object]] = None,
    ):
        self._ledger = ledger
        self._lock = threading.RLock()
        self._contract_lookup = contract_lookup or (lambda _cid: None)
        self.alarm_hook: Optional[Callable[[str, list[str]], None]] = None
        self.users: dict[str, UserAccount] = {}
        self.clients: dict[str, ClientRecord] = {}
        self.tokens: dict[str, DeviceToken] = {}
        self._sessions: dict[str, str] = {}  # session token -> user_id
        self._fingerprints: dict[tuple[str, int], set[str]] = {}

    # -- users --------------------------------------------------------------

    def bootstrap_admin(self, organization: str, password: str) -> UserAccount:
        """Create the initial server administrator (no caller check; startup only)."""
        with self._lock:
            account = UserAccount(
                user_id="admin",
                organization=organization,
                role=ROLE_SERVER_ADMIN,
                credential_hash=_hash_password(password, secrets.token_bytes(16)),
            )
            self.users[account.user_id] = account
            return account

    def create_user(self, caller: UserAccount, organization: str, role: str) -> tuple[UserAccount, str]:
        """Returns the account and its generated initial password (shown once)."""
        with self._lock:
            if caller.role != ROLE_SERVER_ADMIN:
                raise NotAuthorized(f"role {caller.role} may not create users")
            if role not in ROLES:
                raise NotAuthorized(f"unknown role {role!r}")
            for account in self.users.values():
                if account.organization == organization and account.role == role:
                    raise DuplicateOrganizationRole(
                        f"{organization!r} already has an account with role {role}"
                    )
            password = secrets.token_urlsafe(12)
            user_id = organization.lower().replace(" ", "-") + "-" + role.lower()
            account = UserAccount(
                user_id=user_id,
                organization=organization,
                role=role,
                credential_hash=_hash_password(password, secrets.token_bytes(16)),
            )
            self.users[user_id] = account
            self._ledger.append(
                actor=caller.user_id,
                action="create_user",
                subject=f"user/{user_id}",
                detail={"organization": organization, "role": role, "user_id": user_id},
            )
            return account, password

    def get_user(self, user_id: str) -> UserAccount:
        user = self.users.get(user_id)
        if user is None:
            raise NotFound(f"no user {user_id!r}")
        return user

    def is_registered_user(self, user_id: str) -> bool:
        return user_id in self.users and self.users[user_id].status == "Active"

    # -- human sessions -------------------------------------------------------

    def login(self, user_id: str, password: str) -> str:
        with self._lock:
            user = self.users.get(user_id)
            if user is None or user.status != "Active" or not _verify_password(password, user.credential_hash):
                self._ledger.append(
                    actor=user_id, action="auth_fail", subject="login", outcome="AuthFailed",
                    detail={"kind": "password"},
                )
                raise NotAuthorized("bad credentials")
            token = secrets.token_urlsafe(24)
            self._sessions[token] = user_id
            return token

    def authenticate_session(self, session_token: str) -> UserAccount:
        user_id = self._sessions.get(session_token)
        if user_id is None:
            raise NotAuthorized("invalid or expired session")
        return self.users[user_id]

    # -- clients --------------------------------------------------------------

    def register_client(self, caller: UserAccount, descriptor: dict) -> ClientRecord:
        """Accepts the request, then validates it: owner must be a signatory of
        the named sealed contract and must not already hold a validated client
        for it. Failed validation leaves a Rejected record with the reason."""
        with self._lock:
            if caller.role != ROLE_PARTICIPANT:
                raise NotAuthorized("only participants register clients")
            contract_id = descriptor.get("contract_id", "")
            contract = self._contract_lookup(contract_id)
            if contract is None:
                raise NoActiveContract(f"no sealed contract {contract_id!r}")
            record = ClientRecord(
                client_id=descriptor.get("client_id") or uuid.uuid4().hex[:12],
                owner=caller.user_id,
                contract_id=contract_id,
                status="Pending",
                registered_at=utcnow(),
                test_ok=bool(descriptor.get("test_ok", False)),
            )
            if caller.user_id not in contract.signatories:
                record.status = "Rejected"
                record.reject_reason = "not a signatory"
            elif any(
                c.owner == caller.user_id and c.contract_id == contract_id and c.status == "Validated"
                for c in self.clients.values()
            ):
                record.status = "Rejected"
                record.reject_reason = "duplicate: participant already has a validated client"
            else:
                record.status = "Validated"
            self.clients[record.client_id] = record
            self._ledger.append(
                actor=caller.user_id,
                action="register",
                subject=f"client/{record.client_id}",
                outcome="ok" if record.status == "Validated" else "Rejected",
                detail={
                    "client_id": record.client_id,
                    "contract_id": contract_id,
                    "status": record.status,
                    "reason": record.reject_reason,
                },
            )
            return record

    def get_client(self, client_id: str) -> ClientRecord:
        client = self.clients.get(client_id)
        if client is None:
            raise NotFound(f"no client {client_id!r}")
        return client

    def list_registered_clients(self, caller: UserAccount) -> list[ClientRecord]:
        with self._lock:
            if caller.role == ROLE_SERVER_ADMIN:
                return list(self.clients.values())
            if caller.role == ROLE_PARTICIPANT:
                return [c for c in self.clients.values() if c.owner == caller.user_id]
            raise NotAuthorized(f"role {caller.role} has no registry access")

    # -- tokens -----------------------------------------------------------------

    def issue_token(self, client_id: str, contract_id: str) -> DeviceToken:
        """First issuance starts at generation 1; re-issuance rotates: the
        previous token becomes Rotated and its replay nonces are forgotten."""
        with self._lock:
            client = self.get_client(client_id)
            if client.status != "Validated":
                raise ClientNotValidated(f"client {client_id} is {client.status}")
            contract = self._contract_lookup(contract_id)
            if contract is None:
                raise ContractNotSealed(f"no sealed contract {contract_id!r}")
            previous = self.tokens.get(client.current_token_id) if client.current_token_id else None
            generation = (previous.generation + 1) if previous else 1
            if previous is not None:
                previous.state = "Rotated"
            token = DeviceToken(
                token_id=uuid.uuid4().hex[:12],
                client_id=client_id,
                secret=secrets.token_bytes(transport.SECRET_BYTES),
                contract_id=contract_id,
                generation=generation,
            )
            self.tokens[token.token_id] = token
            client.current_token_id = token.token_id
            self._ledger.append(
                actor="system",
                action="issue_token" if previous is None else "rotate",
                subject=f"client/{client_id}",
                detail={"token_id": token.token_id, "generation": generation},
            )
            return token

    def active_token(self, client_id: str) -> Optional[DeviceToken]:
        client = self.clients.get(client_id)
        if client is None or client.current_token_id is None:
            return None
        token = self.tokens[client.current_token_id]
        return token if token.state == "Active" else None

    def deliver_token(self, caller: UserAccount, client_id: str) -> dict:
        """One-time handover of the secret to the owning participant."""
        with self._lock:
            client = self.get_client(client_id)
            if caller.role != ROLE_PARTICIPANT or caller.user_id != client.owner:
                raise NotAuthorized("token delivery is restricted to the owning participant")
            token = self.active_token(client_id)
            if token is None:
                raise NotFound(f"client {client_id} has no active token")
            if token.delivered:
                raise TokenAlreadyDelivered(
                    f"generation {token.generation} secret was already fetched"
                )
            token.delivered = True
            return {
                "client_id": client_id,
                "generation": token.generation,
                "secret": token.secret.hex(),
            }

    # -- message authentication ---------------------------------------------------

    def authenticate_message(self, envelope: transport.Envelope, method: str, path: str) -> str:
        """Returns the client id iff the envelope tag verifies against the
        client's Active token at the matching generation. Failures are logged;
        a verifying tag under a rotated token is flagged as a stale generation
        (possibly stolen token)."""

        def fail(exc_cls, why: str):
            self._ledger.append(
                actor=envelope.client_id or "unknown",
                action="auth_fail",
                subject=f"{method} {path}",
                outcome=exc_cls.code,
                detail={"why": why, "generation": envelope.generation},
            )
            raise exc_cls(why)

        client = self.clients.get(envelope.client_id)
        if client is None:
            fail(UnknownClient, f"no client {envelope.client_id!r}")
        if client.status != "Validated":
            fail(UnknownClient, f"client {envelope.client_id} is {client.status}")
        active = self.active_token(envelope.client_id)
        if active is None:
            fail(UnknownClient, f"client {envelope.client_id} has no active token")

        if envelope.generation == active.generation:
            expected = transport.compute_tag(
                active.secret,
                envelope.client_id,
                envelope.generation,
                method,
                path,
                envelope.nonce,
                envelope.payload,
            )
            if not transport.tags_equal(expected, envelope.tag):
                fail(TokenMismatch, "tag does not verify under the active token")
            self._observe_fingerprint(envelope)
            return envelope.client_id

        if envelope.generation < active.generation:
            for token in self.tokens.values():
                if (
                    token.client_id == envelope.client_id
                    and token.generation == envelope.generation
                    and token.state == "Rotated"
                ):
                    expected = transport.compute_tag(
                        token.secret,
                        envelope.client_id,
                        envelope.generation,
                        method,
                        path,
                        envelope.nonce,
                        envelope.payload,
                    )
                    if transport.tags_equal(expected, envelope.tag):
                        fail(
                            StaleGeneration,
                            f"token generation {envelope.generation} was rotated "
                            f"(active is {active.generation})",
                        )
            fail(TokenMismatch, "tag does not verify under any known token")
        fail(TokenMismatch, f"generation {envelope.generation} is ahead of the active token")
        raise AssertionError("unreachable")

    def _observe_fingerprint(self, envelope: transport.Envelope) -> None:
        if not envelope.instance:
            return
        key = (envelope.client_id, envelope.generation)
        seen = self._fingerprints.setdefault(key, set())
        if envelope.instance not in seen:
            seen.add(envelope.instance)
            if len(seen) > 1:
                self.duplicate_token_alarm(envelope.client_id, sorted(seen))

    def duplicate_token_alarm(self, client_id: str, endpoint_fingerprints: list[str]) -> dict:
        """Same active token seen from two transport fingerprints: flag the
        client, record the alarm, and notify the orchestrator to pause."""
        with self._lock:
            client = self.get_client(client_id)
            client.flagged = True
            alarm = {
                "client_id": client_id,
                "fingerprints": list(endpoint_fingerprints),
                "at": utcnow(),
            }
            self._ledger.append(
                actor="system",
                action="alarm",
                subject=f"client/{client_id}",
                detail=alarm,
            )
        if self.alarm_hook is not None:
            self.alarm_hook(client_id, list(endpoint_fingerprints))
        return alarm
