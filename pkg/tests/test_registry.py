"""Accounts, client registration, device tokens, and message authentication."""

import json
from types import SimpleNamespace

import pytest

from flapu import canonical, transport
from flapu.errors import (
    ClientNotValidated,
    DuplicateOrganizationRole,
    NoActiveContract,
    NotAuthorized,
    StaleGeneration,
    TokenAlreadyDelivered,
    TokenMismatch,
    UnknownClient,
)
from flapu.governance import GovernanceEngine
from flapu.provenance import Ledger
from flapu.registry import (
    ROLE_CLIENT_ADMIN,
    ROLE_PARTICIPANT,
    ClientRegistry,
)

from .support import sealed_contract

ORGS = ("Utility East", "Utility West", "Utility North")


@pytest.fixture
def world(tmp_path):
    ledger = Ledger(tmp_path / "ledger.jsonl")
    registry = ClientRegistry(ledger)
    engine = GovernanceEngine(ledger, participant_check=registry.is_registered_user)
    registry._contract_lookup = lambda cid: engine.state.contracts.get(cid)
    admin = registry.bootstrap_admin("Coordinator", "bootstrap-pw")
    accounts = []
    passwords = {}
    for org in ORGS:
        account, password = registry.create_user(admin, org, ROLE_PARTICIPANT)
        accounts.append(account)
        passwords[account.user_id] = password
    contract = sealed_contract(engine, [a.user_id for a in accounts])
    return SimpleNamespace(
        ledger=ledger,
        registry=registry,
        engine=engine,
        admin=admin,
        accounts=accounts,
        passwords=passwords,
        contract=contract,
    )


def register(world, account, **overrides):
    descriptor = {"contract_id": world.contract.contract_id, "test_ok": True}
    descriptor.update(overrides)
    return world.registry.register_client(account, descriptor)


class TestUsers:
    def test_create_and_login(self, world):
        account = world.accounts[0]
        token = world.registry.login(account.user_id, world.passwords[account.user_id])
        assert world.registry.authenticate_session(token).user_id == account.user_id

    def test_wrong_password_logs_and_raises(self, world):
        account = world.accounts[0]
        with pytest.raises(NotAuthorized):
            world.registry.login(account.user_id, "nope")
        fails = world.ledger.query(action="auth_fail")
        assert fails and fails[-1].detail["kind"] == "password"

    def test_one_account_per_role_per_organization(self, world):
        with pytest.raises(DuplicateOrganizationRole):
            world.registry.create_user(world.admin, ORGS[0], ROLE_PARTICIPANT)
        # a different role for the same organization is fine
        world.registry.create_user(world.admin, ORGS[0], ROLE_CLIENT_ADMIN)

    def test_only_server_admin_creates_users(self, world):
        with pytest.raises(NotAuthorized):
            world.registry.create_user(world.accounts[0], "Another Org", ROLE_PARTICIPANT)

    def test_account_docs_never_contain_credentials(self, world):
        doc = canonical.dumps(world.accounts[0].to_doc())
        assert "credential" not in doc and "$" not in doc


class TestRegistration:
    def test_signatory_is_validated(self, world):
        record = register(world, world.accounts[0])
        assert record.status == "Validated"

    def test_non_signatory_is_rejected_with_reason(self, world):
        outsider, _ = world.registry.create_user(world.admin, "Bystander Co", ROLE_PARTICIPANT)
        record = register(world, outsider)
        assert record.status == "Rejected"
        assert "signatory" in record.reject_reason

    def test_second_client_for_same_contract_is_rejected(self, world):
        register(world, world.accounts[0])
        record = register(world, world.accounts[0])
        assert record.status == "Rejected"
        assert "duplicate" in record.reject_reason

    def test_unknown_contract_is_refused_outright(self, world):
        with pytest.raises(NoActiveContract):
            register(world, world.accounts[0], contract_id="no-such")

    def test_every_attempt_leaves_a_record(self, world):
        register(world, world.accounts[0])
        register(world, world.accounts[0])  # rejected duplicate
        records = world.ledger.query(action="register")
        assert [r.outcome for r in records] == ["ok", "Rejected"]

    def test_listing_is_scoped_by_role(self, world):
        mine = register(world, world.accounts[0])
        theirs = register(world, world.accounts[1])
        all_ids = {c.client_id for c in world.registry.list_registered_clients(world.admin)}
        assert {mine.client_id, theirs.client_id} <= all_ids
        own = world.registry.list_registered_clients(world.accounts[0])
        assert [c.client_id for c in own] == [mine.client_id]


class TestTokens:
    def test_first_issue_is_generation_one(self, world):
        record = register(world, world.accounts[0])
        token = world.registry.issue_token(record.client_id, world.contract.contract_id)
        assert token.generation == 1 and token.state == "Active"
        assert len(token.secret) == transport.SECRET_BYTES

    def test_reissue_rotates_and_increments(self, world):
        record = register(world, world.accounts[0])
        first = world.registry.issue_token(record.client_id, world.contract.contract_id)
        second = world.registry.issue_token(record.client_id, world.contract.contract_id)
        assert (first.state, second.state) == ("Rotated", "Active")
        assert second.generation == first.generation + 1
        assert second.secret != first.secret
        actions = [r.action for r in world.ledger.query(subject=f"client/{record.client_id}")
                   if r.action in ("issue_token", "rotate")]
        assert actions == ["issue_token", "rotate"]

    def test_rejected_client_gets_no_token(self, world):
        register(world, world.accounts[0])
        rejected = register(world, world.accounts[0])
        with pytest.raises(ClientNotValidated):
            world.registry.issue_token(rejected.client_id, world.contract.contract_id)

    def test_delivery_is_one_time_and_owner_only(self, world):
        record = register(world, world.accounts[0])
        token = world.registry.issue_token(record.client_id, world.contract.contract_id)
        with pytest.raises(NotAuthorized):
            world.registry.deliver_token(world.accounts[1], record.client_id)
        handover = world.registry.deliver_token(world.accounts[0], record.client_id)
        assert handover["secret"] == token.secret.hex()
        assert handover["generation"] == 1
        with pytest.raises(TokenAlreadyDelivered):
            world.registry.deliver_token(world.accounts[0], record.client_id)
        # rotation produces a fresh secret, deliverable once again
        world.registry.issue_token(record.client_id, world.contract.contract_id)
        assert world.registry.deliver_token(world.accounts[0], record.client_id)["generation"] == 2

    def test_secrets_never_appear_in_any_serialized_surface(self, world):
        record = register(world, world.accounts[0])
        token = world.registry.issue_token(record.client_id, world.contract.contract_id)
        world.registry.issue_token(record.client_id, world.contract.contract_id)
        surfaces = [canonical.dumps(record.to_doc())]
        surfaces += [canonical.dumps(t.to_doc()) for t in world.registry.tokens.values()]
        surfaces += list(world.ledger.export_lines())
        blob = "\n".join(surfaces)
        for t in world.registry.tokens.values():
            assert t.secret.hex() not in blob


def _authenticated_client(world, account):
    record = register(world, account)
    token = world.registry.issue_token(record.client_id, world.contract.contract_id)
    return record, token


def _env(token, payload=b"{}", method="POST", path="/runs/r1/results", **overrides):
    kwargs = dict(
        payload=payload,
        secret=token.secret,
        client_id=token.client_id,
        generation=token.generation,
        method=method,
        path=path,
    )
    kwargs.update(overrides)
    return transport.pack(**kwargs)


class TestMessageAuthentication:
    def test_valid_envelope_authenticates(self, world):
        record, token = _authenticated_client(world, world.accounts[0])
        env = _env(token)
        assert world.registry.authenticate_message(env, "POST", "/runs/r1/results") == record.client_id

    def test_unknown_client_is_refused(self, world):
        _, token = _authenticated_client(world, world.accounts[0])
        env = _env(token, client_id="ghost")
        with pytest.raises(UnknownClient):
            world.registry.authenticate_message(env, "POST", "/runs/r1/results")

    def test_forged_tag_is_refused(self, world):
        record, token = _authenticated_client(world, world.accounts[0])
        env = _env(token, secret=bytes(transport.SECRET_BYTES))
        with pytest.raises(TokenMismatch):
            world.registry.authenticate_message(env, "POST", "/runs/r1/results")

    def test_old_generation_after_rotation_is_flagged_stale(self, world):
        record, old = _authenticated_client(world, world.accounts[0])
        world.registry.issue_token(record.client_id, world.contract.contract_id)
        env = _env(old)  # honest signature under the rotated secret
        with pytest.raises(StaleGeneration):
            world.registry.authenticate_message(env, "POST", "/runs/r1/results")

    def test_old_generation_with_bad_tag_is_plain_mismatch(self, world):
        record, old = _authenticated_client(world, world.accounts[0])
        world.registry.issue_token(record.client_id, world.contract.contract_id)
        env = _env(old, secret=bytes(transport.SECRET_BYTES))
        with pytest.raises(TokenMismatch):
            world.registry.authenticate_message(env, "POST", "/runs/r1/results")

    def test_future_generation_is_refused(self, world):
        record, token = _authenticated_client(world, world.accounts[0])
        env = _env(token, generation=token.generation + 5)
        with pytest.raises(TokenMismatch):
            world.registry.authenticate_message(env, "POST", "/runs/r1/results")

    def test_rotation_cannot_be_skipped(self, world):
        # exhaustively: after N rotations only the newest generation passes
        record, _ = _authenticated_client(world, world.accounts[0])
        tokens = [world.registry.active_token(record.client_id)]
        for _ in range(4):
            tokens.append(world.registry.issue_token(record.client_id, world.contract.contract_id))
        for stale in tokens[:-1]:
            with pytest.raises(StaleGeneration):
                world.registry.authenticate_message(_env(stale), "POST", "/runs/r1/results")
        assert (
            world.registry.authenticate_message(_env(tokens[-1]), "POST", "/runs/r1/results")
            == record.client_id
        )

    def test_failures_are_recorded(self, world):
        record, old = _authenticated_client(world, world.accounts[0])
        world.registry.issue_token(record.client_id, world.contract.contract_id)
        with pytest.raises(StaleGeneration):
            world.registry.authenticate_message(_env(old), "POST", "/runs/r1/results")
        fails = world.ledger.query(action="auth_fail")
        assert fails and fails[-1].outcome == "StaleGeneration"
        assert fails[-1].detail["generation"] == old.generation


class TestDuplicateTokenAlarm:
    def test_two_fingerprints_raise_alarm_and_flag_client(self, world):
        record, token = _authenticated_client(world, world.accounts[0])
        seen = []
        world.registry.alarm_hook = lambda cid, fps: seen.append((cid, fps))
        world.registry.authenticate_message(
            _env(token, instance="host-a"), "POST", "/runs/r1/results"
        )
        world.registry.authenticate_message(
            _env(token, instance="host-b"), "POST", "/runs/r1/results"
        )
        assert seen == [(record.client_id, ["host-a", "host-b"])]
        assert world.registry.get_client(record.client_id).flagged
        alarms = world.ledger.query(action="alarm")
        assert len(alarms) == 1 and alarms[0].subject == f"client/{record.client_id}"

    def test_single_fingerprint_is_quiet(self, world):
        record, token = _authenticated_client(world, world.accounts[0])
        for _ in range(3):
            world.registry.authenticate_message(
                _env(token, instance="host-a"), "POST", "/runs/r1/results"
            )
        assert not world.registry.get_client(record.client_id).flagged
        assert world.ledger.query(action="alarm") == []

    def test_rotation_resets_fingerprint_history(self, world):
        record, token = _authenticated_client(world, world.accounts[0])
        world.registry.authenticate_message(
            _env(token, instance="host-a"), "POST", "/runs/r1/results"
        )
        fresh = world.registry.issue_token(record.client_id, world.contract.contract_id)
        world.registry.authenticate_message(
            _env(fresh, instance="host-b"), "POST", "/runs/r1/results"
        )
        assert world.ledger.query(action="alarm") == []
