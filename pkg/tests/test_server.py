"""HTTP surface: sessions, envelopes, replay rejection, and full runs over routes."""

import zlib

import pytest

from flapu import canonical, transport
from flapu.provenance import Ledger

from .support import TOPIC_PAYLOADS, DeviceSession, drive_http_run, http_world, refresh_devices


@pytest.fixture(scope="module")
def fresh():
    """One fully negotiated world per module; tests that mutate runs start their own."""
    return http_world(overrides={"rounds": 2})


class TestSessions:
    def test_health_needs_no_auth(self, fresh):
        resp = fresh.http.get("/health")
        assert resp.status_code == 200
        assert resp.json()["status"] == "ok"

    def test_missing_session_rejected(self, fresh):
        resp = fresh.http.get("/runs")
        assert resp.status_code == 401
        assert resp.json()["error"] == "AuthFailed"

    def test_bad_password_recorded(self, fresh):
        resp = fresh.http.post(
            "/auth/login",
            content=canonical.dumps({"user_id": "admin", "password": "wrong"}).encode(),
        )
        assert resp.status_code == 403
        fails = fresh.state.ledger.query(action="auth_fail", subject="login")
        assert fails and fails[-1].actor == "admin"

    def test_whoami(self, fresh):
        doc = fresh.admin.get("/auth/whoami").json()
        assert doc["user_id"] == "admin"
        assert doc["role"] == "ServerAdmin"
        assert "credential_hash" not in canonical.dumps(doc)

    def test_participant_cannot_list_users(self, fresh):
        resp = fresh.participants[0].get("/users")
        assert resp.status_code == 403
        assert resp.json()["error"] == "NotAuthorized"


class TestGovernanceRoutes:
    def test_contract_carries_every_agreed_value(self, fresh):
        doc = fresh.admin.get(f"/contracts/{fresh.contract_id}").json()
        assert doc["agreed_values"] == dict(TOPIC_PAYLOADS, rounds=2)
        assert sorted(doc["signatories"]) == sorted(p.user_id for p in fresh.participants)

    def test_sealing_compiled_a_job(self, fresh):
        job = fresh.admin.get(f"/jobs/{fresh.job_id}").json()
        assert job["origin"] == "Contract"
        assert job["contract_id"] == fresh.contract_id
        assert job["rounds"] == 2

    def test_vote_on_sealed_session_conflicts(self, fresh):
        session = fresh.admin.get(f"/sessions/{fresh.session_id}").json()
        proposal_id = session["topics"]["rounds"]["proposals"][0]["proposal_id"]
        resp = fresh.participants[1].post(
            f"/proposals/{proposal_id}/votes",
            {"session_id": fresh.session_id, "vote": "Accept"},
        )
        assert resp.status_code == 409
        assert resp.json()["error"] == "SessionSealed"

    def test_renegotiation_spawns_next_version(self, fresh):
        resp = fresh.participants[0].post(
            "/renegotiations", {"ref_id": fresh.contract_id, "reason": "new data source"}
        )
        assert resp.status_code == 201
        doc = resp.json()
        assert doc["version"] == 2
        assert doc["status"] == "Open"

    def test_outsider_cannot_propose(self, fresh):
        outsider = fresh.admin.post(
            "/users", {"organization": "Org X", "role": "Participant"}
        ).json()
        from .support import HumanSession

        session = HumanSession(fresh.http, outsider["user"]["user_id"], outsider["initial_password"])
        resp = session.post(
            f"/sessions/{fresh.session_id}/topics/rounds/proposals", {"payload": 3}
        )
        assert resp.status_code in (403, 409)  # sealed wins, membership otherwise


class TestTokenRoutes:
    def test_secret_delivered_exactly_once(self, fresh):
        participant = fresh.participants[0]
        client_id = fresh.devices[0].client_id
        again = participant.get(f"/clients/{client_id}/token")
        assert again.status_code == 409
        assert again.json()["error"] == "TokenAlreadyDelivered"

    def test_non_owner_cannot_fetch_secret(self, fresh):
        client_id = fresh.devices[0].client_id
        resp = fresh.participants[1].get(f"/clients/{client_id}/token")
        assert resp.status_code == 403

    def test_clients_listing_scoped_by_role(self, fresh):
        all_clients = fresh.admin.get("/clients").json()["clients"]
        assert {c["client_id"] for c in all_clients} >= set(fresh.client_ids)
        own = fresh.participants[0].get("/clients").json()["clients"]
        assert [c["client_id"] for c in own] == [fresh.devices[0].client_id]
        assert "secret" not in canonical.dumps(all_clients)


class TestEnvelopeAuth:
    def test_missing_envelope_rejected(self, fresh):
        resp = fresh.http.get(f"/assignments/{fresh.client_ids[0]}")
        assert resp.status_code == 401

    def test_valid_envelope_lists_assignments(self, fresh):
        device = fresh.devices[0]
        resp = device.get(f"/assignments/{device.client_id}")
        assert resp.status_code == 200
        assert "runs" in resp.json()

    def test_replayed_nonce_rejected_and_recorded(self, fresh):
        device = fresh.devices[0]
        path = f"/assignments/{device.client_id}"
        env = device._envelope("GET", path)
        first = fresh.http.get(path, headers=env.headers())
        assert first.status_code == 200
        replay = fresh.http.get(path, headers=env.headers())
        assert replay.status_code == 409
        assert replay.json()["error"] == "ReplayDetected"
        fails = fresh.state.ledger.query(action="auth_fail", actor=device.client_id)
        assert any(r.outcome == "ReplayDetected" for r in fails)

    def test_forged_tag_rejected(self, fresh):
        device = fresh.devices[0]
        path = f"/assignments/{device.client_id}"
        env = device._envelope("GET", path)
        headers = env.headers()
        headers["x-fl-tag"] = "0" * 64
        resp = fresh.http.get(path, headers=headers)
        assert resp.status_code == 401
        assert resp.json()["error"] == "TokenMismatch"

    def test_cross_client_fetch_is_auth_failure(self, fresh):
        intruder, victim = fresh.devices[1], fresh.devices[0]
        path = f"/assignments/{victim.client_id}"
        env = intruder._envelope("GET", path)
        resp = fresh.http.get(path, headers=env.headers())
        assert resp.status_code == 401
        assert resp.json()["error"] == "AuthFailed"
        fails = fresh.state.ledger.query(action="auth_fail", actor=intruder.client_id)
        assert any(r.detail.get("why") == "cross-client access" for r in fails)

    def test_wrong_path_binding_rejected(self, fresh):
        device = fresh.devices[0]
        env = device._envelope("GET", "/assignments/somewhere-else")
        resp = fresh.http.get(f"/assignments/{device.client_id}", headers=env.headers())
        assert resp.status_code == 401


class TestRunsOverHttp:
    def test_full_run_completes_and_rotates(self, tmp_path):
        world = http_world(tmp_path=tmp_path, overrides={"rounds": 2})
        run_id = drive_http_run(world, rounds=2)

        run = world.admin.get(f"/runs/{run_id}").json()
        assert run["phase"] == "Completed"
        assert len(run["global_model_versions"]) == 3  # round 0 + 2 aggregates

        # completion rotated every token: the old generation is now stale
        stale = world.devices[0].get(f"/deployments/{world.devices[0].client_id}")
        assert stale.status_code == 401
        assert stale.json()["error"] == "StaleGeneration"

        refresh_devices(world)
        assert world.devices[0].generation == 2
        for device in world.devices:
            fetched = device.get(f"/deployments/{device.client_id}").json()["directives"]
            assert len(fetched) == 1
            directive = fetched[0]
            assert directive["status"] == "Fetched"
            assert directive["model_id"] == f"{run_id}.g0.r2"
            assert directive["recipe"]["lag_window"] == 2
            ack = device.post(
                f"/deployments/{directive['directive_id']}/ack",
                {"outcome": "deployed", "gate_metric": 0.01},
            )
            assert ack.status_code == 200
            assert ack.json()["outcome"] == "deployed"

        # everything the run produced survives in the on-disk ledger
        replayed = Ledger(tmp_path / "ledger.jsonl")
        assert [r.seq for r in replayed.records()] == [
            r.seq for r in world.state.ledger.records()
        ]

    def test_model_fetch_returns_exact_weights(self, fresh):
        world = http_world(overrides={"rounds": 1})
        run_id = drive_http_run(world, rounds=1, weight=0.25)
        refresh_devices(world)
        model = world.devices[0].get(f"/models/{run_id}.g0.r1").json()
        assert model["weights"]["values"] == [0.25, 0.25, 0.25]
        assert model["round"] == 1

    def test_task_document_sequence(self):
        world = http_world(overrides={"rounds": 1})
        started = world.admin.post("/runs", {"job_id": world.job_id, "clients": world.client_ids})
        run_id = started.json()["run_id"]
        device = world.devices[0]
        task = device.get(f"/runs/{run_id}/tasks/{device.client_id}").json()
        assert task["type"] == "checkin"
        device.post(f"/runs/{run_id}/checkins")
        task = device.get(f"/runs/{run_id}/tasks/{device.client_id}").json()
        assert task["type"] == "checkin"  # still gathering the others; re-poll is harmless
        for other in world.devices[1:]:
            other.post(f"/runs/{run_id}/checkins")
        task = device.get(f"/runs/{run_id}/tasks/{device.client_id}").json()
        assert task["type"] == "validate"
        assert task["job"]["job_id"] == world.job_id

    def test_pause_and_resume_over_http(self):
        world = http_world(overrides={"rounds": 2})
        started = world.admin.post("/runs", {"job_id": world.job_id, "clients": world.client_ids})
        run_id = started.json()["run_id"]
        for device in world.devices:
            device.post(f"/runs/{run_id}/checkins")
        for device in world.devices:
            device.post(
                f"/runs/{run_id}/results",
                {"type": "validation", "passed": True, "violations": []},
            )
        paused = world.admin.post(
            f"/runs/{run_id}/pause", {"reason": {"kind": "AdminHold", "note": "maintenance"}}
        )
        assert paused.status_code == 200
        assert paused.json()["phase"] == "Paused"
        task = world.devices[0].get(f"/runs/{run_id}/tasks/{world.devices[0].client_id}").json()
        assert task["type"] == "wait"
        assert task["reason"]["kind"] == "AdminHold"
        participant_resume = world.participants[0].post(f"/runs/{run_id}/resume")
        assert participant_resume.status_code == 403
        resumed = world.admin.post(f"/runs/{run_id}/resume")
        assert resumed.json()["phase"] == "Training"

    def test_deflated_result_bodies_inflate_on_the_server(self):
        world = http_world(overrides={"rounds": 1})
        started = world.admin.post("/runs", {"job_id": world.job_id, "clients": world.client_ids})
        run_id = started.json()["run_id"]
        for device in world.devices:
            device.post(f"/runs/{run_id}/checkins")
        report = {
            "type": "validation",
            "passed": True,
            "violations": [],
            "column_profile": {f"window_{i:03d}": [0.0, 1.0] for i in range(120)},
        }
        body = canonical.dumps(report).encode()
        assert len(body) > transport.COMPRESS_THRESHOLD
        for device in world.devices:
            env = device._envelope("POST", f"/runs/{run_id}/results", body)
            assert env.encoding == "deflate"
            assert len(env.payload) < len(body)
            resp = world.http.post(
                f"/runs/{run_id}/results", content=env.payload, headers=env.headers()
            )
            assert resp.status_code == 201, resp.text
        run = world.admin.get(f"/runs/{run_id}").json()
        assert run["phase"] == "Training"

    def test_corrupt_deflate_with_valid_tag(self):
        world = http_world(overrides={"rounds": 1})
        device = world.devices[0]
        garbage = b"\x00definitely-not-deflate" * 60
        nonce = "ab" * 16
        tag = transport.compute_tag(
            device.secret, device.client_id, device.generation,
            "POST", "/runs/nope/checkins", nonce, garbage,
        )
        resp = world.http.post(
            "/runs/nope/checkins",
            content=garbage,
            headers={
                "x-fl-client": device.client_id,
                "x-fl-generation": str(device.generation),
                "x-fl-nonce": nonce,
                "x-fl-tag": tag,
                "content-encoding": "deflate",
            },
        )
        assert resp.status_code == 400
        assert resp.json()["error"] == "CorruptPayload"

    def test_round_result_cannot_spoof_client_id(self):
        world = http_world(overrides={"rounds": 1})
        started = world.admin.post("/runs", {"job_id": world.job_id, "clients": world.client_ids})
        run_id = started.json()["run_id"]
        for device in world.devices:
            device.post(f"/runs/{run_id}/checkins")
        for device in world.devices:
            device.post(
                f"/runs/{run_id}/results",
                {"type": "validation", "passed": True, "violations": []},
            )
        impostor = world.devices[1]
        resp = impostor.post(
            f"/runs/{run_id}/results",
            {
                "type": "round",
                "round": 1,
                "client_id": world.devices[0].client_id,  # overridden by the envelope
                "weight_vector": [0.5, 0.5, 0.5],
                "sample_count": 10,
                "local_metrics": {"MAE": 0.1},
            },
        )
        assert resp.status_code == 201
        run = world.state.orch.get_run(run_id)
        assert impostor.client_id in run.round_results
        assert world.devices[0].client_id not in run.round_results


class TestDeploymentRoutes:
    def test_admin_deploys_specific_version_with_derived_recipe(self):
        world = http_world(overrides={"rounds": 2})
        run_id = drive_http_run(world, rounds=2)
        refresh_devices(world)
        target = world.devices[0]
        resp = world.admin.post(
            "/deployments",
            {"model_id": f"{run_id}.g0.r1", "clients": [target.client_id]},
        )
        assert resp.status_code == 201
        (directive,) = resp.json()["directives"]
        assert directive["issued_by"] == "ServerAdmin"
        assert directive["model_id"] == f"{run_id}.g0.r1"
        assert directive["recipe"]["normalization_bounds"] == {"load": [0.0, 0.007]}

        fetched = target.get(f"/deployments/{target.client_id}").json()["directives"]
        admin_issued = [d for d in fetched if d["issued_by"] == "ServerAdmin"]
        assert len(admin_issued) == 1
        ack = target.post(
            f"/deployments/{admin_issued[0]['directive_id']}/ack",
            {"outcome": "rejected", "gate_metric": 0.9},
        )
        assert ack.json()["outcome"] == "rejected"

    def test_participants_request_deployment_instead_of_forcing_it(self):
        world = http_world(overrides={"rounds": 1})
        run_id = drive_http_run(world, rounds=1)
        model_id = f"{run_id}.g0.r1"
        resp = world.participants[0].post(
            "/deployment-requests", {"model_id": model_id, "note": "ship it"}
        )
        assert resp.status_code == 201
        records = world.state.ledger.query(action="request_deploy", subject=f"model/{model_id}")
        assert records and records[0].detail["note"] == "ship it"
        forbidden = world.participants[0].post(
            "/deployments", {"model_id": model_id, "clients": [world.client_ids[0]]}
        )
        assert forbidden.status_code == 403

    def test_deployment_listing_scoped(self):
        world = http_world(overrides={"rounds": 1})
        drive_http_run(world, rounds=1)
        mine = world.participants[0].get("/deployments").json()["directives"]
        assert {d["client_id"] for d in mine} == {world.client_ids[0]}
        everyone = world.admin.get("/deployments").json()["directives"]
        assert {d["client_id"] for d in everyone} == set(world.client_ids)


class TestReportingRoutes:
    def test_report_respects_audience(self):
        world = http_world(overrides={"rounds": 1})
        run_id = drive_http_run(world, rounds=1)
        admin_report = world.admin.get(f"/runs/{run_id}/report").json()
        assert set(admin_report["per_round"][0]["clients"]) == set(world.client_ids)
        mine = world.participants[0].get(f"/runs/{run_id}/report").json()
        assert set(mine["per_round"][0]["clients"]) == {world.client_ids[0]}

    def test_provenance_filters_and_scope(self, fresh):
        votes = fresh.admin.get("/provenance", params={"action": "vote"}).json()["records"]
        assert votes and all(r["action"] == "vote" for r in votes)
        denied = fresh.participants[0].get("/provenance", params={"action": "rotate"})
        assert denied.status_code == 403

    def test_export_is_parseable_ndjson(self, fresh):
        resp = fresh.admin.get("/provenance/export")
        assert resp.status_code == 200
        records = Ledger.parse_export(resp.text.splitlines())
        assert [r.seq for r in records] == [r.seq for r in fresh.state.ledger.records()]
        assert fresh.participants[0].get("/provenance/export").status_code == 403

    def test_experiment_records_route(self):
        world = http_world(overrides={"rounds": 1})
        run_id = drive_http_run(world, rounds=1)
        records = world.admin.get(f"/runs/{run_id}/experiments").json()["records"]
        assert len(records) == 1
        assert len(records[0]["rounds"]) == 1


class TestRepresentation:
    def test_two_reads_return_identical_bytes(self):
        world = http_world(overrides={"rounds": 1})
        run_id = drive_http_run(world, rounds=1)
        first = world.admin.get(f"/runs/{run_id}")
        second = world.admin.get(f"/runs/{run_id}")
        assert first.content == second.content

    def test_unknown_run_error_doc(self, fresh):
        resp = fresh.admin.get("/runs/absent")
        assert resp.status_code == 404
        assert resp.json()["error"] == "UnknownRun"

    def test_malformed_json_body(self, fresh):
        resp = fresh.http.post(
            "/auth/login", content=b"{not json", headers={"content-type": "application/json"}
        )
        assert resp.status_code == 400
        assert resp.json()["error"] == "BadRequestShape"

    def test_access_log_has_only_inbound_entries(self, fresh):
        fresh.admin.get("/runs")
        entries = fresh.state.access_entries
        assert entries
        assert {e["direction"] for e in entries} == {"inbound"}
        assert any(e["path"] == "/runs" and e["method"] == "GET" for e in entries)
