"""Reports, history queries, ledger durability, and replay equivalence."""

import threading

import pytest

from flapu import canonical
from flapu.errors import NotAuthorized, UnknownAction, UnknownRun
from flapu.governance import replay as governance_replay
from flapu.provenance import Ledger
from flapu.registry import ROLE_CLIENT_ADMIN
from flapu.reporting import Reporting, replay_run_phases

from .support import (
    build_world,
    checkin_all,
    drive_to_completion,
    drive_to_training,
    evaluate_all,
    post_round,
    validate_all,
)


def reporting_for(world) -> Reporting:
    return Reporting(world.ledger, world.orch, world.store, world.registry)


@pytest.fixture
def completed():
    world = build_world(overrides={"rounds": 3})
    run = world.orch.start_run(world.job, [c.client_id for c in world.clients])
    drive_to_completion(world, run)
    return world, run


class TestLedgerAppend:
    def test_unknown_verb_rejected(self):
        with pytest.raises(UnknownAction):
            Ledger().append(actor="x", action="frobnicate", subject="y")

    def test_concurrent_appends_get_distinct_consecutive_seqs(self):
        ledger = Ledger()
        results = []

        def worker():
            for _ in range(50):
                results.append(ledger.append(actor="t", action="monitor", subject="s").seq)

        threads = [threading.Thread(target=worker) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sorted(results) == list(range(1, 201))

    def test_record_is_on_disk_before_append_returns(self, tmp_path):
        path = tmp_path / "wal.jsonl"
        ledger = Ledger(path)
        record = ledger.append(actor="x", action="monitor", subject="s")
        lines = path.read_text().splitlines()
        assert canonical.loads(lines[-1])["seq"] == record.seq


class TestBuildReport:
    def test_completed_run_report_for_admin(self, completed):
        world, run = completed
        report = reporting_for(world).build_report(run.run_id, world.admin)
        assert len(report["per_round"]) == world.job.rounds
        rounds = [row["round"] for row in report["per_round"]]
        assert rounds == [1, 2, 3]
        for row in report["per_round"]:
            assert set(row["clients"]) == run.expected_clients
            assert row["aggregate"]["mean_MAE"] == pytest.approx(0.1)
        assert report["contribution"] is not None
        assert report["timeline"][0]["action"] == "start_run"
        assert {d["status"] for d in report["deployments"]} == {"Published"}

    def test_participant_sees_only_own_client_detail(self, completed):
        world, run = completed
        me = world.participants[0]
        mine = world.clients[0].client_id
        others = {c.client_id for c in world.clients[1:]}
        report = reporting_for(world).build_report(run.run_id, me)
        for row in report["per_round"]:
            assert set(row["clients"]) == {mine}
            assert "mean_MAE" in row["aggregate"]  # aggregate view stays available
        for cid, detail in report["contribution"].items():
            if cid in others:
                assert set(detail) == {"data_share", "rounds_participated"}
            else:
                assert "mean_local_metric" in detail
        own_eval = report["evaluations"]["0"][mine]
        other_eval = report["evaluations"]["0"][next(iter(others))]
        assert "sample_count" in own_eval
        assert "sample_count" not in other_eval

    def test_paused_run_report_highlights_reason(self):
        world = build_world(overrides={"rounds": 2})
        run = world.orch.start_run(world.job, [c.client_id for c in world.clients])
        checkin_all(world, run)
        world.orch.on_validation_result(
            run.run_id,
            world.clients[1].client_id,
            {"violations": [{"rule": "FrequencyMismatch", "detail": "30 != 15"}]},
        )
        report = reporting_for(world).build_report(run.run_id, world.admin)
        assert report["status"]["phase"] == "Paused"
        assert report["status"]["pause_reason"]["rule"] == "FrequencyMismatch"

    def test_unknown_run(self, completed):
        world, _ = completed
        with pytest.raises(UnknownRun):
            reporting_for(world).build_report("nope", world.admin)

    def test_experiment_records_cover_every_round_client_pair(self, completed):
        world, run = completed
        (record,) = reporting_for(world).experiment_records(run.run_id)
        assert record["contract_id"] == world.contract.contract_id
        assert record["job"]["job_id"] == world.job.job_id
        assert len(record["rounds"]) == world.job.rounds
        for row in record["rounds"]:
            assert set(row["per_client"]) == run.expected_clients
            for detail in row["per_client"].values():
                assert detail["local_metrics"]
                assert detail["sample_count"] >= 1


class TestPrivacy:
    def test_reports_never_leak_secrets_or_credentials(self, completed):
        world, run = completed
        reporting = reporting_for(world)
        blob = canonical.dumps(reporting.build_report(run.run_id, world.admin))
        blob += canonical.dumps(reporting.experiment_records(run.run_id))
        blob += "\n".join(world.ledger.export_lines())
        for token in world.registry.tokens.values():
            assert token.secret.hex() not in blob
        for account in world.registry.users.values():
            if account.credential_hash:
                salt, digest = account.credential_hash.split("$")
                assert salt not in blob and digest not in blob
        assert "admin-pw" not in blob


class TestQueryHistory:
    def test_filter_by_action(self, completed):
        world, _ = completed
        records = reporting_for(world).query_history(world.admin, action="vote")
        assert records and all(r.action == "vote" for r in records)

    def test_empty_time_range(self, completed):
        world, _ = completed
        assert reporting_for(world).query_history(world.admin, since="9999-01-01T00:00:00Z") == []

    def test_participant_cannot_read_other_orgs_security_records(self, completed):
        world, _ = completed
        me = world.participants[0]
        other_client = world.clients[1].client_id
        with pytest.raises(NotAuthorized):
            reporting_for(world).query_history(me, action="auth_fail", actor=other_client)
        with pytest.raises(NotAuthorized):
            reporting_for(world).query_history(me, action="rotate")
        with pytest.raises(NotAuthorized):
            reporting_for(world).query_history(
                me, action="rotate", subject=f"client/{other_client}"
            )

    def test_participant_reads_own_security_records(self, completed):
        world, _ = completed
        me = world.participants[0]
        mine = world.clients[0].client_id
        records = reporting_for(world).query_history(
            me, action="rotate", subject=f"client/{mine}"
        )
        assert records and all(r.subject == f"client/{mine}" for r in records)

    def test_broad_queries_hide_foreign_security_records(self, completed):
        world, _ = completed
        me = world.participants[0]
        mine = {me.user_id, world.clients[0].client_id}
        records = reporting_for(world).query_history(me)
        assert records  # shared governance and run records are visible
        security = [
            r
            for r in records
            if r.action in ("rotate", "issue_token", "auth_fail", "alarm", "create_user")
        ]
        assert security  # own token issuance at least
        for record in security:
            about = record.subject.split("/", 1)[-1]
            assert record.actor in mine or about in mine

    def test_client_admin_scope_follows_the_organization(self, completed):
        world, _ = completed
        client_admin, _ = world.registry.create_user(world.admin, "Org 1", ROLE_CLIENT_ADMIN)
        reporting = reporting_for(world)
        own = reporting.query_history(
            client_admin, action="rotate", subject=f"client/{world.clients[0].client_id}"
        )
        assert own
        with pytest.raises(NotAuthorized):
            reporting.query_history(
                client_admin,
                action="rotate",
                subject=f"client/{world.clients[1].client_id}",
            )


class TestReplay:
    def test_phase_history_reconstructs_from_ledger(self):
        world = build_world(overrides={"rounds": 2})
        run = world.orch.start_run(world.job, [c.client_id for c in world.clients])
        checkin_all(world, run)
        bad = world.clients[1].client_id
        world.orch.on_validation_result(
            run.run_id, bad, {"violations": [{"rule": "RangeViolation", "detail": "x"}]}
        )
        world.orch.resume_run(run.run_id, world.admin)
        validate_all(world, run)
        post_round(world, run)
        world.orch.pause_run(run.run_id, {"kind": "AdminHold"})
        world.orch.resume_run(run.run_id, world.admin)
        post_round(world, run)
        evaluate_all(world, run)
        assert run.phase == "Completed"
        live = [phase for phase, _ in run.phase_history]
        assert replay_run_phases(world.ledger.records(), run.run_id) == live

    def test_grid_runs_replay_cleanly(self):
        from .support import TOPIC_PAYLOADS

        world = build_world(overrides={"rounds": 2})
        job = world.factory.job_from_admin(
            world.admin,
            dict(TOPIC_PAYLOADS, rounds=2, hyperparameter_grid=[{}, {"learning_rate": 0.2}]),
        )
        run = world.orch.start_run(job, [c.client_id for c in world.clients])
        drive_to_training(world, run)
        for _ in range(2):
            for _ in range(job.rounds):
                post_round(world, run)
            evaluate_all(world, run)
        assert run.phase == "Completed"
        live = [phase for phase, _ in run.phase_history]
        assert replay_run_phases(world.ledger.records(), run.run_id) == live

    def test_governance_state_reconstructs_alongside(self, completed):
        world, run = completed
        replayed = governance_replay(world.ledger.records())
        assert canonical.dumps(
            replayed.contracts[world.contract.contract_id].to_doc()
        ) == canonical.dumps(world.contract.to_doc())
        live = [phase for phase, _ in run.phase_history]
        assert replay_run_phases(world.ledger.records(), run.run_id) == live
