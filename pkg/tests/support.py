"""Shared helpers: canonical negotiation payloads, scripted agreement drivers,
synthetic time series generation, and a fully wired server-side world."""

from __future__ import annotations

import datetime as dt
from types import SimpleNamespace

import numpy as np

from flapu import canonical, transport
from flapu.governance import GovernanceEngine, NegotiationSession, TOPIC_KEYS
from flapu.jobs import JobFactory
from flapu.modelstore import ModelStore
from flapu.orchestrator import ClientRoundResult, Orchestrator
from flapu.provenance import Ledger
from flapu.registry import ROLE_PARTICIPANT, ClientRegistry

SCHEMA_DOC = {
    "columns": [["ts", "timestamp"], ["load", "real"]],
    "max_missing_fraction": 0.0,
}

# A full, self-consistent set of topic payloads for a two-lag autoregressive
# forecasting contract. Individual tests override entries as needed.
TOPIC_PAYLOADS = {
    "data_schema": SCHEMA_DOC,
    "time_frequency": 15.0,
    "value_ranges": {"load": [-1.0, 1.0]},
    "lag_window": 2,
    "normalization_bounds": {"load": [0.0, 0.007]},
    "model_kind": "linear_regression",
    "learning_rate": 0.05,
    "local_epochs": 1,
    "rounds": 50,
    "train_test_split": 0.8,
    "evaluation_metrics": ["MAE", "RMSE"],
    "min_clients": 3,
    "deploy_threshold_default": 2.0,
}

assert set(TOPIC_PAYLOADS) == set(TOPIC_KEYS)


def fresh_engine(tmp_path=None) -> GovernanceEngine:
    path = None if tmp_path is None else tmp_path / "ledger.jsonl"
    return GovernanceEngine(Ledger(path))


def agree_all_topics(
    engine: GovernanceEngine,
    session: NegotiationSession,
    participants: list[str],
    payloads: dict | None = None,
) -> None:
    """First participant proposes every topic; the rest accept."""
    payloads = payloads or TOPIC_PAYLOADS
    proposer, others = participants[0], participants[1:]
    for key, payload in payloads.items():
        proposal = engine.submit_proposal(session.session_id, proposer, key, payload)
        for member in others:
            engine.cast_vote(session.session_id, member, proposal.proposal_id, "Accept")


def sealed_contract(engine: GovernanceEngine, participants: list[str], payloads=None):
    session = engine.open_session(opened_by="admin", participants=participants)
    agree_all_topics(engine, session, participants, payloads)
    return engine.seal_session(session.session_id, participants[0])


def ar2_series(n: int, seed: int, phi1: float = 0.6, phi2: float = 0.3, noise: float = 0.01):
    """Order-2 autoregressive series y_t = phi1*y_{t-1} + phi2*y_{t-2} + eps."""
    rng = np.random.default_rng(seed)
    y = np.zeros(n)
    for t in range(2, n):
        y[t] = phi1 * y[t - 1] + phi2 * y[t - 2] + rng.normal(scale=noise)
    return y


def build_world(tmp_path=None, n_clients=3, overrides=None, **orch_kwargs):
    """Wire every server-side component around one sealed contract with
    ``n_clients`` registered, validated, token-holding clients."""
    path = None if tmp_path is None else tmp_path / "ledger.jsonl"
    ledger = Ledger(path)
    registry = ClientRegistry(ledger)
    engine = GovernanceEngine(ledger, participant_check=registry.is_registered_user)
    registry._contract_lookup = lambda cid: engine.state.contracts.get(cid)
    admin = registry.bootstrap_admin("Coordinator", "admin-pw")
    participants = []
    for i in range(n_clients):
        account, _ = registry.create_user(admin, f"Org {i + 1}", ROLE_PARTICIPANT)
        participants.append(account)
    payloads = dict(TOPIC_PAYLOADS, **(overrides or {}))
    contract = sealed_contract(engine, [a.user_id for a in participants], payloads)
    factory = JobFactory(ledger)
    job = factory.job_from_contract(contract)
    store = ModelStore(
        ledger,
        client_is_validated=lambda cid: (
            cid in registry.clients and registry.clients[cid].status == "Validated"
        ),
    )
    orch = Orchestrator(ledger, registry, factory, store, **orch_kwargs)
    clients = []
    for account in participants:
        record = registry.register_client(
            account, {"contract_id": contract.contract_id, "test_ok": True}
        )
        registry.issue_token(record.client_id, contract.contract_id)
        clients.append(record)
    return SimpleNamespace(
        ledger=ledger,
        registry=registry,
        engine=engine,
        factory=factory,
        store=store,
        orch=orch,
        admin=admin,
        participants=participants,
        contract=contract,
        job=job,
        clients=clients,
    )


def checkin_all(world, run):
    for record in world.clients:
        world.orch.on_client_checkin(run.run_id, record.client_id)


def validate_all(world, run):
    for record in world.clients:
        world.orch.on_validation_result(
            run.run_id, record.client_id, {"passed": True, "violations": []}
        )


def post_round(world, run, weight_map=None, counts=None, metrics=None):
    """Every client reports the current round; triggers aggregation."""
    rnd = run.current_round
    width = world.factory.get_job(run.job_id).feature_count + 1
    for record in world.clients:
        cid = record.client_id
        vector = (weight_map or {}).get(cid, [0.1] * width)
        world.orch.on_round_result(
            run.run_id,
            ClientRoundResult(
                run_id=run.run_id,
                round=rnd,
                client_id=cid,
                weight_vector=list(vector),
                sample_count=(counts or {}).get(cid, 100),
                local_metrics=(metrics or {}).get(cid, {"MAE": 0.1}),
            ),
        )


def evaluate_all(world, run, metric_map=None):
    for record in world.clients:
        cid = record.client_id
        world.orch.on_evaluation_result(
            run.run_id, cid, (metric_map or {}).get(cid, {"MAE": 0.1, "RMSE": 0.15}), sample_count=20
        )


def drive_to_training(world, run):
    checkin_all(world, run)
    validate_all(world, run)


def drive_to_completion(world, run, counts=None):
    drive_to_training(world, run)
    job = world.factory.get_job(run.job_id)
    for _ in range(job.grid_size):
        for _ in range(job.rounds):
            post_round(world, run, counts=counts)
        evaluate_all(world, run)


def series_to_csv(path, series, start=None, step_minutes=15):
    start = start or dt.datetime(2024, 1, 1, tzinfo=dt.timezone.utc)
    lines = ["ts,load"]
    for i, value in enumerate(series):
        stamp = start + dt.timedelta(minutes=step_minutes * i)
        cell = "" if not np.isfinite(value) else repr(float(value))
        lines.append(f"{stamp.strftime('%Y-%m-%dT%H:%M:%S%z')},{cell}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# HTTP-side helpers: a server behind a real ASGI app, driven only through
# its routes. Humans hold bearer sessions; devices sign every request.
# ---------------------------------------------------------------------------


class HumanSession:
    def __init__(self, http, user_id, password):
        resp = http.post(
            "/auth/login",
            content=canonical.dumps({"user_id": user_id, "password": password}).encode(),
        )
        assert resp.status_code == 200, resp.text
        self.http = http
        self.user_id = user_id
        self.token = resp.json()["session_token"]

    def _headers(self):
        return {"authorization": f"Bearer {self.token}"}

    def get(self, path, params=None):
        return self.http.get(path, headers=self._headers(), params=params)

    def post(self, path, doc=None):
        return self.http.post(
            path, headers=self._headers(), content=canonical.dumps(doc or {}).encode()
        )


class DeviceSession:
    """Envelope-signing HTTP client for one device token."""

    def __init__(self, http, client_id, generation, secret_hex, instance="proc-1"):
        self.http = http
        self.client_id = client_id
        self.generation = generation
        self.secret = bytes.fromhex(secret_hex)
        self.instance = instance

    def refresh(self, generation, secret_hex):
        self.generation = generation
        self.secret = bytes.fromhex(secret_hex)

    def _envelope(self, method, path, body=b""):
        return transport.pack(
            body, self.secret, self.client_id, self.generation, method, path,
            instance=self.instance,
        )

    def get(self, path):
        env = self._envelope("GET", path)
        return self.http.get(path, headers=env.headers())

    def post(self, path, doc=None):
        body = canonical.dumps(doc or {}).encode()
        env = self._envelope("POST", path, body)
        return self.http.post(path, content=env.payload, headers=env.headers())


def http_world(tmp_path=None, n_clients=3, overrides=None, **state_kwargs):
    """Spin up the full server app and walk it — over HTTP only — through
    account creation, a complete negotiation, client registration, and token
    delivery. Returns sessions ready to drive runs."""
    from fastapi.testclient import TestClient

    from flapu.server import ServerState, build_app

    state = ServerState(data_dir=tmp_path, **state_kwargs)
    state.registry.bootstrap_admin("Coordinator", "admin-pw")
    http = TestClient(build_app(state))
    admin = HumanSession(http, "admin", "admin-pw")

    participants = []
    for i in range(n_clients):
        created = admin.post(
            "/users", {"organization": f"Org {i + 1}", "role": "Participant"}
        ).json()
        participants.append(
            HumanSession(http, created["user"]["user_id"], created["initial_password"])
        )

    session_doc = admin.post(
        "/sessions", {"participants": [p.user_id for p in participants]}
    ).json()
    session_id = session_doc["session_id"]
    payloads = dict(TOPIC_PAYLOADS, **(overrides or {}))
    proposer, others = participants[0], participants[1:]
    for key, payload in payloads.items():
        proposal = proposer.post(
            f"/sessions/{session_id}/topics/{key}/proposals", {"payload": payload}
        ).json()
        for member in others:
            member.post(
                f"/proposals/{proposal['proposal_id']}/votes",
                {"session_id": session_id, "vote": "Accept"},
            )
    sealed = proposer.post(f"/sessions/{session_id}/seal").json()
    contract_id = sealed["contract"]["contract_id"]
    job_id = sealed["job"]["job_id"]

    devices = []
    for participant in participants:
        record = participant.post(
            "/clients", {"contract_id": contract_id, "test_ok": True}
        ).json()
        assert record["status"] == "Validated", record
        admin.post(f"/clients/{record['client_id']}/token")
        secret = participant.get(f"/clients/{record['client_id']}/token").json()
        devices.append(
            DeviceSession(http, record["client_id"], secret["generation"], secret["secret"])
        )

    return SimpleNamespace(
        state=state,
        http=http,
        admin=admin,
        participants=participants,
        devices=devices,
        session_id=session_id,
        contract_id=contract_id,
        job_id=job_id,
        client_ids=[d.client_id for d in devices],
    )


def refresh_devices(world):
    """After token rotation: owners re-fetch secrets, devices resume signing."""
    for participant, device in zip(world.participants, world.devices):
        secret = participant.get(f"/clients/{device.client_id}/token").json()
        device.refresh(secret["generation"], secret["secret"])


def start_run(world, clients=None):
    resp = world.admin.post(
        "/runs", {"job_id": world.job_id, "clients": clients or world.client_ids}
    )
    assert resp.status_code == 201, resp.text
    return resp.json()["run_id"]


def drive_http_run(world, rounds, weight=0.1, run_id=None):
    """Walk every device through validate → train → evaluate (starting a
    fresh run unless one is given)."""
    if run_id is None:
        started = world.admin.post("/runs", {"job_id": world.job_id, "clients": world.client_ids})
        assert started.status_code == 201, started.text
        run_id = started.json()["run_id"]
    for device in world.devices:
        device.post(f"/runs/{run_id}/checkins")
    for device in world.devices:
        task = device.get(f"/runs/{run_id}/tasks/{device.client_id}").json()
        assert task["type"] == "validate", task
        device.post(
            f"/runs/{run_id}/results",
            {"type": "validation", "passed": True, "violations": []},
        )
    for _ in range(rounds):
        for device in world.devices:
            task = device.get(f"/runs/{run_id}/tasks/{device.client_id}").json()
            assert task["type"] == "train", task
            width = len(task["global_model"]["values"])
            device.post(
                f"/runs/{run_id}/results",
                {
                    "type": "round",
                    "round": task["round"],
                    "weight_vector": [weight] * width,
                    "sample_count": 100,
                    "local_metrics": {"MAE": 0.1, "RMSE": 0.15},
                    "wall_time_ms": 5.0,
                },
            )
    for device in world.devices:
        task = device.get(f"/runs/{run_id}/tasks/{device.client_id}").json()
        assert task["type"] == "evaluate", task
        device.post(
            f"/runs/{run_id}/results",
            {"type": "evaluation", "metrics": {"MAE": 0.1, "RMSE": 0.15}, "sample_count": 20},
        )
    return run_id


# ---------------------------------------------------------------------------
# Agent-side helpers: real polling agents wired to the in-process server.
# ---------------------------------------------------------------------------


def scaled_series(n, seed):
    """An AR(2) series squeezed into the contract's normalization range
    (0, 0.007) so scaled features stay near [0, 1]."""
    raw = ar2_series(n, seed)
    series = 0.0035 + 0.0015 * raw / (np.std(raw) + 1e-12)
    return np.clip(series, 0.0002, 0.0068)


def make_agent(world, index, home, series=None, holdout=None, step_minutes=15, **config_kwargs):
    """A real agent for the index-th registered client: CSV data and token
    material on disk, every request signed and sent through the app."""
    from pathlib import Path

    from flapu.agent import Agent, AgentConfig, ServerClient, write_token_file

    device = world.devices[index]
    home = Path(home)
    home.mkdir(parents=True, exist_ok=True)
    if series is None:
        series = scaled_series(120, seed=41 + index)
    data_path = series_to_csv(home / "series.csv", series, step_minutes=step_minutes)
    fixed_test_path = None
    if holdout is not None:
        fixed_test_path = series_to_csv(home / "holdout.csv", holdout)
    token_path = home / "token.json"
    write_token_file(
        token_path,
        {
            "client_id": device.client_id,
            "generation": device.generation,
            "secret": device.secret.hex(),
        },
    )
    config_kwargs.setdefault("poll_base_s", 0.01)
    config_kwargs.setdefault("poll_max_s", 0.02)
    config = AgentConfig(
        server_url="http://testserver",
        client_id=device.client_id,
        token_path=token_path,
        data_path=data_path,
        fixed_test_path=fixed_test_path,
        state_dir=home / "state",
        admin_token="local-admin",
        **config_kwargs,
    )
    server = ServerClient(
        config.server_url,
        device.client_id,
        token_path,
        instance=f"agent-{device.client_id}",
        http=world.http,
    )
    return Agent(config, server=server)


def reprovision_token(world, index, agent):
    """The owner fetches the freshly rotated secret and replaces the agent's
    token file — the recovery path after a rotation."""
    from flapu.agent import write_token_file

    device = world.devices[index]
    secret = world.participants[index].get(f"/clients/{device.client_id}/token").json()
    device.refresh(secret["generation"], secret["secret"])
    write_token_file(
        agent.config.token_path,
        {
            "client_id": device.client_id,
            "generation": secret["generation"],
            "secret": secret["secret"],
        },
    )


def poll_until(world, agents, run_id, phase="Completed", max_sweeps=40):
    """Sweep every agent's poll loop until the run reaches the phase."""
    for _ in range(max_sweeps):
        for agent in agents:
            agent.poll_once()
        if world.state.orch.get_run(run_id).phase == phase:
            return
    raise AssertionError(
        f"run {run_id} stuck in {world.state.orch.get_run(run_id).phase}, wanted {phase}"
    )
