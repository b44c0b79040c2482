"""HTTP surface of the FL server.

Two kinds of principals talk to these routes. Humans authenticate a session
(``Authorization: Bearer``) obtained from ``POST /auth/login``. Client agents
authenticate every request with an envelope: ``X-FL-Client``,
``X-FL-Generation``, ``X-FL-Nonce``, and ``X-FL-Tag`` headers whose keyed-hash
tag covers method, path, nonce, and the exact body bytes. Tags are verified
before anything touches the payload, replayed nonces are rejected, and a
client can only read its own task/deployment resources.

All responses are canonical JSON so representations are byte-stable: two GETs
with no intervening writes return identical bytes.
"""

from __future__ import annotations

import zlib
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request, Response

from .. import transport
from ..errors import (
    AuthFailed,
    BadRequestShape,
    CorruptPayload,
    NotAuthorized,
    ReplayDetected,
)
from ..modelstore import ISSUED_BY_ADMIN
from ..orchestrator import ClientRoundResult
from ..registry import ROLE_SERVER_ADMIN, UserAccount
from ..provenance import utcnow
from ..webutil import CanonicalJSONResponse, body_doc as _body_doc, doc as _doc, install_error_handler
from .state import ServerState


def build_app(state: ServerState, ui_dir: Optional[Path] = None) -> FastAPI:
    app = FastAPI(title="fl server", docs_url=None, redoc_url=None, openapi_url=None)

    # ---- middleware: access log (audit trail for the pull-only property) ----

    @app.middleware("http")
    async def access_log(request: Request, call_next):
        response = await call_next(request)
        peer = request.client.host if request.client else ""
        principal = request.headers.get(transport.HEADER_CLIENT, "")
        state.log_access(request.method, request.url.path, peer, response.status_code, principal)
        return response

    install_error_handler(app)

    # ---- auth helpers -----------------------------------------------------------

    def session_user(request: Request) -> UserAccount:
        header = request.headers.get("authorization", "")
        if not header.lower().startswith("bearer "):
            raise AuthFailed("missing bearer session token")
        return state.registry.authenticate_session(header[7:].strip())

    def admin_user(request: Request) -> UserAccount:
        account = session_user(request)
        if account.role != ROLE_SERVER_ADMIN:
            raise NotAuthorized(f"{account.user_id} is not a server administrator")
        return account

    async def client_auth(request: Request, expect_client: Optional[str] = None) -> tuple[str, bytes]:
        """Verify the envelope, reject replays, and inflate the body.

        ``expect_client`` pins per-client resources: a valid envelope from
        client D fetching client C's resource is an auth failure, recorded as
        such."""
        raw = await request.body()
        envelope = transport.Envelope.from_headers(request.headers, raw)
        method, path = request.method, request.url.path
        if envelope is None:
            raise AuthFailed("missing envelope headers")
        client_id = state.registry.authenticate_message(envelope, method, path)
        try:
            state.replay_guard.check(client_id, envelope.generation, envelope.nonce)
        except ReplayDetected:
            state.ledger.append(
                actor=client_id,
                action="auth_fail",
                subject=f"{method} {path}",
                outcome="ReplayDetected",
                detail={"nonce": envelope.nonce},
            )
            raise
        if expect_client is not None and client_id != expect_client:
            state.ledger.append(
                actor=client_id,
                action="auth_fail",
                subject=f"{method} {path}",
                outcome="AuthFailed",
                detail={"why": "cross-client access", "resource_owner": expect_client},
            )
            raise AuthFailed(f"client {client_id} may not access {expect_client}'s resources")
        payload = envelope.payload
        if envelope.encoding == transport.ENCODING_DEFLATE:
            try:
                payload = zlib.decompress(payload)
            except zlib.error as exc:
                raise CorruptPayload(f"deflate payload does not inflate: {exc}") from exc
        return client_id, payload

    async def any_principal(request: Request) -> str:
        """Routes readable by both humans and client agents."""
        if request.headers.get(transport.HEADER_CLIENT):
            client_id, _ = await client_auth(request)
            return client_id
        return session_user(request).user_id

    # ---- health ------------------------------------------------------------------

    @app.get("/health")
    async def health():
        return _doc({"status": "ok", "time": utcnow()})

    # ---- sessions and accounts ----------------------------------------------------

    @app.post("/auth/login")
    async def login(request: Request):
        doc = _body_doc(await request.body())
        token = state.registry.login(doc.get("user_id", ""), doc.get("password", ""))
        account = state.registry.get_user(doc["user_id"])
        return _doc({"session_token": token, "user": account.to_doc()})

    @app.get("/auth/whoami")
    async def whoami(request: Request):
        return _doc(session_user(request).to_doc())

    @app.post("/users")
    async def create_user(request: Request):
        caller = admin_user(request)
        doc = _body_doc(await request.body())
        account, password = state.registry.create_user(
            caller, doc.get("organization", ""), doc.get("role", "")
        )
        return _doc({"user": account.to_doc(), "initial_password": password}, status_code=201)

    @app.get("/users")
    async def list_users(request: Request):
        admin_user(request)
        return _doc({"users": [u.to_doc() for u in state.registry.users.values()]})

    # ---- client devices ---------------------------------------------------------------

    @app.post("/clients")
    async def register_client(request: Request):
        caller = session_user(request)
        descriptor = _body_doc(await request.body())
        record = state.registry.register_client(caller, descriptor)
        return _doc(record.to_doc(), status_code=201)

    @app.get("/clients")
    async def list_clients(request: Request):
        caller = session_user(request)
        records = state.registry.list_registered_clients(caller)
        return _doc({"clients": [r.to_doc() for r in records]})

    @app.get("/clients/{client_id}/token")
    async def fetch_token(client_id: str, request: Request):
        caller = session_user(request)
        return _doc(state.registry.deliver_token(caller, client_id))

    @app.post("/clients/{client_id}/token")
    async def rotate_token(client_id: str, request: Request):
        """Manual re-issue (e.g. after a duplicate-token alarm); the owner
        fetches the fresh secret through the one-time delivery route."""
        admin_user(request)
        record = state.registry.get_client(client_id)
        token = state.registry.issue_token(client_id, record.contract_id)
        record.flagged = False
        return _doc(token.to_doc(), status_code=201)

    # ---- negotiation ----------------------------------------------------------------

    @app.post("/sessions")
    async def open_session(request: Request):
        caller = admin_user(request)
        doc = _body_doc(await request.body())
        session = state.engine.open_session(
            opened_by=caller.user_id, participants=doc.get("participants", [])
        )
        return _doc(session.to_doc(), status_code=201)

    @app.get("/sessions")
    async def list_sessions(request: Request):
        session_user(request)
        return _doc({"sessions": [s.to_doc() for s in state.engine.list_sessions()]})

    @app.get("/sessions/{session_id}")
    async def get_session(session_id: str, request: Request):
        session_user(request)
        return _doc(state.engine.get_session(session_id).to_doc())

    @app.post("/sessions/{session_id}/topics/{topic_key}/proposals")
    async def submit_proposal(session_id: str, topic_key: str, request: Request):
        caller = session_user(request)
        doc = _body_doc(await request.body())
        proposal = state.engine.submit_proposal(
            session_id, caller.user_id, topic_key, doc.get("payload")
        )
        return _doc(proposal.to_doc(), status_code=201)

    @app.post("/proposals/{proposal_id}/votes")
    async def cast_vote(proposal_id: str, request: Request):
        caller = session_user(request)
        doc = _body_doc(await request.body())
        proposal = state.engine.cast_vote(
            doc.get("session_id", ""), caller.user_id, proposal_id, doc.get("vote", "")
        )
        return _doc(proposal.to_doc())

    @app.post("/sessions/{session_id}/seal")
    async def seal_session(session_id: str, request: Request):
        """Sealing immediately compiles the contract into a runnable job."""
        caller = session_user(request)
        contract = state.engine.seal_session(session_id, caller.user_id)
        job = state.factory.job_from_contract(contract, actor=caller.user_id)
        return _doc({"contract": contract.to_doc(), "job": job.to_doc()}, status_code=201)

    @app.post("/renegotiations")
    async def request_renegotiation(request: Request):
        caller = session_user(request)
        doc = _body_doc(await request.body())
        session = state.engine.request_renegotiation(
            doc.get("ref_id", ""), caller.user_id, doc.get("reason", "")
        )
        return _doc(session.to_doc(), status_code=201)

    @app.get("/contracts/{contract_id}")
    async def get_contract(contract_id: str, request: Request):
        session_user(request)
        return _doc(state.engine.get_contract(contract_id).to_doc())

    # ---- jobs -------------------------------------------------------------------------

    @app.post("/jobs")
    async def create_job(request: Request):
        caller = admin_user(request)
        doc = _body_doc(await request.body())
        if "contract_id" in doc:
            contract = state.engine.get_contract(doc["contract_id"])
            job = state.factory.job_from_contract(contract, actor=caller.user_id)
        else:
            job = state.factory.job_from_admin(caller, doc.get("parameters", {}))
        return _doc(job.to_doc(), status_code=201)

    @app.get("/jobs")
    async def list_jobs(request: Request):
        session_user(request)
        return _doc({"jobs": [j.to_doc() for j in state.factory.list_jobs()]})

    @app.get("/jobs/{job_id}")
    async def get_job(job_id: str, request: Request):
        session_user(request)
        return _doc(state.factory.get_job(job_id).to_doc())

    # ---- runs: human control side ----------------------------------------------------

    @app.post("/runs")
    async def start_run(request: Request):
        caller = admin_user(request)
        doc = _body_doc(await request.body())
        job = state.factory.get_job(doc.get("job_id", ""))
        run = state.orch.start_run(job, doc.get("clients", []), actor=caller.user_id)
        return _doc(run.to_doc(), status_code=201)

    @app.get("/runs")
    async def list_runs(request: Request):
        session_user(request)
        runs = sorted(state.orch.runs.values(), key=lambda r: r.created_at)
        return _doc({"runs": [r.to_doc() for r in runs]})

    @app.get("/runs/{run_id}")
    async def get_run(run_id: str, request: Request):
        await any_principal(request)
        return _doc(state.orch.get_run(run_id).to_doc())

    @app.post("/runs/{run_id}/pause")
    async def pause_run(run_id: str, request: Request):
        caller = admin_user(request)
        doc = _body_doc(await request.body())
        run = state.orch.pause_run(run_id, doc.get("reason", {}), actor=caller.user_id)
        return _doc(run.to_doc())

    @app.post("/runs/{run_id}/resume")
    async def resume_run(run_id: str, request: Request):
        caller = session_user(request)
        run = state.orch.resume_run(run_id, caller)
        return _doc(run.to_doc())

    @app.get("/runs/{run_id}/report")
    async def run_report(run_id: str, request: Request):
        caller = session_user(request)
        return _doc(state.reporting.build_report(run_id, caller))

    @app.get("/runs/{run_id}/experiments")
    async def run_experiments(run_id: str, request: Request):
        session_user(request)
        return _doc({"records": state.reporting.experiment_records(run_id)})

    # ---- runs: client pull side ---------------------------------------------------------

    @app.get("/assignments/{client_id}")
    async def assignments(client_id: str, request: Request):
        await client_auth(request, expect_client=client_id)
        runs = state.orch.runs_for_client(client_id)
        return _doc(
            {
                "runs": [
                    {
                        "run_id": r.run_id,
                        "phase": r.phase,
                        "round": r.current_round,
                        "grid_index": r.grid_index,
                    }
                    for r in runs
                ]
            }
        )

    @app.post("/runs/{run_id}/checkins")
    async def checkin(run_id: str, request: Request):
        client_id, _payload = await client_auth(request)
        run = state.orch.on_client_checkin(run_id, client_id)
        return _doc({"run_id": run_id, "phase": run.phase}, status_code=201)

    @app.get("/runs/{run_id}/tasks/{client_id}")
    async def get_client_task(run_id: str, client_id: str, request: Request):
        await client_auth(request, expect_client=client_id)
        return _doc(state.orch.get_task(run_id, client_id))

    @app.post("/runs/{run_id}/results")
    async def post_result(run_id: str, request: Request):
        client_id, payload = await client_auth(request)
        doc = _body_doc(payload)
        kind = doc.get("type", "")
        if kind == "validation":
            run = state.orch.on_validation_result(
                run_id, client_id, {k: doc.get(k) for k in ("passed", "violations")}
            )
        elif kind == "round":
            merged = dict(doc, run_id=run_id, client_id=client_id)
            run = state.orch.on_round_result(run_id, ClientRoundResult.from_doc(merged))
        elif kind == "evaluation":
            run = state.orch.on_evaluation_result(
                run_id, client_id, doc.get("metrics", {}), doc.get("sample_count")
            )
        else:
            raise BadRequestShape(f"unknown result type {kind!r}")
        return _doc(
            {"run_id": run_id, "phase": run.phase, "round": run.current_round},
            status_code=201,
        )

    # ---- models and deployment ----------------------------------------------------------

    @app.get("/models/{model_id}")
    async def get_model(model_id: str, request: Request):
        await any_principal(request)
        return _doc(state.store.get_model(model_id).to_doc(include_weights=True))

    @app.get("/deployments/{client_id}")
    async def deployments_for(client_id: str, request: Request):
        await client_auth(request, expect_client=client_id)
        directives = state.store.directives_for(client_id, mark_fetched=True)
        return _doc({"directives": [d.to_doc() for d in directives]})

    @app.post("/deployments/{directive_id}/ack")
    async def acknowledge(directive_id: str, request: Request):
        client_id, payload = await client_auth(request)
        doc = _body_doc(payload)
        directive = state.store.acknowledge(
            directive_id, client_id, doc.get("outcome", ""), doc.get("gate_metric")
        )
        return _doc(directive.to_doc())

    @app.post("/deployments")
    async def publish_deployment(request: Request):
        caller = admin_user(request)
        doc = _body_doc(await request.body())
        model = state.store.get_model(doc.get("model_id", ""))
        recipe = doc.get("recipe")
        if recipe is None:
            recipe = _recipe_from_job(state.orch.get_run(model.run_id).job_doc)
        directives = state.store.publish_deployment(
            doc.get("clients", []),
            model.model_id,
            issued_by=ISSUED_BY_ADMIN,
            actor=caller.user_id,
            recipe=recipe,
        )
        return _doc({"directives": [d.to_doc() for d in directives]}, status_code=201)

    @app.get("/deployments")
    async def list_deployments(request: Request):
        caller = session_user(request)
        visible = {r.client_id for r in state.registry.list_registered_clients(caller)}
        directives = [
            d.to_doc()
            for d in state.store.directives.values()
            if d.client_id in visible
        ]
        return _doc({"directives": directives})

    @app.post("/deployment-requests")
    async def request_deployment(request: Request):
        """Participants cannot force a deployment; the wish is recorded for
        the server administrator to act on."""
        caller = session_user(request)
        doc = _body_doc(await request.body())
        model = state.store.get_model(doc.get("model_id", ""))
        record = state.ledger.append(
            actor=caller.user_id,
            action="request_deploy",
            subject=f"model/{model.model_id}",
            detail={"note": doc.get("note", "")},
        )
        return _doc({"recorded": True, "seq": record.seq}, status_code=201)

    # ---- provenance -----------------------------------------------------------------

    @app.get("/provenance")
    async def provenance(request: Request):
        caller = session_user(request)
        params = request.query_params
        records = state.reporting.query_history(
            caller,
            actor=params.get("actor"),
            action=params.get("action"),
            subject=params.get("subject"),
            since=params.get("since"),
            until=params.get("until"),
        )
        return _doc({"records": [r.to_doc() for r in records]})

    @app.get("/provenance/export")
    async def provenance_export(request: Request):
        admin_user(request)
        body = "\n".join(state.ledger.export_lines()) + "\n"
        return Response(content=body, media_type="application/x-ndjson")

    # ---- optional static console --------------------------------------------------------

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def _recipe_from_job(job_doc: dict) -> dict:
    """Preprocessing contract a client needs to serve a model: same lags,
    bounds, and schema the model was trained with."""
    return {
        "job_id": job_doc["job_id"],
        "model_kind": job_doc["model_kind"],
        "lag_window": job_doc["lag_window"],
        "normalization_bounds": job_doc["normalization_bounds"],
        "schema": job_doc["schema"],
        "metrics": job_doc["metrics"],
        "deploy_threshold_default": job_doc["deploy_threshold_default"],
        "train_test_split": job_doc["train_test_split"],
    }
