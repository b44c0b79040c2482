"""flapu-admin: drive a coordination server from the terminal.

Every subcommand talks to the server's HTTP interface with a bearer session;
nothing here touches server internals. Credentials come from ``--user`` /
``--password`` or the ``FLAPU_USER`` / ``FLAPU_PASSWORD`` environment
variables, the server address from ``--server`` / ``FLAPU_SERVER_URL``.
"""

from __future__ import annotations

import click

from .common import ApiError, BearerApi, emit, parse_json_arg


class AdminCli:
    def __init__(self, server: str, user: str, password: str, as_json: bool):
        self.api = BearerApi(server)
        self.user = user
        self.password = password
        self.as_json = as_json
        self._authenticated = False

    def login(self) -> BearerApi:
        if not self._authenticated:
            if not self.user or not self.password:
                raise click.UsageError(
                    "credentials required: --user/--password or FLAPU_USER/FLAPU_PASSWORD"
                )
            doc = self.api.post(
                "/auth/login", {"user_id": self.user, "password": self.password}
            )
            self.api.token = doc["session_token"]
            self._authenticated = True
        return self.api

    def emit(self, doc, human=None):
        emit(doc, self.as_json, human)


pass_cli = click.make_pass_decorator(AdminCli)


@click.group()
@click.option("--server", envvar="FLAPU_SERVER_URL", default="http://127.0.0.1:8470",
              show_default=True, help="coordination server base URL")
@click.option("--user", envvar="FLAPU_USER", default="", help="account user id")
@click.option("--password", envvar="FLAPU_PASSWORD", default="", help="account password")
@click.option("--json", "as_json", is_flag=True, help="print raw response documents")
@click.pass_context
def main(ctx, server, user, password, as_json):
    """Administer a federated-learning coordination server."""
    ctx.obj = AdminCli(server, user, password, as_json)


@main.command()
@pass_cli
def health(cli):
    """Check that the server answers at all (no credentials needed)."""
    cli.emit(cli.api.get("/health"))


@main.command()
@pass_cli
def whoami(cli):
    """Show the authenticated account."""
    doc = cli.login().get("/auth/whoami")
    cli.emit(doc, f"{doc['user_id']}  {doc['organization']}  {doc['role']}")


# ---- accounts -----------------------------------------------------------------


@main.group()
def users():
    """Manage human accounts (server administrator only)."""


@users.command("create")
@click.argument("organization")
@click.option("--role", default="Participant", show_default=True,
              type=click.Choice(["Participant", "ServerAdmin", "ClientAdmin"]))
@pass_cli
def users_create(cli, organization, role):
    """Create an account; prints the initial password exactly once."""
    doc = cli.login().post("/users", {"organization": organization, "role": role})
    user = doc["user"]
    cli.emit(doc, f"{user['user_id']}  {user['organization']}  {user['role']}\n"
                  f"initial password: {doc['initial_password']}")


@users.command("list")
@pass_cli
def users_list(cli):
    doc = cli.login().get("/users")
    lines = [f"{u['user_id']}  {u['organization']}  {u['role']}" for u in doc["users"]]
    cli.emit(doc, "\n".join(lines) or "(no users)")


# ---- negotiation ----------------------------------------------------------------


@main.group()
def sessions():
    """Open, inspect, and seal negotiation sessions."""


@sessions.command("open")
@click.option("--participant", "participants", multiple=True, required=True,
              help="user id; repeat for every party")
@pass_cli
def sessions_open(cli, participants):
    doc = cli.login().post("/sessions", {"participants": list(participants)})
    cli.emit(doc, f"session {doc['session_id']} open with {len(participants)} participants")


@sessions.command("list")
@pass_cli
def sessions_list(cli):
    doc = cli.login().get("/sessions")
    lines = [f"{s['session_id']}  v{s['version']}  {s['status']}" for s in doc["sessions"]]
    cli.emit(doc, "\n".join(lines) or "(no sessions)")


@sessions.command("show")
@click.argument("session_id")
@pass_cli
def sessions_show(cli, session_id):
    cli.emit(cli.login().get(f"/sessions/{session_id}"))


@sessions.command("seal")
@click.argument("session_id")
@pass_cli
def sessions_seal(cli, session_id):
    """Seal a fully agreed session; compiles the contract into a job."""
    doc = cli.login().post(f"/sessions/{session_id}/seal")
    cli.emit(doc, f"contract {doc['contract']['contract_id']} sealed; "
                  f"job {doc['job']['job_id']} ready")


@main.group()
def proposals():
    """Propose values for negotiation topics."""


@proposals.command("submit")
@click.argument("session_id")
@click.argument("topic")
@click.argument("payload")
@pass_cli
def proposals_submit(cli, session_id, topic, payload):
    """Submit PAYLOAD (JSON) for TOPIC, e.g. '50' or '{"load": [0.0, 1.0]}'."""
    value = parse_json_arg(payload, "payload")
    doc = cli.login().post(
        f"/sessions/{session_id}/topics/{topic}/proposals", {"payload": value}
    )
    cli.emit(doc, f"proposal {doc['proposal_id']} on {topic}: {doc['state']}")


@main.group()
def votes():
    """Vote on open proposals."""


@votes.command("cast")
@click.argument("session_id")
@click.argument("proposal_id")
@click.argument("vote", type=click.Choice(["Accept", "Reject"]))
@pass_cli
def votes_cast(cli, session_id, proposal_id, vote):
    doc = cli.login().post(
        f"/proposals/{proposal_id}/votes", {"session_id": session_id, "vote": vote}
    )
    cli.emit(doc, f"proposal {proposal_id}: {doc['state']}")


@main.command()
@click.argument("ref_id")
@click.option("--reason", default="", help="why the terms need to change")
@pass_cli
def renegotiate(cli, ref_id, reason):
    """Reopen negotiation from a session or contract (REF_ID)."""
    doc = cli.login().post("/renegotiations", {"ref_id": ref_id, "reason": reason})
    cli.emit(doc, f"session {doc['session_id']} (version {doc['version']}) open")


@main.group()
def contracts():
    """Inspect sealed contracts."""


@contracts.command("show")
@click.argument("contract_id")
@pass_cli
def contracts_show(cli, contract_id):
    cli.emit(cli.login().get(f"/contracts/{contract_id}"))


# ---- jobs and runs -----------------------------------------------------------------


@main.group()
def jobs():
    """Compile and inspect federated jobs."""


@jobs.command("create")
@click.option("--contract", "contract_id", default=None, help="compile from a sealed contract")
@click.option("--params", default=None, help="JSON parameters for a manual job")
@pass_cli
def jobs_create(cli, contract_id, params):
    if (contract_id is None) == (params is None):
        raise click.UsageError("provide exactly one of --contract or --params")
    if contract_id is not None:
        body = {"contract_id": contract_id}
    else:
        body = {"parameters": parse_json_arg(params, "--params")}
    doc = cli.login().post("/jobs", body)
    cli.emit(doc, f"job {doc['job_id']} ({doc['origin']}, {doc['rounds']} rounds)")


@jobs.command("list")
@pass_cli
def jobs_list(cli):
    doc = cli.login().get("/jobs")
    lines = [f"{j['job_id']}  {j['origin']}  rounds={j['rounds']}" for j in doc["jobs"]]
    cli.emit(doc, "\n".join(lines) or "(no jobs)")


@jobs.command("show")
@click.argument("job_id")
@pass_cli
def jobs_show(cli, job_id):
    cli.emit(cli.login().get(f"/jobs/{job_id}"))


@main.group()
def runs():
    """Start and steer federated runs."""


@runs.command("start")
@click.argument("job_id")
@click.option("--client", "clients", multiple=True, required=True,
              help="client id; repeat for every silo")
@pass_cli
def runs_start(cli, job_id, clients):
    doc = cli.login().post("/runs", {"job_id": job_id, "clients": list(clients)})
    cli.emit(doc, f"run {doc['run_id']} started ({doc['phase']})")


@runs.command("list")
@pass_cli
def runs_list(cli):
    doc = cli.login().get("/runs")
    lines = [
        f"{r['run_id']}  {r['phase']}  round {r['current_round']}" for r in doc["runs"]
    ]
    cli.emit(doc, "\n".join(lines) or "(no runs)")


@runs.command("status")
@click.argument("run_id")
@pass_cli
def runs_status(cli, run_id):
    doc = cli.login().get(f"/runs/{run_id}")
    cli.emit(doc, f"run {doc['run_id']}: {doc['phase']} (round {doc['current_round']}, "
                  f"grid {doc['grid_index']})")


@runs.command("pause")
@click.argument("run_id")
@click.option("--reason", default="", help="recorded with the pause")
@pass_cli
def runs_pause(cli, run_id, reason):
    doc = cli.login().post(f"/runs/{run_id}/pause", {"reason": {"note": reason}})
    cli.emit(doc, f"run {run_id} paused")


@runs.command("resume")
@click.argument("run_id")
@pass_cli
def runs_resume(cli, run_id):
    doc = cli.login().post(f"/runs/{run_id}/resume")
    cli.emit(doc, f"run {run_id} resumed ({doc['phase']})")


@runs.command("report")
@click.argument("run_id")
@pass_cli
def runs_report(cli, run_id):
    """Fetch the run report (scoped to what the caller may see)."""
    cli.emit(cli.login().get(f"/runs/{run_id}/report"))


@runs.command("experiments")
@click.argument("run_id")
@pass_cli
def runs_experiments(cli, run_id):
    """Per-grid-entry experiment records for a run."""
    cli.emit(cli.login().get(f"/runs/{run_id}/experiments"))


# ---- clients and tokens ----------------------------------------------------------------


@main.group()
def clients():
    """Register silos and manage their device tokens."""


@clients.command("register")
@click.option("--contract", "contract_id", required=True)
@click.option("--test-ok/--no-test-ok", default=True,
              help="whether the connectivity self-test passed")
@pass_cli
def clients_register(cli, contract_id, test_ok):
    doc = cli.login().post("/clients", {"contract_id": contract_id, "test_ok": test_ok})
    cli.emit(doc, f"client {doc['client_id']} registered: {doc['status']}")


@clients.command("list")
@pass_cli
def clients_list(cli):
    doc = cli.login().get("/clients")
    lines = [
        f"{c['client_id']}  {c['owner']}  {c['status']}"
        + ("  FLAGGED" if c.get("flagged") else "")
        for c in doc["clients"]
    ]
    cli.emit(doc, "\n".join(lines) or "(no clients)")


@clients.command("issue-token")
@click.argument("client_id")
@pass_cli
def clients_issue_token(cli, client_id):
    """Issue a fresh token generation (server administrator). The owner must
    then fetch the secret with ``clients fetch-token``."""
    doc = cli.login().post(f"/clients/{client_id}/token")
    cli.emit(doc, f"token generation {doc['generation']} issued for {client_id}")


@clients.command("fetch-token")
@click.argument("client_id")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True,
              help="token material file for the agent (written mode 0600)")
@pass_cli
def clients_fetch_token(cli, client_id, out_path):
    """One-time secret delivery: fetch the current generation's secret and
    write the agent's token file. A second fetch of the same generation fails."""
    from ..agent.config import write_token_file

    doc = cli.login().get(f"/clients/{client_id}/token")
    write_token_file(out_path, doc)
    emit_doc = {"client_id": doc["client_id"], "generation": doc["generation"],
                "written_to": str(out_path)}
    cli.emit(emit_doc, f"generation {doc['generation']} secret written to {out_path}")


# ---- models and deployment ----------------------------------------------------------


@main.group()
def models():
    """Inspect stored global models."""


@models.command("show")
@click.argument("model_id")
@pass_cli
def models_show(cli, model_id):
    cli.emit(cli.login().get(f"/models/{model_id}"))


@main.group()
def deployments():
    """Publish and track deployment directives."""


@deployments.command("publish")
@click.argument("model_id")
@click.option("--client", "targets", multiple=True, required=True)
@click.option("--recipe", default=None, help="JSON preprocessing recipe override")
@pass_cli
def deployments_publish(cli, model_id, targets, recipe):
    body = {"model_id": model_id, "clients": list(targets)}
    if recipe is not None:
        body["recipe"] = parse_json_arg(recipe, "--recipe")
    doc = cli.login().post("/deployments", body)
    ids = ", ".join(d["directive_id"] for d in doc["directives"])
    cli.emit(doc, f"published {model_id} to {len(targets)} clients: {ids}")


@deployments.command("list")
@pass_cli
def deployments_list(cli):
    doc = cli.login().get("/deployments")
    lines = [
        f"{d['directive_id']}  {d['model_id']}  {d['status']}"
        + (f"  {d['outcome']}" if d["outcome"] else "")
        for d in doc["directives"]
    ]
    cli.emit(doc, "\n".join(lines) or "(no deployment directives)")


@main.command("request-deploy")
@click.argument("model_id")
@click.option("--note", default="", help="context for the server administrator")
@pass_cli
def request_deploy(cli, model_id, note):
    """Ask the server administrator to deploy a model (participants cannot
    deploy directly)."""
    doc = cli.login().post("/deployment-requests", {"model_id": model_id, "note": note})
    cli.emit(doc, f"request recorded (ledger seq {doc['seq']})")


# ---- provenance ------------------------------------------------------------------


@main.group()
def provenance():
    """Query and export the action ledger."""


@provenance.command("history")
@click.option("--actor", default=None)
@click.option("--action", default=None)
@click.option("--subject", default=None)
@click.option("--since", default=None, help="ISO-8601 lower bound")
@click.option("--until", default=None, help="ISO-8601 upper bound")
@pass_cli
def provenance_history(cli, actor, action, subject, since, until):
    """Filtered ledger view (participants see their own scope)."""
    params = {
        k: v
        for k, v in {"actor": actor, "action": action, "subject": subject,
                     "since": since, "until": until}.items()
        if v is not None
    }
    doc = cli.login().get("/provenance", params=params)
    lines = [
        f"{r['seq']:>5}  {r['at']}  {r['actor']:<14} {r['action']:<18} "
        f"{r['subject']}  {r['outcome']}"
        for r in doc["records"]
    ]
    cli.emit(doc, "\n".join(lines) or "(no matching records)")


@provenance.command("export")
@pass_cli
def provenance_export(cli):
    """Dump the full ledger as NDJSON (server administrator only)."""
    text = cli.login().get("/provenance/export")
    click.echo(text, nl=False)


if __name__ == "__main__":
    main()
