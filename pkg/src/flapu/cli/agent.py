"""flapu-agent: run and administer the on-silo agent.

``run`` hosts the whole agent in one process: the server poll loop, the drift
monitor, and the local HTTP surface. The other subcommands are thin fronts on
that local surface -- they talk to an already-running agent over loopback
with the admin token from the same config file, so there is exactly one
process holding agent state.
"""

from __future__ import annotations

import threading
from pathlib import Path

import click

from .common import ApiError, BearerApi, emit, parse_json_arg


class AgentCli:
    def __init__(self, config_path: str, as_json: bool):
        self.config_path = config_path
        self.as_json = as_json

    def load(self):
        from ..agent import load_config
        from ..errors import FlapuError

        try:
            return load_config(self.config_path)
        except FlapuError as exc:
            raise ApiError(f"{exc.code}: {exc.detail}")

    def local_api(self) -> BearerApi:
        config = self.load()
        base = f"http://{config.bind_host}:{config.bind_port}"
        return BearerApi(base, token=config.admin_token)

    def emit(self, doc, human=None):
        emit(doc, self.as_json, human)


pass_cli = click.make_pass_decorator(AgentCli)


@click.group()
@click.option("--config", "config_path", envvar="FLAPU_AGENT_CONFIG",
              default="agent.toml", show_default=True,
              help="agent configuration file (TOML)")
@click.option("--json", "as_json", is_flag=True, help="print raw response documents")
@click.pass_context
def main(ctx, config_path, as_json):
    """Run or administer a silo's federated-learning agent."""
    ctx.obj = AgentCli(config_path, as_json)


@main.command()
@click.option("--ui-dir", type=click.Path(file_okay=False), default=None,
              help="serve a management console from this directory under /ui")
@pass_cli
def run(cli, ui_dir):
    """Start the agent and serve its local API until interrupted."""
    import uvicorn

    from ..agent import Agent, build_local_app

    config = cli.load()
    agent = Agent(config)
    stop = threading.Event()
    poller = threading.Thread(
        target=agent.run_forever, args=(stop,), daemon=True, name="flapu-poll"
    )
    poller.start()
    agent.start_monitor(stop)
    click.echo(
        f"agent {config.client_id} polling {config.server_url}; "
        f"local API on {config.bind_host}:{config.bind_port}",
        err=True,
    )
    server = uvicorn.Server(
        uvicorn.Config(
            build_local_app(agent, ui_dir=Path(ui_dir) if ui_dir else None),
            host=config.bind_host,
            port=config.bind_port,
            log_level="warning",
        )
    )
    try:
        server.run()
    finally:
        stop.set()
        poller.join(timeout=5)


@main.group("config")
def config_group():
    """Read or change the running agent's local settings."""


@config_group.command("get")
@pass_cli
def config_get(cli):
    doc = cli.local_api().get("/config")
    lines = [f"{key} = {value!r}" for key, value in sorted(doc.items())]
    cli.emit(doc, "\n".join(lines))


@config_group.command("set")
@click.argument("assignments", nargs=-1, required=True, metavar="KEY=VALUE...")
@pass_cli
def config_set(cli, assignments):
    """Apply settings, e.g. ``deploy_threshold=0.002 monitor_period_s=60``.

    Values are parsed as JSON (``null`` clears an optional setting). The
    change is all-or-nothing: one bad value and nothing is applied.
    """
    delta = {}
    for item in assignments:
        key, eq, raw = item.partition("=")
        if not eq or not key:
            raise click.UsageError(f"expected KEY=VALUE, got {item!r}")
        delta[key] = parse_json_arg(raw, key)
    doc = cli.local_api().patch("/config", delta)
    lines = [f"{key} = {value!r}" for key, value in sorted(doc.items())]
    cli.emit(doc, "\n".join(lines))


@main.command()
@pass_cli
def status(cli):
    """Show what the running agent is doing."""
    doc = cli.local_api().get("/status")
    model = doc["model"]
    served = "no model deployed" if model is None else (
        f"serving {model['model_id']}"
        + (" (personalized)" if model["personalized"] else "")
        + f", gate metric {model['gate_metric']}"
    )
    flags = " [SUSPENDED: token re-provision needed]" if doc["suspended"] else ""
    cli.emit(
        doc,
        f"{doc['client_id']} -> {doc['server_url']}{flags}\n"
        f"{served}\n"
        f"inferences served: {doc['inference_count']}, "
        f"notifications: {doc['notification_count']}",
    )


@main.command()
@pass_cli
def notifications(cli):
    """List notifications the agent has raised for its local admin."""
    doc = cli.local_api().get("/notifications")
    lines = [
        f"{n['at']}  {n['kind']}: {n['detail']}" for n in doc["notifications"]
    ]
    cli.emit(doc, "\n".join(lines) or "(no notifications)")


if __name__ == "__main__":
    main()
