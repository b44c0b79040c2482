"""Server process entrypoint: wire the state, bootstrap the first admin,
start the timeout sweeper, and serve."""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import click
import uvicorn

from .app import build_app
from .state import ServerState


@click.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8470, type=int, show_default=True)
@click.option("--data-dir", type=click.Path(path_type=Path), default=None,
              help="Directory for the ledger and access log (in-memory if omitted).")
@click.option("--bootstrap-org", default=None,
              help="Create the initial admin account for this organization.")
@click.option("--bootstrap-password", default=None, envvar="FLAPU_ADMIN_PASSWORD",
              help="Password for the initial admin (or FLAPU_ADMIN_PASSWORD).")
@click.option("--phase-timeout", default=600.0, type=float, show_default=True,
              help="Seconds a run may sit in one phase before the watchdog reacts.")
@click.option("--sweep-interval", default=5.0, type=float, show_default=True)
@click.option("--ui-dir", type=click.Path(path_type=Path), default=None,
              help="Optional directory of static console assets served under /ui.")
def main(
    host: str,
    port: int,
    data_dir: Optional[Path],
    bootstrap_org: Optional[str],
    bootstrap_password: Optional[str],
    phase_timeout: float,
    sweep_interval: float,
    ui_dir: Optional[Path],
) -> None:
    state = ServerState(data_dir=data_dir, phase_timeout_s=phase_timeout)
    if bootstrap_org:
        if not bootstrap_password:
            raise click.UsageError("--bootstrap-org requires --bootstrap-password")
        state.registry.bootstrap_admin(bootstrap_org, bootstrap_password)
    state.start_timeout_sweeper(sweep_interval)
    app = build_app(state, ui_dir=ui_dir)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    finally:
        state.stop()


if __name__ == "__main__":
    main()
