"""The agent's in-silo HTTP surface.

Two audiences, one small app:

- Local applications call ``POST /predict`` to get forecasts from whatever
  model the agent currently has deployed. No credentials: the socket binds to
  the silo's own network and the data plane stays fast.
- The silo's administrator manages the agent through ``/config``, ``/status``
  and ``/notifications``, authenticated with the admin bearer token from the
  agent's config file. The coordination server has no path to these routes --
  it cannot even reach the socket, let alone change a setting.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request

from ..errors import NotAuthorized
from ..webutil import body_doc, doc, install_error_handler
from .runtime import Agent


def build_local_app(agent: Agent, ui_dir: Optional[Path] = None) -> FastAPI:
    app = FastAPI(title="fl agent", docs_url=None, redoc_url=None, openapi_url=None)
    install_error_handler(app)

    def require_admin(request: Request) -> None:
        expected = agent.config.admin_token
        header = request.headers.get("authorization", "")
        supplied = header[7:].strip() if header.lower().startswith("bearer ") else ""
        if not expected or supplied != expected:
            raise NotAuthorized("local admin token required")

    # -- data plane ---------------------------------------------------------

    @app.get("/health")
    async def health():
        current = agent.current
        return doc({"status": "ok", "model_id": current.model_id if current else None})

    @app.post("/predict")
    async def predict(request: Request):
        body = body_doc(await request.body())
        return doc(agent.infer(body.get("features")))

    # -- local administration -------------------------------------------------

    @app.get("/config")
    async def get_config(request: Request):
        require_admin(request)
        return doc(agent.config.settings_doc())

    @app.patch("/config")
    async def patch_config(request: Request):
        require_admin(request)
        return doc(agent.configure(body_doc(await request.body())))

    @app.get("/status")
    async def status(request: Request):
        require_admin(request)
        return doc(agent.status())

    @app.get("/notifications")
    async def notifications(request: Request):
        require_admin(request)
        return doc({"notifications": agent.notifications})

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
