"""Signed HTTP access to the coordination server.

Every call is outbound -- the agent never listens for the server -- and every
call carries a tamper-evident envelope built from the current token material.
When the server answers 401 with a stale-generation code, the token file is
re-read once and the request retried: rotation recovery is then simply "the
owner drops a fresh token file next to the agent".
"""

from __future__ import annotations

import os
import socket
from pathlib import Path
from typing import Any, Optional

import httpx

from .. import canonical, errors, transport
from ..errors import ServerUnreachable
from .config import read_token_file

# 401 families where re-reading the token file can plausibly help.
_RELOADABLE = ("StaleGeneration", "TokenMismatch")


class ServerClient:
    """One device identity talking to one coordination server."""

    def __init__(
        self,
        base_url: str,
        client_id: str,
        token_path: str | Path,
        instance: str = "",
        http: Optional[httpx.Client] = None,
        timeout: float = 30.0,
    ):
        self.client_id = client_id
        self.token_path = Path(token_path)
        self.instance = instance or f"{socket.gethostname()}:{os.getpid()}"
        self._http = http or httpx.Client(base_url=base_url, timeout=timeout)
        self.generation = -1
        self._secret = b""
        self.reload_token()

    def reload_token(self) -> bool:
        """Re-read the token file; True when the material actually changed."""
        generation, secret = read_token_file(self.token_path)
        changed = (generation, secret) != (self.generation, self._secret)
        self.generation, self._secret = generation, secret
        return changed

    def close(self) -> None:
        self._http.close()

    # -- plumbing -----------------------------------------------------------

    def _send(self, method: str, path: str, body: bytes) -> dict:
        env = transport.pack(
            body, self._secret, self.client_id, self.generation, method, path,
            instance=self.instance,
        )
        headers = env.headers()
        headers["content-type"] = "application/json"
        try:
            resp = self._http.request(method, path, content=env.payload or None, headers=headers)
        except httpx.HTTPError as exc:
            raise ServerUnreachable(f"{method} {path}: {exc}")
        if resp.status_code >= 400:
            try:
                doc = canonical.loads(resp.content)
            except ValueError:
                doc = {}
            raise errors.from_code(
                doc.get("error", "InternalError"),
                doc.get("detail", f"HTTP {resp.status_code} from {method} {path}"),
            )
        return canonical.loads(resp.content)

    def request(self, method: str, path: str, doc: Optional[dict] = None) -> dict:
        body = canonical.dump_bytes(doc) if doc is not None else b""
        try:
            return self._send(method, path, body)
        except errors.FlapuError as err:
            # A rotation may have landed since our last read; pick up the new
            # material and try once more before giving up.
            if err.code in _RELOADABLE and self.reload_token():
                return self._send(method, path, body)
            raise

    def get(self, path: str) -> dict:
        return self.request("GET", path)

    def post(self, path: str, doc: Optional[dict] = None) -> dict:
        return self.request("POST", path, doc if doc is not None else {})

    # -- the routes an agent actually uses -----------------------------------

    def assignments(self) -> list[dict]:
        return self.get(f"/assignments/{self.client_id}")["runs"]

    def task(self, run_id: str) -> dict:
        return self.get(f"/runs/{run_id}/tasks/{self.client_id}")

    def checkin(self, run_id: str) -> dict:
        return self.post(f"/runs/{run_id}/checkins")

    def post_result(self, run_id: str, doc: dict) -> dict:
        return self.post(f"/runs/{run_id}/results", doc)

    def deployments(self) -> list[dict]:
        return self.get(f"/deployments/{self.client_id}")["directives"]

    def model(self, model_id: str) -> dict:
        return self.get(f"/models/{model_id}")

    def acknowledge(self, directive_id: str, outcome: str, gate_metric: Any = None) -> dict:
        return self.post(
            f"/deployments/{directive_id}/ack",
            {"outcome": outcome, "gate_metric": gate_metric},
        )
