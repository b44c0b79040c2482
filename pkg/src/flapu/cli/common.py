"""Shared CLI plumbing.

Exit codes follow the usual convention: 0 on success, 1 when the server (or
agent) refuses the request, 2 for usage errors -- click produces the latter
on its own.
"""

from __future__ import annotations

import json
from typing import Any, Optional

import click
import httpx

from .. import canonical


class ApiError(click.ClickException):
    """A refusal from the other side of the HTTP boundary."""

    exit_code = 1


def parse_json_arg(text: str, what: str) -> Any:
    try:
        return json.loads(text)
    except ValueError as exc:
        raise click.UsageError(f"{what} must be valid JSON: {exc}")


def emit(doc: Any, as_json: bool, human: Optional[str] = None) -> None:
    """Print the response: raw canonical JSON under --json, otherwise the
    human summary (falling back to indented JSON when none fits)."""
    if as_json:
        click.echo(canonical.dumps(doc))
    elif human is not None:
        click.echo(human)
    else:
        click.echo(json.dumps(doc, indent=2, sort_keys=True))


class BearerApi:
    """A bearer-token HTTP session with typed error reporting."""

    def __init__(self, base_url: str, token: str = "", timeout: float = 30.0):
        self._http = httpx.Client(base_url=base_url, timeout=timeout)
        self.token = token

    def request(self, method: str, path: str, doc: Optional[dict] = None, params=None) -> Any:
        headers = {"content-type": "application/json"}
        if self.token:
            headers["authorization"] = f"Bearer {self.token}"
        body = canonical.dumps(doc).encode() if doc is not None else None
        try:
            resp = self._http.request(method, path, content=body, headers=headers, params=params)
        except httpx.HTTPError as exc:
            raise ApiError(f"ServerUnreachable: {exc}")
        if resp.status_code >= 400:
            try:
                err = resp.json()
            except ValueError:
                err = {}
            code = err.get("error", f"HTTP{resp.status_code}")
            raise ApiError(f"{code}: {err.get('detail', resp.text[:200])}")
        if resp.headers.get("content-type", "").startswith("application/json"):
            return resp.json()
        return resp.text

    def get(self, path: str, params=None) -> Any:
        return self.request("GET", path, params=params)

    def post(self, path: str, doc: Optional[dict] = None) -> Any:
        return self.request("POST", path, doc if doc is not None else {})

    def patch(self, path: str, doc: dict) -> Any:
        return self.request("PATCH", path, doc)
