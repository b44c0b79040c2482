"""Small FastAPI helpers shared by the coordination server and the agent's
local API: canonical JSON responses (byte-stable representations), strict
body parsing, and the error-to-document mapping."""

from __future__ import annotations

from typing import Any

from fastapi import FastAPI, Request, Response

from . import canonical
from .errors import BadRequestShape, FlapuError


class CanonicalJSONResponse(Response):
    media_type = "application/json"

    def render(self, content: Any) -> bytes:
        return canonical.dumps(content).encode("utf-8")


def doc(content: Any, status_code: int = 200) -> CanonicalJSONResponse:
    return CanonicalJSONResponse(content, status_code=status_code)


def body_doc(raw: bytes) -> dict:
    if not raw:
        return {}
    try:
        parsed = canonical.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as exc:
        raise BadRequestShape(f"body is not valid JSON: {exc}") from exc
    if not isinstance(parsed, dict):
        raise BadRequestShape("body must be a JSON object")
    return parsed


def install_error_handler(app: FastAPI) -> None:
    """Every FlapuError becomes ``{"error": code, "detail": ...}`` at the
    status the error class declares."""

    @app.exception_handler(FlapuError)
    async def _flapu_error(_request: Request, exc: FlapuError):
        return doc(exc.to_doc(), status_code=exc.http_status)
