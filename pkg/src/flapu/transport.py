"""Pull-transport envelope mechanics.

Clients initiate every exchange. Each client request carries an envelope:
identifying headers plus a keyed-hash tag over (client_id | generation |
method | path | nonce | payload bytes) computed with the device token secret.
The server verifies the tag before touching the payload, rejects replayed
nonces, and inflates deflate-compressed bodies only after verification.

Confidentiality is left to TLS terminated in front of the server; this layer
adds authenticity and integrity only.
"""

from __future__ import annotations

import hmac
import hashlib
import secrets
import threading
import zlib
from dataclasses import dataclass, field
from typing import Mapping, Optional

from .errors import CorruptPayload, ReplayDetected, TagMismatch
from .provenance import utcnow

HEADER_CLIENT = "x-fl-client"
HEADER_GENERATION = "x-fl-generation"
HEADER_NONCE = "x-fl-nonce"
HEADER_TAG = "x-fl-tag"
HEADER_INSTANCE = "x-fl-instance"  # per-process fingerprint for duplicate-token detection
HEADER_SENT_AT = "x-fl-sent-at"

ENCODING_IDENTITY = "identity"
ENCODING_DEFLATE = "deflate"

COMPRESS_THRESHOLD = 1024  # bytes; smaller payloads are not worth deflating

NONCE_BYTES = 16
SECRET_BYTES = 32


def compute_tag(
    secret: bytes,
    client_id: str,
    generation: int,
    method: str,
    path: str,
    nonce_hex: str,
    payload: bytes,
) -> str:
    """Keyed hash binding the request line, nonce, and payload to the token."""
    material = b"|".join(
        [
            client_id.encode("utf-8"),
            str(int(generation)).encode("ascii"),
            method.upper().encode("ascii"),
            path.encode("utf-8"),
            nonce_hex.encode("ascii"),
        ]
    ) + b"|" + payload
    return hmac.new(secret, material, hashlib.sha256).hexdigest()


def tags_equal(a: str, b: str) -> bool:
    return hmac.compare_digest(a.lower(), b.lower())


@dataclass
class Envelope:
    client_id: str
    generation: int
    nonce: str  # lowercase hex
    tag: str  # lowercase hex
    payload: bytes
    encoding: str = ENCODING_IDENTITY
    instance: str = ""
    sent_at: str = ""

    def headers(self) -> dict[str, str]:
        out = {
            HEADER_CLIENT: self.client_id,
            HEADER_GENERATION: str(self.generation),
            HEADER_NONCE: self.nonce,
            HEADER_TAG: self.tag,
            HEADER_SENT_AT: self.sent_at,
        }
        if self.instance:
            out[HEADER_INSTANCE] = self.instance
        if self.encoding == ENCODING_DEFLATE:
            out["content-encoding"] = ENCODING_DEFLATE
        return out

    @classmethod
    def from_headers(cls, headers: Mapping[str, str], payload: bytes) -> Optional["Envelope"]:
        """Parse an inbound request; None when the envelope headers are absent."""
        lowered = {k.lower(): v for k, v in headers.items()}
        if HEADER_CLIENT not in lowered:
            return None
        try:
            generation = int(lowered.get(HEADER_GENERATION, ""))
        except ValueError:
            generation = -1
        return cls(
            client_id=lowered[HEADER_CLIENT],
            generation=generation,
            nonce=lowered.get(HEADER_NONCE, ""),
            tag=lowered.get(HEADER_TAG, ""),
            payload=payload,
            encoding=(
                ENCODING_DEFLATE
                if lowered.get("content-encoding", "").lower() == ENCODING_DEFLATE
                else ENCODING_IDENTITY
            ),
            instance=lowered.get(HEADER_INSTANCE, ""),
            sent_at=lowered.get(HEADER_SENT_AT, ""),
        )


def pack(
    payload: bytes,
    secret: bytes,
    client_id: str,
    generation: int,
    method: str,
    path: str,
    instance: str = "",
    compress_threshold: int = COMPRESS_THRESHOLD,
) -> Envelope:
    """Build an outbound envelope: deflate large payloads, then tag the wire
    bytes so verification happens before any decompression on the other side."""
    encoding = ENCODING_IDENTITY
    wire = payload
    if len(payload) >= compress_threshold:
        deflated = zlib.compress(payload)
        if len(deflated) < len(payload):
            wire = deflated
            encoding = ENCODING_DEFLATE
    nonce = secrets.token_hex(NONCE_BYTES)
    tag = compute_tag(secret, client_id, generation, method, path, nonce, wire)
    return Envelope(
        client_id=client_id,
        generation=generation,
        nonce=nonce,
        tag=tag,
        payload=wire,
        encoding=encoding,
        instance=instance,
        sent_at=utcnow(),
    )


def unpack(envelope: Envelope, secret: bytes, method: str, path: str) -> bytes:
    """Verify the tag, then decode the payload. Tag first: corrupted or forged
    payloads never reach the decompressor."""
    expected = compute_tag(
        secret, envelope.client_id, envelope.generation, method, path, envelope.nonce, envelope.payload
    )
    if not tags_equal(expected, envelope.tag):
        raise TagMismatch("envelope tag does not verify")
    if envelope.encoding == ENCODING_DEFLATE:
        try:
            return zlib.decompress(envelope.payload)
        except zlib.error as exc:
            raise CorruptPayload(f"deflate payload does not inflate: {exc}") from exc
    return envelope.payload


class ReplayGuard:
    """Tracks seen nonces per (client, generation); rotation clears the set."""

    def __init__(self):
        self._seen: dict[tuple[str, int], set[str]] = {}
        self._lock = threading.Lock()

    def check(self, client_id: str, generation: int, nonce: str) -> None:
        with self._lock:
            key = (client_id, generation)
            seen = self._seen.setdefault(key, set())
            if nonce in seen:
                raise ReplayDetected(f"nonce replay for client {client_id} generation {generation}")
            seen.add(nonce)

    def clear_client(self, client_id: str) -> None:
        with self._lock:
            for key in [k for k in self._seen if k[0] == client_id]:
                del self._seen[key]


@dataclass
class PollSchedule:
    """Capped exponential backoff: quiet polls stretch the interval, news
    resets it to the base."""

    base: float = 5.0
    factor: float = 1.5
    max_interval: float = 60.0
    current: float = field(init=False)

    def __post_init__(self):
        if self.base <= 0 or self.factor < 1 or self.max_interval < self.base:
            raise ValueError("poll schedule requires base > 0, factor >= 1, max >= base")
        self.current = self.base

    def advance(self, news: bool) -> float:
        """Update and return the next wait interval."""
        if news:
            self.current = self.base
        else:
            self.current = min(self.current * self.factor, self.max_interval)
        return self.current
