"""Canonical JSON serialization.

Every document that is hashed, signed, or compared byte-for-byte (contracts,
model weights, ledger exports, API resource representations) goes through
:func:`dumps`: UTF-8, lexicographically sorted keys, no whitespace, floats
rendered with 17 significant digits so parse/serialize round-trips are exact.
"""

from __future__ import annotations

import hashlib
import json
import math
from typing import Any


def _format_float(value: float) -> str:
    if not math.isfinite(value):
        raise ValueError(f"non-finite float not representable in canonical JSON: {value!r}")
    text = format(value, ".17g")
    # Normalize exponent forms like 1e+05 -> 1e+05 is fine for json.loads,
    # but keep integral floats distinguishable from ints ("2" vs "2.0").
    if "e" not in text and "E" not in text and "." not in text:
        text += ".0"
    return text


def _encode(value: Any, out: list[str]) -> None:
    if value is None:
        out.append("null")
    elif value is True:
        out.append("true")
    elif value is False:
        out.append("false")
    elif isinstance(value, int):
        out.append(str(value))
    elif isinstance(value, float):
        out.append(_format_float(value))
    elif isinstance(value, str):
        out.append(json.dumps(value, ensure_ascii=False))
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _encode(item, out)
        out.append("]")
    elif isinstance(value, dict):
        out.append("{")
        for i, key in enumerate(sorted(value)):
            if not isinstance(key, str):
                raise TypeError(f"canonical JSON object keys must be str, got {type(key).__name__}")
            if i:
                out.append(",")
            out.append(json.dumps(key, ensure_ascii=False))
            out.append(":")
            _encode(value[key], out)
        out.append("}")
    else:
        raise TypeError(f"type {type(value).__name__} is not canonical-JSON serializable")


def dumps(value: Any) -> str:
    """Serialize ``value`` to the canonical JSON string."""
    out: list[str] = []
    _encode(value, out)
    return "".join(out)


def dump_bytes(value: Any) -> bytes:
    return dumps(value).encode("utf-8")


def loads(text: str | bytes) -> Any:
    return json.loads(text)


def content_hash(value: Any) -> str:
    """SHA-256 hex digest of the canonical serialization."""
    return hashlib.sha256(dump_bytes(value)).hexdigest()
