"""Request encoding and response parsing for the line protocol.

The server renders every float with 17 significant digits and keeps dict
keys in insertion order, which makes its transcripts reproducible
byte-for-byte.  Requests built here follow the same convention, so a
recorded client conversation can be diffed directly against a server-side
transcript (and against the golden fixture shipped with the server).

This module deliberately reimplements that small encoder instead of
importing the server package: the client's whole point is that the wire
format is the only contract.
"""

from __future__ import annotations

import json
import math

from .errors import BadResponse, error_for

__all__ = ["dumps", "format_float", "parse_response", "request_line"]


def format_float(x: float) -> str:
    """Render a finite float with 17 significant digits."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite float {x!r}")
    return format(x, ".17g")


def _encode(obj, out: list) -> None:
    if obj is None:
        out.append("null")
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, bool):
        out.append("true" if obj else "false")
    elif isinstance(obj, int):
        out.append(repr(obj))
    elif isinstance(obj, float):
        out.append(format_float(obj))
    elif isinstance(obj, dict):
        out.append("{")
        for i, (key, value) in enumerate(obj.items()):
            if not isinstance(key, str):
                raise ValueError(f"JSON object keys must be strings, "
                                 f"got {type(key).__name__}")
            if i:
                out.append(", ")
            out.append(json.dumps(key))
            out.append(": ")
            _encode(value, out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, value in enumerate(obj):
            if i:
                out.append(", ")
            _encode(value, out)
        out.append("]")
    else:
        raise ValueError(f"cannot serialize {type(obj).__name__} to JSON")


def dumps(obj) -> str:
    """Serialize to a single-line JSON string with 17-digit floats."""
    out: list = []
    _encode(obj, out)
    return "".join(out)


def request_line(cmd: str, payload=None) -> str:
    """Build one request line; ``payload=None`` omits the key entirely."""
    body = {"cmd": cmd}
    if payload is not None:
        body["payload"] = payload
    return dumps(body)


def parse_response(line: str):
    """Decode one response line, returning its payload.

    ``{"ok": false}`` responses come back as the exception class named
    after their error code; anything that is not a well-formed response
    envelope raises BadResponse.
    """
    try:
        msg = json.loads(line)
    except ValueError as exc:
        raise BadResponse(f"response is not JSON: {exc}") from exc
    if not isinstance(msg, dict) or not isinstance(msg.get("ok"), bool):
        raise BadResponse(f"response lacks a boolean 'ok' field: {line!r}")
    if msg["ok"]:
        return msg.get("payload")
    error = msg.get("error")
    if not isinstance(error, dict):
        raise BadResponse(f"error response lacks an 'error' object: {line!r}")
    raise error_for(str(error.get("code", "ServerError")),
                    str(error.get("message", "")))
