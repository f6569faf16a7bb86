"""Deterministic JSON encoding for the wire protocol and CLI reports.

The stock ``json`` module is fine for parsing, but its float formatting
follows ``repr`` (shortest round-trip form), which varies in *appearance*
across values (``0.1`` vs ``0.30000000000000004``) and is awkward to pin
down in golden-transcript tests.  Here every float is rendered with 17
significant digits — enough to reconstruct the exact IEEE double on any
conforming reader — so identical payloads always serialize to identical
bytes.  Dict keys keep insertion order; numpy scalars and arrays are
converted transparently.
"""

from __future__ import annotations

import json
import math

import numpy as np

__all__ = ["dumps", "format_float"]


def format_float(x: float) -> str:
    """Render a finite float with 17 significant digits.

    Raises ValueError for NaN or infinities: strict JSON has no spelling
    for them, and silently emitting ``null`` would hide bugs.
    """
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite float {x!r}")
    return format(x, ".17g")


def _encode(obj, out: list) -> None:
    if obj is None:
        out.append("null")
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(repr(int(obj)))
    elif isinstance(obj, (float, np.floating)):
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
    elif isinstance(obj, np.ndarray):
        _encode(obj.tolist(), out)
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
