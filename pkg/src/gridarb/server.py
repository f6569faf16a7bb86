"""Line-delimited JSON protocol for driving episodes from another process.

One request per line, one response per line, strictly in order.  Requests
are objects ``{"cmd": ..., "payload": {...}}``; responses are
``{"ok": true, "payload": ...}`` or ``{"ok": false, "error": {"code",
"message"}}``.  A malformed line gets an error response and the session
keeps going — a driving agent must never be able to wedge the server by
sending garbage.  Responses are serialized with 17-significant-digit
floats (see `gridarb.jsonio`), so two sessions fed identical request
bytes produce identical response bytes.

The protocol core is `ProtocolSession.handle_line`, a pure
string-to-string function; `serve_stdio` and `serve_tcp` are thin
transports over it.  Each TCP connection gets its own session seeded
identically, so reconnecting reproduces the same episode sequence.
"""

from __future__ import annotations

import json
import socketserver
import sys

import numpy as np

from .config import RunConfig
from .environment import Action, DaySelector, RandomDaySelector, reset, step
from .errors import (
    ActionDimensionMismatch,
    EpisodeFinished,
    GridArbError,
    IndexOutOfRange,
    ProtocolViolation,
)
from .jsonio import dumps

__all__ = ["PROTOCOL_VERSION", "ProtocolSession", "serve_stdio", "serve_tcp"]

PROTOCOL_VERSION = "1"

# wire codes for errors raised below the protocol layer; anything not
# listed here is reported as InternalError rather than leaking a Python
# class name that is not part of the documented protocol
_WIRE_CODES = {
    ActionDimensionMismatch: "ActionDimensionMismatch",
    EpisodeFinished: "EpisodeFinished",
    IndexOutOfRange: "IndexOutOfRange",
    ProtocolViolation: "ProtocolViolation",
}


class _Malformed(Exception):
    """Internal: request failed structural validation."""


def _error(code: str, message: str) -> str:
    return dumps({"ok": False, "error": {"code": code, "message": message}})


def _payload_numbers(raw, what: str) -> list:
    if not isinstance(raw, list):
        raise _Malformed(f"{what} must be an array of numbers")
    values = []
    for item in raw:
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            raise _Malformed(f"{what} must contain only numbers")
        item = float(item)
        if not np.isfinite(item):
            raise _Malformed(f"{what} must be finite")
        values.append(item)
    return values


class ProtocolSession:
    """One agent's conversation: hello / reset / step ... / close."""

    def __init__(self, run_config: RunConfig, seed: int = 0):
        self._rc = run_config
        self._rng = np.random.default_rng(seed)
        self._env = None
        self._state_dim = None
        self.closed = False

    # -- request plumbing ---------------------------------------------

    def handle_line(self, line: str) -> str:
        """Answer one request line; never raises."""
        if self.closed:
            # the close handshake ended the conversation; whatever
            # arrives afterwards is a client-side protocol bug
            return _error("ProtocolViolation", "session is closed")
        try:
            cmd, payload = self._parse(line)
        except _Malformed as exc:
            return _error("MalformedRequest", str(exc))
        try:
            if cmd == "hello":
                return self._ok(self._hello(payload))
            if cmd == "reset":
                return self._ok(self._reset(payload))
            if cmd == "step":
                return self._ok(self._step(payload))
            if cmd == "close":
                self.closed = True
                return self._ok({"closed": True})
            return _error("UnknownCommand", f"unknown cmd {cmd!r}")
        except _Malformed as exc:
            return _error("MalformedRequest", str(exc))
        except GridArbError as exc:
            code = _WIRE_CODES.get(type(exc), "InternalError")
            return _error(code, str(exc))
        except Exception as exc:  # noqa: BLE001 — the session must survive
            return _error("InternalError",
                          f"{type(exc).__name__}: {exc}")

    def _parse(self, line: str):
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise _Malformed(f"invalid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise _Malformed("request must be a JSON object")
        extra = set(doc) - {"cmd", "payload"}
        if extra:
            raise _Malformed(f"unexpected request fields {sorted(extra)}")
        cmd = doc.get("cmd")
        if not isinstance(cmd, str):
            raise _Malformed("request needs a string 'cmd' field")
        payload = doc.get("payload", {})
        if not isinstance(payload, dict):
            raise _Malformed("'payload' must be a JSON object")
        return cmd, payload

    @staticmethod
    def _ok(payload) -> str:
        return dumps({"ok": True, "payload": payload})

    # -- commands -----------------------------------------------------

    def _hello(self, payload: dict) -> dict:
        if payload:
            raise _Malformed("hello takes no payload")
        cfg = self._rc.env
        if self._state_dim is None:
            probe = reset(cfg, self._rc.data, DaySelector(0))
            self._state_dim = len(probe.state)
        return {
            "version": PROTOCOL_VERSION,
            "state_dim": self._state_dim,
            "action_dim": len(cfg.fleet),
            "horizon": cfg.horizon,
            "action_bounds": [[p.p_min for p in cfg.fleet],
                              [p.p_max for p in cfg.fleet]],
            "dt_hours": cfg.dt,
        }

    def _reset(self, payload: dict) -> dict:
        extra = set(payload) - {"day", "seed"}
        if extra:
            raise _Malformed(f"unexpected reset fields {sorted(extra)}")
        if "day" in payload and "seed" in payload:
            raise _Malformed("reset takes 'day' or 'seed', not both")
        if "day" in payload:
            day = payload["day"]
            if isinstance(day, bool) or not isinstance(day, int):
                raise _Malformed("'day' must be an integer")
            selector = DaySelector(day)
        elif "seed" in payload:
            seed = payload["seed"]
            if isinstance(seed, bool) or not isinstance(seed, int):
                raise _Malformed("'seed' must be an integer")
            selector = RandomDaySelector(seed)
        else:
            # bare reset: the session's own stream picks the day, so a
            # fixed --seed replays the same curriculum of days
            selector = DaySelector(
                int(self._rng.integers(0, self._rc.data.day_count)))
        self._env = reset(self._rc.env, self._rc.data, selector)
        self._state_dim = len(self._env.state)
        return {"day": self._env.day_index,
                "state": self._env.state.as_array()}

    def _step(self, payload: dict) -> dict:
        if self._env is None:
            raise ProtocolViolation("step before reset")
        extra = set(payload) - {"action"}
        if extra:
            raise _Malformed(f"unexpected step fields {sorted(extra)}")
        if "action" not in payload:
            raise _Malformed("step needs an 'action' array")
        powers = _payload_numbers(payload["action"], "'action'")
        if len(powers) != len(self._rc.env.fleet):
            raise ActionDimensionMismatch(
                f"expected {len(self._rc.env.fleet)} ESS powers, "
                f"got {len(powers)}")
        transition = step(self._env, self._rc.env, Action(tuple(powers)))
        return {
            "state": transition.state.as_array(),
            "reward": transition.reward,
            "done": transition.done,
            "info": dict(transition.info),
        }


def serve_stdio(run_config: RunConfig, seed: int = 0,
                stdin=None, stdout=None) -> None:
    """Serve one session over text streams until close or EOF."""
    stdin = sys.stdin if stdin is None else stdin
    stdout = sys.stdout if stdout is None else stdout
    session = ProtocolSession(run_config, seed=seed)
    for line in stdin:
        stdout.write(session.handle_line(line) + "\n")
        stdout.flush()
        if session.closed:
            break


def serve_tcp(run_config: RunConfig, port: int,
              seed: int = 0) -> socketserver.ThreadingTCPServer:
    """Bind a threading TCP server; caller runs/stops serve_forever().

    Every connection gets a fresh session with the same base seed, so a
    client that reconnects and replays its requests sees byte-identical
    responses.
    """

    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            session = ProtocolSession(run_config, seed=seed)
            for raw in self.rfile:
                line = raw.decode("utf-8", errors="replace")
                self.wfile.write(
                    (session.handle_line(line) + "\n").encode("utf-8"))
                self.wfile.flush()
                if session.closed:
                    break

    class Server(socketserver.ThreadingTCPServer):
        allow_reuse_address = True
        daemon_threads = True

    return Server(("127.0.0.1", port), Handler)
