"""Gym-style client for the dispatch server's line-delimited JSON protocol.

Two transports cover the server's two faces:

* ``("127.0.0.1", 4321)`` or ``"127.0.0.1:4321"`` — TCP to a running
  ``gridarb serve --port`` process;
* ``["gridarb", "serve", "--config", ...]`` — an argv list; the client
  spawns the command as a child process and speaks over its pipes.

Everything the client knows about the environment (state/action sizes,
horizon, power bounds) arrives through the hello exchange and is cached
on the EnvClient.  The client never imports the server package.
"""

from __future__ import annotations

import socket
import subprocess

import numpy as np

from .errors import BadResponse, ConnectionFailed, ServerError, VersionMismatch
from .wire import parse_response, request_line

__all__ = ["EnvClient", "PROTOCOL_VERSION", "client_reset", "client_step",
           "connect"]

PROTOCOL_VERSION = "1"


class _TcpTransport:
    def __init__(self, host: str, port: int, timeout: float):
        try:
            self._sock = socket.create_connection((host, port),
                                                  timeout=timeout)
        except OSError as exc:
            raise ConnectionFailed(
                f"cannot connect to {host}:{port}: {exc}") from exc
        self._sock.settimeout(timeout)
        self._rfile = self._sock.makefile("rb")

    def request(self, line: str) -> str:
        try:
            self._sock.sendall(line.encode("utf-8") + b"\n")
            raw = self._rfile.readline()
        except OSError as exc:
            raise ConnectionFailed(f"transport failed: {exc}") from exc
        if not raw:
            raise ConnectionFailed("server closed the connection")
        return raw.decode("utf-8").rstrip("\n")

    def close(self) -> None:
        try:
            self._rfile.close()
            self._sock.close()
        except OSError:
            pass


class _ChildTransport:
    """Runs the server as a child process, protocol on stdin/stdout."""

    def __init__(self, argv: list):
        argv = [str(a) for a in argv]
        try:
            self._proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                encoding="utf-8")
        except OSError as exc:
            raise ConnectionFailed(f"cannot spawn {argv[0]!r}: {exc}") from exc

    def request(self, line: str) -> str:
        if self._proc.poll() is not None:
            raise ConnectionFailed(
                f"server process exited with code {self._proc.returncode}")
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
            raw = self._proc.stdout.readline()
        except (OSError, ValueError) as exc:
            raise ConnectionFailed(f"transport failed: {exc}") from exc
        if not raw:
            raise ConnectionFailed("server process closed its stdout")
        return raw.rstrip("\n")

    def close(self) -> None:
        proc = self._proc
        for stream in (proc.stdin, proc.stdout):
            try:
                stream.close()
            except OSError:
                pass
        try:
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()


def _open_transport(endpoint, timeout: float):
    if isinstance(endpoint, str):
        host, sep, port = endpoint.rpartition(":")
        if not sep or not port.isdigit():
            raise ValueError(f"endpoint string must be 'host:port', "
                             f"got {endpoint!r}")
        return _TcpTransport(host, int(port), timeout)
    if isinstance(endpoint, tuple) and len(endpoint) == 2:
        return _TcpTransport(str(endpoint[0]), int(endpoint[1]), timeout)
    if isinstance(endpoint, list):
        return _ChildTransport(endpoint)
    raise ValueError(f"unsupported endpoint: {endpoint!r}")


class EnvClient:
    """One protocol session plus the metadata the server announced.

    Built by connect(); not meant to be constructed directly.  With
    ``record=True`` every exchange is appended to ``transcript`` as
    alternating ``"> request"`` / ``"< response"`` lines, matching the
    format of the server's golden transcript fixture.
    """

    def __init__(self, transport, record: bool = False):
        self._transport = transport
        self.transcript: list | None = [] if record else None
        self.closed = False
        self.protocol_version: str | None = None
        self.state_dim: int | None = None
        self.action_dim: int | None = None
        self.horizon: int | None = None
        self.action_low: np.ndarray | None = None
        self.action_high: np.ndarray | None = None
        self.dt_hours: float | None = None
        self.day: int | None = None

    def raw_request(self, line: str) -> str:
        """Send one raw line, return the raw response line (both recorded)."""
        if self.closed:
            raise ConnectionFailed("client is closed")
        response = self._transport.request(line)
        if self.transcript is not None:
            self.transcript.append("> " + line)
            self.transcript.append("< " + response)
        return response

    def call(self, cmd: str, payload=None):
        """One request/response cycle; ok=false raises the mapped error."""
        return parse_response(self.raw_request(request_line(cmd, payload)))

    def close(self) -> None:
        """Send the close command (best effort) and drop the transport."""
        if self.closed:
            return
        try:
            self.call("close")
        except (ConnectionFailed, ServerError, BadResponse):
            pass
        finally:
            self.closed = True
            self._transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


def _field(payload, key):
    if not isinstance(payload, dict) or key not in payload:
        raise BadResponse(f"response payload lacks {key!r}: {payload!r}")
    return payload[key]


def connect(endpoint, *, record: bool = False, timeout: float = 10.0
            ) -> EnvClient:
    """Open a transport, run the hello exchange, cache the metadata.

    Raises ConnectionFailed when the endpoint is unreachable (or the
    child cannot be spawned) and VersionMismatch when the server
    announces a protocol version other than the one this client speaks.
    """
    transport = _open_transport(endpoint, timeout)
    client = EnvClient(transport, record=record)
    try:
        meta = client.call("hello")
        version = str(_field(meta, "version"))
        if version != PROTOCOL_VERSION:
            raise VersionMismatch(
                f"server speaks protocol {version!r}, "
                f"this client speaks {PROTOCOL_VERSION!r}")
        client.protocol_version = version
        client.state_dim = int(_field(meta, "state_dim"))
        client.action_dim = int(_field(meta, "action_dim"))
        client.horizon = int(_field(meta, "horizon"))
        bounds = _field(meta, "action_bounds")
        client.action_low = np.asarray(bounds[0], dtype=float)
        client.action_high = np.asarray(bounds[1], dtype=float)
        client.dt_hours = float(_field(meta, "dt_hours"))
    except BaseException:
        transport.close()
        raise
    return client


def client_reset(client: EnvClient, selector=None) -> np.ndarray:
    """Start an episode and return the initial state vector.

    ``selector`` mirrors the protocol: None lets the server draw a day,
    an integer pins that day index, and a dict such as ``{"seed": 7}``
    or ``{"day": 3}`` is passed through verbatim.
    """
    if selector is None:
        payload = None
    elif isinstance(selector, dict):
        payload = selector
    elif isinstance(selector, int) and not isinstance(selector, bool):
        payload = {"day": selector}
    else:
        raise ValueError(f"selector must be None, an int day index, or a "
                         f"dict, got {selector!r}")
    out = client.call("reset", payload)
    client.day = int(_field(out, "day"))
    return np.asarray(_field(out, "state"), dtype=float)


def client_step(client: EnvClient, action):
    """Apply one action; returns (state, reward, done, info).

    The action is sent as-is (after float coercion): length checking is
    the server's job, so a wrong-sized action raises the server's
    ActionDimensionMismatch rather than a local error.
    """
    powers = [float(a) for a in np.atleast_1d(np.asarray(action, dtype=float))]
    out = client.call("step", {"action": powers})
    state = np.asarray(_field(out, "state"), dtype=float)
    reward = float(_field(out, "reward"))
    done = bool(_field(out, "done"))
    info = dict(_field(out, "info"))
    return state, reward, done, info
