"""Exceptions raised by the client.

Failures reported by the server keep their wire error code as the
exception class name, so ``except ActionDimensionMismatch:`` reads the
same on both sides of the socket.  Unknown codes fall back to the plain
``ServerError`` base so a newer server cannot crash an older client.
"""

__all__ = [
    "ActionDimensionMismatch",
    "AgentError",
    "BadResponse",
    "ConnectionFailed",
    "EpisodeFinished",
    "IndexOutOfRange",
    "InternalError",
    "MalformedRequest",
    "ProtocolViolation",
    "ServerError",
    "UnknownCommand",
    "VersionMismatch",
    "error_for",
]


class AgentError(Exception):
    """Base class for everything this package raises on purpose."""


class ConnectionFailed(AgentError):
    """The server could not be reached, or the transport died mid-session."""


class VersionMismatch(AgentError):
    """The server speaks a protocol version this client does not."""


class BadResponse(AgentError):
    """The server sent bytes that do not parse as a protocol response."""


class ServerError(AgentError):
    """An ``{"ok": false}`` response; ``code``/``message`` mirror the wire."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


class MalformedRequest(ServerError):
    pass


class UnknownCommand(ServerError):
    pass


class ProtocolViolation(ServerError):
    pass


class ActionDimensionMismatch(ServerError):
    pass


class EpisodeFinished(ServerError):
    pass


class IndexOutOfRange(ServerError):
    pass


class InternalError(ServerError):
    pass


_BY_CODE = {
    cls.__name__: cls
    for cls in (MalformedRequest, UnknownCommand, ProtocolViolation,
                ActionDimensionMismatch, EpisodeFinished, IndexOutOfRange,
                InternalError)
}


def error_for(code: str, message: str) -> ServerError:
    """Build the exception matching a wire error code."""
    return _BY_CODE.get(code, ServerError)(code, message)
