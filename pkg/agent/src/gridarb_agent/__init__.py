"""Client and training demo for the gridarb dispatch server.

The package talks to the server exclusively through its line-delimited
JSON protocol; it never imports the server's internals.  See client for
the transport/session layer and demo for the actor-critic example.
"""

from .client import (
    PROTOCOL_VERSION,
    EnvClient,
    client_reset,
    client_step,
    connect,
)
from .demo import train_demo
from .errors import (
    ActionDimensionMismatch,
    AgentError,
    BadResponse,
    ConnectionFailed,
    EpisodeFinished,
    IndexOutOfRange,
    InternalError,
    MalformedRequest,
    ProtocolViolation,
    ServerError,
    UnknownCommand,
    VersionMismatch,
)

__all__ = [
    "ActionDimensionMismatch",
    "AgentError",
    "BadResponse",
    "ConnectionFailed",
    "EnvClient",
    "EpisodeFinished",
    "IndexOutOfRange",
    "InternalError",
    "MalformedRequest",
    "PROTOCOL_VERSION",
    "ProtocolViolation",
    "ServerError",
    "UnknownCommand",
    "VersionMismatch",
    "client_reset",
    "client_step",
    "connect",
    "train_demo",
]
