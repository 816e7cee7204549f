"""Hidden-state service: wire protocol, client, and the in-process mock."""

from .protocol import (
    PROTOCOL_VERSION,
    ReservoirOutput,
    ReservoirRequest,
    ServerInfo,
)
from .client import ServiceClient
from .mock import MockConfig, MockReservoirModel, serve_http

__all__ = [
    "PROTOCOL_VERSION",
    "ServerInfo",
    "ReservoirRequest",
    "ReservoirOutput",
    "ServiceClient",
    "MockConfig",
    "MockReservoirModel",
    "serve_http",
]
