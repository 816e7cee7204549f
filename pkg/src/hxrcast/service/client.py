"""Client for the hidden-state service.

Endpoints take two forms:

  * ``http://host:port`` — real HTTP/1.1 transport with deadline + retries.
  * ``mock:`` (or a MockReservoirModel instance) — in-process mock routed
    through the same encode/decode path, so behavior matches the wire
    byte for byte.
"""

from __future__ import annotations

import itertools
import socket
import urllib.error
import urllib.request

import numpy as np

from ..errors import (
    ArgumentError,
    CapacityError,
    CompatibilityError,
    DeadlineError,
    TransportError,
)
from . import protocol
from .mock import MockConfig, MockReservoirModel, dispatch
from .protocol import (
    PROTOCOL_VERSION,
    ReservoirOutput,
    ReservoirRequest,
    ServerInfo,
)

_ERROR_FOR_STATUS = {
    400: ArgumentError,
    404: ArgumentError,
    413: CapacityError,
    426: CompatibilityError,
}


class ServiceClient:
    """Thread-safe client; every call carries a deadline."""

    def __init__(self, endpoint, deadline_s: float = 30.0, retries: int = 2):
        if deadline_s <= 0:
            raise ArgumentError("deadline must be positive")
        self.deadline_s = deadline_s
        self.retries = retries
        self._request_ids = itertools.count(1)
        self._mock: MockReservoirModel | None = None
        self._base: str | None = None
        if isinstance(endpoint, MockReservoirModel):
            self._mock = endpoint
        elif isinstance(endpoint, str) and endpoint.startswith("mock:"):
            self._mock = MockReservoirModel(MockConfig())
        elif isinstance(endpoint, str) and endpoint.startswith(("http://", "https://")):
            self._base = endpoint.rstrip("/")
        else:
            raise ArgumentError(f"unsupported endpoint: {endpoint!r}")

    # -- transport -------------------------------------------------------

    def _call(self, method: str, path: str, body: str | None) -> str:
        if self._mock is not None:
            status, payload = dispatch(self._mock, method, path, body)
        else:
            status, payload = self._http(method, path, body)
        if status == 200:
            return payload
        kind, message = protocol.decode_error(payload)
        exc_type = _ERROR_FOR_STATUS.get(status, TransportError)
        raise exc_type(f"{kind}: {message}" if message else kind)

    def _http(self, method: str, path: str, body: str | None) -> tuple[int, str]:
        url = self._base + path
        data = body.encode("utf-8") if body is not None else None
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            request = urllib.request.Request(url, data=data, method=method, headers={
                "Content-Type": "application/json; charset=utf-8",
                "X-Request-Id": str(next(self._request_ids)),
            })
            try:
                with urllib.request.urlopen(request, timeout=self.deadline_s) as resp:
                    return resp.status, resp.read().decode("utf-8")
            except urllib.error.HTTPError as exc:
                return exc.code, exc.read().decode("utf-8")
            except (socket.timeout, TimeoutError) as exc:
                raise DeadlineError(
                    f"deadline of {self.deadline_s}s expired for {method} {path}"
                ) from exc
            except urllib.error.URLError as exc:
                if isinstance(exc.reason, (socket.timeout, TimeoutError)):
                    raise DeadlineError(
                        f"deadline of {self.deadline_s}s expired for {method} {path}"
                    ) from exc
                last_error = exc
            except OSError as exc:
                last_error = exc
        raise TransportError(
            f"{method} {path} failed after {self.retries + 1} attempts: {last_error}"
        )

    # -- operations --------------------------------------------------------

    def fetch_info(self) -> ServerInfo:
        info = protocol.decode_info(self._call("GET", protocol.INFO_PATH, None))
        if info.protocol_version != PROTOCOL_VERSION:
            raise CompatibilityError(
                f"server speaks protocol {info.protocol_version}, "
                f"client speaks {PROTOCOL_VERSION}"
            )
        return info

    def run_reservoir(self, prompt_text: str, input_vectors: np.ndarray,
                      return_last_k: int) -> ReservoirOutput:
        req = ReservoirRequest(prompt_text=prompt_text,
                               input_vectors=np.asarray(input_vectors, dtype=np.float64),
                               return_last_k=return_last_k)
        body = protocol.encode_reservoir_request(req)
        return protocol.decode_reservoir_output(
            self._call("POST", protocol.RESERVOIR_PATH, body))

    def embed_terms(self, terms: list[str]) -> np.ndarray:
        if not terms:
            raise ArgumentError("terms list is empty")
        body = protocol.encode_terms_request(list(terms))
        return protocol.decode_terms_response(
            self._call("POST", protocol.EMBED_TERMS_PATH, body))
