"""Deterministic in-process reservoir service implementing the wire protocol.

The state map is a fixed, seeded echo-state recurrence: prompt bytes embed
through a seeded token table, the client's continuous vectors follow, and
s[t+1] = tanh(W s[t] + W_in u[t] + b) with W rescaled to the configured
spectral radius. Per-position entropies are a smooth seeded function of the
state norm mapped into (0, ln vocab_size).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from ..errors import ArgumentError, CapacityError, CompatibilityError, ParseError
from . import protocol
from .protocol import (
    PROTOCOL_VERSION,
    ReservoirOutput,
    ReservoirRequest,
    ServerInfo,
)


@dataclass(frozen=True)
class MockConfig:
    model_id: str = "mock-esn"
    hidden_dim: int = 64
    vocab_size: int = 256
    max_positions: int = 4096
    seed: int = 20240601
    spectral_radius: float = 0.9
    input_scale: float = 3.0
    protocol_version: int = PROTOCOL_VERSION

    def __post_init__(self):
        if not (0 < self.spectral_radius < 1):
            raise ArgumentError("spectral_radius must lie in (0, 1)")
        if self.hidden_dim < 1 or self.vocab_size < 2 or self.max_positions < 1:
            raise ArgumentError("invalid mock dimensions")


class MockReservoirModel:
    """Pure request->response functions; shared by in-process and HTTP use."""

    def __init__(self, config: MockConfig = MockConfig()):
        self.config = config
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xE5]))
        h = config.hidden_dim
        w = rng.uniform(-1.0, 1.0, (h, h))
        radius = max(abs(np.linalg.eigvals(w)))
        self._w = w * (config.spectral_radius / radius)
        self._w_in = rng.uniform(-1.0, 1.0, (h, h)) * (config.input_scale / np.sqrt(h))
        self._bias = rng.uniform(-0.1, 0.1, h)
        self._token_table = rng.uniform(-1.0, 1.0, (config.vocab_size, h))
        # Entropy map: ln(V) * sigmoid(a * (||s|| - c)), seeded constants.
        self._ent_gain = float(rng.uniform(0.5, 1.5))
        self._ent_center = float(rng.uniform(0.3, 0.7)) * np.sqrt(h)

    # -- protocol operations -------------------------------------------

    def info(self) -> ServerInfo:
        c = self.config
        return ServerInfo(c.model_id, c.hidden_dim, c.vocab_size,
                          c.max_positions, c.protocol_version)

    def tokenize(self, text: str) -> np.ndarray:
        """Byte-level tokens; vocab wraps for vocab_size < 256."""
        ids = np.frombuffer(text.encode("utf-8"), dtype=np.uint8).astype(np.intp)
        return ids % self.config.vocab_size

    def reservoir(self, req: ReservoirRequest) -> ReservoirOutput:
        h = self.config.hidden_dim
        vectors = req.input_vectors
        if vectors.size and vectors.shape[1] != h:
            raise ArgumentError(
                f"input vectors have width {vectors.shape[1]}, server hidden_dim is {h}"
            )
        prompt_ids = self.tokenize(req.prompt_text)
        total = len(prompt_ids) + len(vectors)
        if total == 0:
            raise ArgumentError("request has no positions (empty prompt, no vectors)")
        if total > self.config.max_positions:
            raise CapacityError(
                f"{total} positions exceed max_positions {self.config.max_positions}"
            )
        inputs = np.concatenate([self._token_table[prompt_ids].reshape(-1, h),
                                 vectors.reshape(-1, h)])
        k_eff = min(req.return_last_k, total)
        keep_from = total - k_eff
        states = np.empty((k_eff, h))
        s = np.zeros(h)
        for t in range(total):
            s = np.tanh(self._w @ s + self._w_in @ inputs[t] + self._bias)
            if t >= keep_from:
                states[t - keep_from] = s
        return ReservoirOutput(states=states, entropies=self._entropies(states))

    def embed_terms(self, terms: list[str]) -> np.ndarray:
        if not terms:
            raise ArgumentError("terms list is empty")
        rows = []
        for term in terms:
            ids = self.tokenize(term)
            if len(ids) == 0:
                raise ArgumentError("empty term")
            rows.append(self._token_table[ids].mean(axis=0))
        return np.asarray(rows)

    def _entropies(self, states: np.ndarray) -> np.ndarray:
        norms = np.linalg.norm(states, axis=1)
        z = self._ent_gain * (norms - self._ent_center)
        return np.log(self.config.vocab_size) / (1.0 + np.exp(-z))


def dispatch(model: MockReservoirModel, method: str, path: str,
             body: str | None) -> tuple[int, str]:
    """Route one request; returns (status, response body). Transport-agnostic."""
    try:
        if method == "GET" and path == protocol.INFO_PATH:
            return 200, protocol.encode_info(model.info())
        if method == "POST" and path == protocol.RESERVOIR_PATH:
            version, req = protocol.decode_reservoir_request(body or "")
            _check_version(version, model)
            return 200, protocol.encode_reservoir_output(model.reservoir(req))
        if method == "POST" and path == protocol.EMBED_TERMS_PATH:
            version, terms = protocol.decode_terms_request(body or "")
            _check_version(version, model)
            return 200, protocol.encode_terms_response(model.embed_terms(terms))
        return 404, protocol.encode_error("argument", f"unknown endpoint {method} {path}")
    except (ParseError, ArgumentError) as exc:
        return 400, protocol.encode_error("argument", str(exc))
    except CapacityError as exc:
        return 413, protocol.encode_error("capacity", str(exc))
    except CompatibilityError as exc:
        return 426, protocol.encode_error("version", str(exc))
    except Exception as exc:  # pragma: no cover - defensive
        return 500, protocol.encode_error("server", f"{type(exc).__name__}: {exc}")


def _check_version(version: int, model: MockReservoirModel) -> None:
    if version != model.config.protocol_version:
        raise CompatibilityError(
            f"client protocol_version {version} != server {model.config.protocol_version}"
        )


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "hxrcast-mock"
    model: MockReservoirModel  # set by serve_http

    def log_message(self, *args):  # silence default stderr chatter
        pass

    def _respond(self, status: int, payload: str):
        data = payload.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(data)))
        request_id = self.headers.get("X-Request-Id")
        if request_id:
            self.send_header("X-Request-Id", request_id)
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):
        status, payload = dispatch(self.model, "GET", self.path, None)
        self._respond(status, payload)

    def do_POST(self):
        length = int(self.headers.get("Content-Length", "0"))
        body = self.rfile.read(length).decode("utf-8")
        status, payload = dispatch(self.model, "POST", self.path, body)
        self._respond(status, payload)


class ServiceHandle:
    """Running HTTP service; shutdown() drains in-flight requests."""

    def __init__(self, server: ThreadingHTTPServer, thread: threading.Thread):
        self._server = server
        self._thread = thread
        self.host, self.port = server.server_address[:2]

    @property
    def endpoint(self) -> str:
        return f"http://{self.host}:{self.port}"

    def shutdown(self):
        self._server.shutdown()
        self._thread.join(timeout=10)
        self._server.server_close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()


def serve_http(model: MockReservoirModel, host: str = "127.0.0.1",
               port: int = 0) -> ServiceHandle:
    """Host the model over HTTP; port 0 picks a free port."""
    handler = type("BoundHandler", (_Handler,), {"model": model})
    try:
        server = ThreadingHTTPServer((host, port), handler)
    except OSError as exc:
        raise ArgumentError(f"cannot bind {host}:{port}: {exc}") from exc
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return ServiceHandle(server, thread)
