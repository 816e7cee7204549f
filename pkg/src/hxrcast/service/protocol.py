"""Wire protocol for the hidden-state service.

HTTP/1.1 with UTF-8 JSON bodies; floats at 17 significant digits. Endpoints:

    GET  /v1/info         -> ServerInfo object
    POST /v1/reservoir    -> {"states": [[..]], "entropies": [..]}
    POST /v1/embed_terms  -> {"vectors": [[..]]}

POST bodies carry "protocol_version"; a mismatch is refused with 426.
Errors return {"error": {"kind": .., "message": ..}} with status 400
(argument), 413 (capacity), 426 (version), or 5xx (server fault).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import jsontext
from ..errors import ArgumentError, ParseError

PROTOCOL_VERSION = 1

INFO_PATH = "/v1/info"
RESERVOIR_PATH = "/v1/reservoir"
EMBED_TERMS_PATH = "/v1/embed_terms"

STATUS_FOR_KIND = {"argument": 400, "capacity": 413, "version": 426, "server": 500}


@dataclass(frozen=True)
class ServerInfo:
    model_id: str
    hidden_dim: int
    vocab_size: int
    max_positions: int
    protocol_version: int

    def __post_init__(self):
        if self.hidden_dim < 1:
            raise ArgumentError("hidden_dim must be >= 1")
        if self.vocab_size < 2:
            raise ArgumentError("vocab_size must be >= 2")


@dataclass(frozen=True)
class ReservoirRequest:
    """Prompt text plus pre-projected input vectors in the server's width."""

    prompt_text: str
    input_vectors: np.ndarray  # (n, hidden_dim)
    return_last_k: int

    def __post_init__(self):
        vectors = np.asarray(self.input_vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise ArgumentError(f"input_vectors must be 2-D, got shape {vectors.shape}")
        if not np.isfinite(vectors).all():
            raise ArgumentError("input_vectors contain non-finite values")
        object.__setattr__(self, "input_vectors", vectors)
        if self.return_last_k < 1:
            raise ArgumentError("return_last_k must be positive")


@dataclass(frozen=True)
class ReservoirOutput:
    """Last-k hidden states (first-to-last position order) and entropies."""

    states: np.ndarray     # (k', hidden_dim)
    entropies: np.ndarray  # (k',) in nats

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.float64)
        entropies = np.asarray(self.entropies, dtype=np.float64)
        if states.ndim != 2 or entropies.ndim != 1 or len(states) != len(entropies):
            raise ArgumentError("states and entropies must align")
        if (entropies < 0).any():
            raise ArgumentError("entropies must be non-negative")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "entropies", entropies)


def _matrix(rows, field: str) -> np.ndarray:
    if not isinstance(rows, list) or any(not isinstance(r, list) for r in rows):
        raise ParseError(f"field {field!r} must be an array of arrays")
    try:
        arr = np.asarray(rows, dtype=np.float64)
    except ValueError as exc:
        raise ParseError(f"field {field!r} is ragged or non-numeric") from exc
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, 0)
    if arr.ndim != 2:
        raise ParseError(f"field {field!r} must be 2-D")
    return arr


def _require(body: dict, field: str, kind: type):
    if field not in body:
        raise ParseError(f"missing field {field!r}")
    value = body[field]
    if kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ParseError(f"field {field!r} must be a number")
        return float(value)
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise ParseError(f"field {field!r} must be {kind.__name__}")
    return value


# --- info -------------------------------------------------------------

def encode_info(info: ServerInfo) -> str:
    return jsontext.dumps({
        "model_id": info.model_id,
        "hidden_dim": info.hidden_dim,
        "vocab_size": info.vocab_size,
        "max_positions": info.max_positions,
        "protocol_version": info.protocol_version,
    })


def decode_info(text: str) -> ServerInfo:
    body = jsontext.loads(text, where="info response")
    if not isinstance(body, dict):
        raise ParseError("info response is not an object")
    return ServerInfo(
        model_id=_require(body, "model_id", str),
        hidden_dim=_require(body, "hidden_dim", int),
        vocab_size=_require(body, "vocab_size", int),
        max_positions=_require(body, "max_positions", int),
        protocol_version=_require(body, "protocol_version", int),
    )


# --- reservoir --------------------------------------------------------

def encode_reservoir_request(req: ReservoirRequest,
                             protocol_version: int = PROTOCOL_VERSION) -> str:
    return jsontext.dumps({
        "protocol_version": protocol_version,
        "prompt_text": req.prompt_text,
        "input_vectors": [[float(v) for v in row] for row in req.input_vectors],
        "return_last_k": req.return_last_k,
    })


def decode_reservoir_request(text: str) -> tuple[int, ReservoirRequest]:
    body = jsontext.loads(text, where="reservoir request")
    if not isinstance(body, dict):
        raise ParseError("reservoir request is not an object")
    version = _require(body, "protocol_version", int)
    req = ReservoirRequest(
        prompt_text=_require(body, "prompt_text", str),
        input_vectors=_matrix(_require(body, "input_vectors", list), "input_vectors"),
        return_last_k=_require(body, "return_last_k", int),
    )
    return version, req


def encode_reservoir_output(out: ReservoirOutput) -> str:
    return jsontext.dumps({
        "states": [[float(v) for v in row] for row in out.states],
        "entropies": [float(v) for v in out.entropies],
    })


def decode_reservoir_output(text: str) -> ReservoirOutput:
    body = jsontext.loads(text, where="reservoir response")
    if not isinstance(body, dict):
        raise ParseError("reservoir response is not an object")
    states = _matrix(_require(body, "states", list), "states")
    entropies = _require(body, "entropies", list)
    return ReservoirOutput(states=states, entropies=np.asarray(entropies, dtype=np.float64))


# --- embed_terms ------------------------------------------------------

def encode_terms_request(terms: list[str],
                         protocol_version: int = PROTOCOL_VERSION) -> str:
    return jsontext.dumps({"protocol_version": protocol_version, "terms": list(terms)})


def decode_terms_request(text: str) -> tuple[int, list[str]]:
    body = jsontext.loads(text, where="embed_terms request")
    if not isinstance(body, dict):
        raise ParseError("embed_terms request is not an object")
    version = _require(body, "protocol_version", int)
    terms = _require(body, "terms", list)
    if any(not isinstance(t, str) for t in terms):
        raise ParseError("field 'terms' must be an array of strings")
    return version, terms


def encode_terms_response(vectors: np.ndarray) -> str:
    return jsontext.dumps({"vectors": [[float(v) for v in row] for row in vectors]})


def decode_terms_response(text: str) -> np.ndarray:
    body = jsontext.loads(text, where="embed_terms response")
    if not isinstance(body, dict):
        raise ParseError("embed_terms response is not an object")
    return _matrix(_require(body, "vectors", list), "vectors")


# --- errors -----------------------------------------------------------

def encode_error(kind: str, message: str) -> str:
    return jsontext.dumps({"error": {"kind": kind, "message": message}})


def decode_error(text: str) -> tuple[str, str]:
    try:
        body = jsontext.loads(text)
    except ParseError:
        return "server", text[:200]
    if isinstance(body, dict) and isinstance(body.get("error"), dict):
        err = body["error"]
        return str(err.get("kind", "server")), str(err.get("message", ""))
    return "server", text[:200]
