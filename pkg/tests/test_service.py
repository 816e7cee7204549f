import socket
import threading
import urllib.request

import numpy as np
import pytest

from hxrcast import MockConfig, MockReservoirModel, ServiceClient, serve_http
from hxrcast.errors import (
    ArgumentError,
    CapacityError,
    CompatibilityError,
    DeadlineError,
    ParseError,
    TransportError,
)
from hxrcast.service import protocol
from hxrcast.service.mock import dispatch
from hxrcast.service.protocol import ReservoirOutput, ReservoirRequest, ServerInfo


class TestInfo:
    def test_mock_defaults(self, mock_client):
        info = mock_client.fetch_info()
        assert info.model_id == "mock-esn"
        assert info.hidden_dim == 64
        assert info.vocab_size == 256

    def test_version_mismatch_rejected(self):
        model = MockReservoirModel(MockConfig(protocol_version=99))
        with pytest.raises(CompatibilityError):
            ServiceClient(model).fetch_info()

    def test_malformed_body_is_parse_error(self):
        with pytest.raises(ParseError):
            protocol.decode_info("{nope")


class TestReservoir:
    def test_repeat_requests_identical(self, mock_client):
        rng = np.random.default_rng(0)
        vectors = rng.normal(size=(13, 64))
        a = mock_client.run_reservoir("prompt text", vectors, 50)
        b = mock_client.run_reservoir("prompt text", vectors, 50)
        assert np.array_equal(a.states, b.states)
        assert np.array_equal(a.entropies, b.entropies)

    def test_last_k_50(self, mock_client):
        vectors = np.zeros((13, 64))
        out = mock_client.run_reservoir("p" * 100, vectors, 50)
        assert out.states.shape == (50, 64)
        assert out.entropies.shape == (50,)

    def test_entropy_bounds(self, mock_client):
        rng = np.random.default_rng(1)
        out = mock_client.run_reservoir("x" * 64, rng.normal(size=(20, 64)), 84)
        assert (out.entropies >= 0).all()
        assert (out.entropies <= np.log(256)).all()

    def test_capped_at_total_positions(self, mock_client):
        # 40 prompt bytes + 13 vectors = 53 positions < k=60
        out = mock_client.run_reservoir("a" * 40, np.zeros((13, 64)), 60)
        assert out.states.shape == (53, 64)

    def test_wrong_width_rejected(self, mock_client):
        with pytest.raises(ArgumentError):
            mock_client.run_reservoir("p", np.zeros((3, 17)), 5)

    def test_no_positions_rejected(self, mock_client):
        with pytest.raises(ArgumentError):
            mock_client.run_reservoir("", np.zeros((0, 64)), 5)

    def test_capacity_error(self):
        model = MockReservoirModel(MockConfig(max_positions=32))
        client = ServiceClient(model)
        with pytest.raises(CapacityError):
            client.run_reservoir("x" * 100, np.zeros((0, 64)), 5)

    def test_mock_restart_determinism(self):
        vectors = np.linspace(0, 1, 64 * 4).reshape(4, 64)
        outs = []
        for _ in range(2):
            model = MockReservoirModel(MockConfig())
            outs.append(model.reservoir(
                ReservoirRequest("same prompt", vectors, 10)))
        assert np.array_equal(outs[0].states, outs[1].states)
        assert np.array_equal(outs[0].entropies, outs[1].entropies)

    def test_prefix_forgetting_with_shared_suffix(self):
        # Echo-state fading memory: different 32-step prefixes, identical
        # 512-step suffix -> final states agree to < 1e-3.
        model = MockReservoirModel(MockConfig(spectral_radius=0.9))
        rng = np.random.default_rng(7)
        suffix = rng.normal(size=(512, 64))
        finals = []
        for salt in (1, 2):
            prefix = np.random.default_rng(salt).normal(size=(32, 64))
            req = ReservoirRequest("", np.concatenate([prefix, suffix]), 1)
            finals.append(model.reservoir(req).states[-1])
        assert np.linalg.norm(finals[0] - finals[1]) < 1e-3


class TestEmbedTerms:
    def test_three_terms(self, mock_client):
        vectors = mock_client.embed_terms(["pulse", "peak", "trailing"])
        assert vectors.shape == (3, 64)

    def test_same_term_same_vector(self, mock_client):
        a = mock_client.embed_terms(["picket"])
        b = mock_client.embed_terms(["picket"])
        assert np.array_equal(a, b)

    def test_empty_term_rejected(self, mock_client):
        with pytest.raises(ArgumentError):
            mock_client.embed_terms([""])

    def test_empty_list_rejected(self, mock_client):
        with pytest.raises(ArgumentError):
            mock_client.embed_terms([])


class TestProtocolRoundTrip:
    def test_info_round_trip(self):
        info = ServerInfo("m", 8, 16, 100, 1)
        assert protocol.decode_info(protocol.encode_info(info)) == info

    def test_reservoir_messages_fuzzed(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            n = int(rng.integers(1, 6))
            h = int(rng.integers(1, 5))
            req = ReservoirRequest(
                prompt_text="".join(chr(int(c)) for c in rng.integers(32, 1000, 10)),
                input_vectors=rng.normal(size=(n, h)) * 10.0 ** float(rng.integers(-8, 8)),
                return_last_k=int(rng.integers(1, 10)),
            )
            version, decoded = protocol.decode_reservoir_request(
                protocol.encode_reservoir_request(req))
            assert version == protocol.PROTOCOL_VERSION
            assert decoded.prompt_text == req.prompt_text
            assert np.array_equal(decoded.input_vectors, req.input_vectors)
            out = ReservoirOutput(states=rng.normal(size=(n, h)),
                                  entropies=np.abs(rng.normal(size=n)))
            decoded_out = protocol.decode_reservoir_output(
                protocol.encode_reservoir_output(out))
            assert np.array_equal(decoded_out.states, out.states)
            assert np.array_equal(decoded_out.entropies, out.entropies)

    def test_terms_round_trip(self):
        version, terms = protocol.decode_terms_request(
            protocol.encode_terms_request(["a", "b"]))
        assert terms == ["a", "b"]

    def test_version_mismatch_in_post_body(self, mock_model):
        body = protocol.encode_terms_request(["x"], protocol_version=99)
        status, payload = dispatch(mock_model, "POST", "/v1/embed_terms", body)
        assert status == 426
        kind, _ = protocol.decode_error(payload)
        assert kind == "version"


class TestHttpTransport:
    def test_http_matches_in_process(self, mock_model):
        rng = np.random.default_rng(4)
        vectors = rng.normal(size=(5, 64))
        direct = ServiceClient(mock_model).run_reservoir("abc", vectors, 8)
        with serve_http(mock_model) as handle:
            client = ServiceClient(handle.endpoint)
            info = client.fetch_info()
            assert info.model_id == "mock-esn"
            via_http = client.run_reservoir("abc", vectors, 8)
        assert np.array_equal(direct.states, via_http.states)
        assert np.array_equal(direct.entropies, via_http.entropies)

    def test_http_error_statuses(self, mock_model):
        with serve_http(mock_model) as handle:
            client = ServiceClient(handle.endpoint)
            with pytest.raises(ArgumentError):
                client.embed_terms([""])

    def test_request_id_echoed(self, mock_model):
        with serve_http(mock_model) as handle:
            req = urllib.request.Request(
                handle.endpoint + "/v1/info", headers={"X-Request-Id": "42"})
            with urllib.request.urlopen(req, timeout=5) as resp:
                assert resp.headers["X-Request-Id"] == "42"

    def test_shutdown_drains(self, mock_model):
        handle = serve_http(mock_model)
        ServiceClient(handle.endpoint).fetch_info()
        handle.shutdown()
        with pytest.raises(TransportError):
            ServiceClient(handle.endpoint, retries=0).fetch_info()

    def test_transport_error_counts_attempts(self):
        client = ServiceClient("http://127.0.0.1:9", deadline_s=0.5, retries=2)
        with pytest.raises(TransportError, match="3 attempts"):
            client.fetch_info()

    def test_deadline_is_distinct_error(self):
        # A socket that accepts but never answers trips the deadline.
        listener = socket.socket()
        listener.bind(("127.0.0.1", 0))
        listener.listen(1)
        port = listener.getsockname()[1]
        accepted = []

        def accept_only():
            try:
                conn, _ = listener.accept()
                accepted.append(conn)
            except OSError:
                pass

        thread = threading.Thread(target=accept_only, daemon=True)
        thread.start()
        try:
            client = ServiceClient(f"http://127.0.0.1:{port}", deadline_s=0.3)
            with pytest.raises(DeadlineError):
                client.fetch_info()
        finally:
            for conn in accepted:
                conn.close()
            listener.close()

    def test_unsupported_endpoint_scheme(self):
        with pytest.raises(ArgumentError):
            ServiceClient("ftp://nope")
