import json
from pathlib import Path

import numpy as np
import pytest

from hxrcast.errors import ArgumentError, ConfigurationError
from hxrcast.sdc import (
    AugmentedInput,
    PatchConfig,
    SpatialEncoder,
    TemporalEncoder,
    TemporalTokens,
    cross_attend,
    cross_attend_backward,
    fuse_channels,
    spatial_encode,
    temporal_encode,
    window_patch,
)

from oracles import central_difference, oracle_attention, relative_error

GOLDEN = Path(__file__).parent / "data" / "temporal_zero_golden.json"


class TestWindowPatch:
    def test_400_steps_make_13_patches(self):
        patches, positions = window_patch(np.arange(400.0), PatchConfig())
        assert patches.shape == (13, 32)
        assert positions[0] == -16  # padded by 16 on the left

    def test_exact_fit_single_patch(self):
        series = np.arange(32.0)
        patches, _ = window_patch(series, PatchConfig())
        assert patches.shape == (1, 32)
        assert np.array_equal(patches[0], series)

    def test_single_value_edge_pad(self):
        cfg = PatchConfig(patch_size=4, stride=4)
        patches, _ = window_patch(np.array([5.0]), cfg)
        assert np.array_equal(patches, [[5.0, 5.0, 5.0, 5.0]])

    def test_empty_rejected(self):
        with pytest.raises(ArgumentError):
            window_patch(np.array([]), PatchConfig())

    def test_gapped_stride_rejected(self):
        with pytest.raises(ConfigurationError):
            PatchConfig(patch_size=16, stride=32)

    def test_reconstruction_when_no_padding(self):
        series = np.random.default_rng(0).random(128)
        patches, _ = window_patch(series, PatchConfig())
        assert np.array_equal(patches.ravel(), series)

    def test_overlapping_stride(self):
        cfg = PatchConfig(patch_size=8, stride=4)
        patches, _ = window_patch(np.arange(16.0), cfg)
        assert patches.shape == (4, 8)


class TestTemporalEncoder:
    def test_zero_series_matches_golden(self):
        golden = json.loads(GOLDEN.read_text())
        cfg = PatchConfig(d_tmp=golden["config"]["d_tmp"],
                          patch_size=golden["config"]["patch_size"],
                          stride=golden["config"]["stride"],
                          positional=golden["config"]["positional"])
        enc = TemporalEncoder(cfg, seed=golden["seed"])
        tokens = temporal_encode(np.zeros(golden["series_len"]), enc).tokens
        assert np.array_equal(tokens, np.asarray(golden["tokens"]))

    def test_position_sensitivity(self):
        cfg = PatchConfig(patch_size=4, stride=4, d_tmp=8)
        enc = TemporalEncoder(cfg, seed=5)
        rng = np.random.default_rng(6)
        patches = rng.normal(size=(5, 4))
        swapped = patches.copy()
        swapped[[1, 3]] = swapped[[3, 1]]
        base = enc.encode(patches, np.arange(5)).tokens
        perm = enc.encode(swapped, np.arange(5)).tokens
        # With positional encodings, moving a patch changes its token beyond
        # a pure row swap.
        assert not np.allclose(perm[1], base[3])
        assert not np.allclose(perm[3], base[1])

    def test_doubling_width_doubles_tokens(self):
        for d in (8, 16):
            cfg = PatchConfig(patch_size=4, stride=4, d_tmp=d)
            enc = TemporalEncoder(cfg, seed=1)
            tokens = temporal_encode(np.ones(12), enc).tokens
            assert tokens.shape[1] == d

    def test_deterministic_in_seed(self):
        cfg = PatchConfig(patch_size=8, stride=8, d_tmp=16)
        t1 = temporal_encode(np.arange(24.0), TemporalEncoder(cfg, seed=9)).tokens
        t2 = temporal_encode(np.arange(24.0), TemporalEncoder(cfg, seed=9)).tokens
        assert np.array_equal(t1, t2)

    def test_wrong_patch_width_rejected(self):
        enc = TemporalEncoder(PatchConfig(), seed=0)
        with pytest.raises(ConfigurationError):
            enc.encode(np.zeros((3, 16)), np.arange(3))


class TestCrossAttention:
    def test_single_term_returns_its_value(self):
        rng = np.random.default_rng(0)
        queries = rng.normal(size=(4, 3))
        term = rng.normal(size=(1, 3))
        out = cross_attend(queries, term, term)
        assert np.allclose(out, np.tile(term, (4, 1)), atol=1e-15)

    def test_identical_keys_give_mean_of_values(self):
        rng = np.random.default_rng(1)
        queries = rng.normal(size=(3, 4))
        keys = np.tile(rng.normal(size=(1, 4)), (5, 1))
        values = rng.normal(size=(5, 4))
        out = cross_attend(queries, keys, values)
        assert np.allclose(out, np.tile(values.mean(0), (3, 1)), atol=1e-12)

    def test_hand_case_matches_scalar_oracle(self):
        rng = np.random.default_rng(2)
        q = rng.normal(size=(2, 3))
        k = rng.normal(size=(2, 3))
        v = rng.normal(size=(2, 3))
        assert np.abs(cross_attend(q, k, v) - oracle_attention(q, k, v)).max() < 1e-12

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(3)
        q = rng.normal(size=(6, 5)) * 3
        k = rng.normal(size=(4, 5)) * 3
        logits = q @ k.T / np.sqrt(5)
        logits -= logits.max(axis=1, keepdims=True)
        w = np.exp(logits)
        w /= w.sum(axis=1, keepdims=True)
        assert np.abs(w.sum(axis=1) - 1).max() < 1e-9

    def test_scale_robustness_uniform_keys(self):
        rng = np.random.default_rng(4)
        queries = rng.normal(size=(3, 4))
        keys = np.tile(rng.normal(size=(1, 4)), (6, 1))
        values = rng.normal(size=(6, 4))
        for c in (0.1, 1.0, 17.0):
            out = cross_attend(queries * c, keys * c, values)
            assert np.allclose(out, np.tile(values.mean(0), (3, 1)), atol=1e-12)

    def test_gradient_check(self):
        rng = np.random.default_rng(5)
        q = rng.normal(size=(3, 4))
        k = rng.normal(size=(2, 4))
        v = rng.normal(size=(2, 4))
        w = rng.normal(size=(3, 4))  # random loss weights: loss = sum(w * out)
        d_q, d_k, d_v = cross_attend_backward(q, k, v, w)
        for name, analytic, x in (("q", d_q, q), ("k", d_k, k), ("v", d_v, v)):
            def loss(arr, _name=name):
                qq, kk, vv = q, k, v
                if _name == "q":
                    qq = arr
                elif _name == "k":
                    kk = arr
                else:
                    vv = arr
                return float((w * cross_attend(qq, kk, vv)).sum())
            numeric = central_difference(loss, x.copy())
            assert relative_error(analytic, numeric) < 1e-4

    def test_zero_terms_rejected(self):
        tokens = TemporalTokens(tokens=np.zeros((2, 3)), positions=np.arange(2))
        with pytest.raises(ArgumentError):
            spatial_encode(tokens, np.zeros((0, 3)))


class TestSpatialEncoder:
    def test_projected_attention_shapes(self):
        rng = np.random.default_rng(6)
        tokens = TemporalTokens(tokens=rng.normal(size=(13, 32)),
                                positions=np.arange(13))
        enc = SpatialEncoder(term_dim=64, d_tmp=32, seed=0)
        out = enc.encode(tokens, rng.normal(size=(6, 64)))
        assert out.tokens.shape == (13, 32)


class TestFuse:
    def test_concatenation_widths(self):
        a = TemporalTokens(tokens=np.ones((3, 8)), positions=np.arange(3))
        b = spatial_encode(a, np.ones((2, 8)))
        fused = fuse_channels(a, b)
        assert fused.tokens.shape == (3, 16)

    def test_temporal_half_first(self):
        rng = np.random.default_rng(7)
        a = TemporalTokens(tokens=rng.normal(size=(4, 5)), positions=np.arange(4))
        from hxrcast.sdc import SpatialTokens
        b = SpatialTokens(tokens=np.zeros((4, 5)))
        fused = fuse_channels(a, b)
        assert np.array_equal(fused.tokens[:, :5], a.tokens)
        assert np.array_equal(fused.tokens[:, 5:], np.zeros((4, 5)))

    def test_count_mismatch_rejected(self):
        from hxrcast.sdc import SpatialTokens
        a = TemporalTokens(tokens=np.zeros((13, 4)), positions=np.arange(13))
        b = SpatialTokens(tokens=np.zeros((12, 4)))
        with pytest.raises(ArgumentError):
            fuse_channels(a, b)

    def test_odd_width_rejected(self):
        with pytest.raises(ArgumentError):
            AugmentedInput(tokens=np.zeros((2, 7)))
