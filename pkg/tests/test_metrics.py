import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hxrcast import MetricReport, cae, evaluate_set, sum_abs_loss, top_fraction_mae
from hxrcast.errors import ArgumentError

from oracles import oracle_cae, oracle_evaluate, oracle_sum_abs, oracle_top_fraction

finite = st.floats(min_value=-10, max_value=10, allow_nan=False, allow_infinity=False)
series = st.lists(finite, min_size=1, max_size=50)


class TestSumAbsLoss:
    def test_identity_is_zero(self):
        assert sum_abs_loss([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0

    def test_hand_case(self):
        assert sum_abs_loss([1.0, 2.0], [0.0, 4.0]) == 3.0

    def test_single_step(self):
        assert sum_abs_loss([0.0], [-1.0]) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(ArgumentError):
            sum_abs_loss([1.0], [1.0, 2.0])

    @given(series)
    def test_symmetric(self, xs):
        ys = list(reversed(xs))
        assert sum_abs_loss(xs, ys) == sum_abs_loss(ys, xs)

    def test_bitwise_matches_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = int(rng.integers(1, 80))
            p = rng.normal(size=n)
            g = rng.normal(size=n)
            assert sum_abs_loss(p, g) == oracle_sum_abs(p, g)


class TestCae:
    def test_identical_inputs_zero(self):
        x = [0.001, 0.5, 0.02, 1.0]
        assert cae(x, x) == 0.0

    def test_threshold_both_sides(self):
        # [0.02, 0.5] vs [0.0, 0.4] with floor 0.03 -> [0, 0.5] vs [0, 0.4]
        assert cae([0.02, 0.5], [0.0, 0.4], 0.03) == pytest.approx(0.1, abs=1e-15)

    def test_all_below_floor_nullified(self):
        assert cae([0.029, 0.029], [0.01, 0.02]) == 0.0

    def test_floor_zero_equals_sum_abs(self):
        rng = np.random.default_rng(1)
        p = rng.random(40)
        g = rng.random(40)
        assert cae(p, g, floor=0.0) == sum_abs_loss(p, g)

    def test_negative_floor_rejected(self):
        with pytest.raises(ArgumentError):
            cae([1.0], [1.0], floor=-0.1)

    @given(series)
    def test_symmetric(self, xs):
        ys = xs[::-1]
        assert cae(xs, ys) == cae(ys, xs)

    def test_raising_floor_keeps_nullified_steps_nullified(self):
        # Any step below the old floor in both sequences contributes 0 at
        # every higher floor too (checked per-step via the oracle).
        rng = np.random.default_rng(2)
        for _ in range(50):
            p = rng.random(30) * 0.1
            g = rng.random(30) * 0.1
            lo, hi = 0.03, 0.06
            for i in range(30):
                if p[i] < lo and g[i] < lo:
                    assert oracle_cae([p[i]], [g[i]], hi) == 0.0

    def test_matches_oracle_bitwise(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            n = int(rng.integers(1, 60))
            p = rng.random(n)
            g = rng.random(n)
            assert cae(p, g) == oracle_cae(p, g)


class TestTopFractionMae:
    def test_zero_when_equal(self):
        xs = [np.arange(5.0)]
        assert top_fraction_mae(xs, xs, 0.05) == 0.0

    def test_top_decile_of_ten_errors(self):
        preds = [np.zeros(10)]
        gts = [np.arange(0.1, 1.05, 0.1)]
        assert top_fraction_mae(preds, gts, 0.1) == pytest.approx(1.0, abs=1e-12)

    def test_frac_one_is_plain_mae(self):
        rng = np.random.default_rng(4)
        p = rng.random(25)
        g = rng.random(25)
        assert top_fraction_mae([p], [g], 1.0) == pytest.approx(
            np.abs(p - g).mean(), abs=1e-12)

    def test_invalid_frac(self):
        with pytest.raises(ArgumentError):
            top_fraction_mae([[1.0]], [[1.0]], 0.0)

    def test_shot_order_invariance(self):
        rng = np.random.default_rng(5)
        preds = [rng.random(20) for _ in range(4)]
        gts = [rng.random(20) for _ in range(4)]
        a = top_fraction_mae(preds, gts, 0.05)
        b = top_fraction_mae(preds[::-1], gts[::-1], 0.05)
        assert a == pytest.approx(b, abs=1e-15)

    @settings(max_examples=30)
    @given(st.integers(1, 100))
    def test_non_increasing_in_frac(self, salt):
        rng = np.random.default_rng(salt)
        preds = [rng.random(30)]
        gts = [rng.random(30)]
        fracs = [0.01, 0.05, 0.2, 0.5, 1.0]
        vals = [top_fraction_mae(preds, gts, f) for f in fracs]
        assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_matches_oracle_bitwise(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            preds = [rng.random(int(rng.integers(1, 40))) for _ in range(3)]
            gts = [rng.random(len(p)) for p in preds]
            for frac in (0.01, 0.05, 0.3):
                assert top_fraction_mae(preds, gts, frac) == oracle_top_fraction(
                    preds, gts, frac)


class TestEvaluateSet:
    def test_identical_pairs_all_zero(self):
        xs = [np.arange(10.0), np.ones(10)]
        report = evaluate_set(xs, xs)
        assert (report.cae, report.top1_mae, report.top5_mae) == (0.0, 0.0, 0.0)
        assert report.n_shots == 2
        assert report.pooled_steps == 20

    def test_single_pair_equals_cae(self):
        rng = np.random.default_rng(7)
        p, g = rng.random(30), rng.random(30)
        assert evaluate_set([p], [g]).cae == cae(p, g)

    def test_matches_brute_force_reference(self):
        rng = np.random.default_rng(8)
        preds = [rng.random(40) for _ in range(10)]
        gts = [rng.random(40) for _ in range(10)]
        report = evaluate_set(preds, gts)
        expected = oracle_evaluate(preds, gts)
        assert report.cae == expected["cae"]
        assert report.top1_mae == expected["top1_mae"]
        assert report.top5_mae == expected["top5_mae"]
        assert report.n_shots == expected["n_shots"]
        assert report.pooled_steps == expected["pooled_steps"]

    def test_report_serialization_round_trip(self):
        report = MetricReport(1.5, 0.2, 0.1, 3, 1200)
        import json
        assert MetricReport.from_dict(json.loads(report.dumps())) == report
