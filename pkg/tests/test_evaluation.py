import json
import math

import numpy as np
import pytest

from dynrmtl.estimator import fit
from dynrmtl.evaluation import (
    Z_95,
    PredictionRangeError,
    c_index,
    effect_trajectory,
    evaluate_effect,
    predict_rmtl,
    prediction_error,
    real_time_effect,
)
from dynrmtl.simulation import generate_cohort, reference_scenario, true_rmtl
from dynrmtl.stacking import HorizonGrid, TimeBasis, build_stacked
from tests.conftest import FIXTURES, binary_dataset


def profiles():
    with open(FIXTURES / "example_profiles.json", "r", encoding="utf-8") as fh:
        return json.load(fh)["profiles"]


class TestEvaluateEffect:
    def test_er_cumulative_effect(self, published_model):
        # er=positive carries all three time terms: 0.291 - 0.141 l + 0.005 l^2
        est = evaluate_effect(published_model, "er=positive", 4.5)
        assert est.value == pytest.approx(-0.24225, abs=1e-12)
        est = evaluate_effect(published_model, "er=positive", 6.5)
        assert est.value == pytest.approx(-0.41425, abs=1e-12)

    def test_confidence_interval_uses_z95(self, published_model):
        est = evaluate_effect(published_model, "er=positive", 5.0)
        assert est.ci_lower == pytest.approx(est.value - Z_95 * est.se, abs=1e-14)
        assert est.ci_upper == pytest.approx(est.value + Z_95 * est.se, abs=1e-14)
        assert est.se > 0

    def test_intercept_effect(self, published_model):
        est = evaluate_effect(published_model, "(intercept)", 5.0)
        assert est.value == pytest.approx(-0.237 + 0.140 * 5.0, abs=1e-12)

    def test_unknown_covariate(self, published_model):
        with pytest.raises(KeyError, match="unknown covariate"):
            evaluate_effect(published_model, "her2=positive", 5.0)

    def test_range_guard_and_override(self, published_model):
        with pytest.raises(PredictionRangeError, match="outside the fitted range"):
            evaluate_effect(published_model, "er=positive", 1.0)
        with pytest.raises(PredictionRangeError, match="extrapolate=True"):
            evaluate_effect(published_model, "er=positive", 12.0)
        est = evaluate_effect(published_model, "er=positive", 12.0, extrapolate=True)
        assert est.value == pytest.approx(0.291 - 0.141 * 12 + 0.005 * 144, abs=1e-12)


class TestRealTimeEffect:
    def test_er_slope_shrinks_with_follow_up(self, published_model):
        slope, mag = real_time_effect(published_model, "er=positive", 4.5)
        assert slope == pytest.approx(-0.096, abs=1e-12)
        assert mag == pytest.approx(0.096, abs=1e-12)
        slope, mag = real_time_effect(published_model, "er=positive", 6.5)
        assert slope == pytest.approx(-0.076, abs=1e-12)
        assert mag == pytest.approx(0.076, abs=1e-12)

    def test_pr_slope_is_constant(self, published_model):
        # pr=positive has only the linear term, so the slope never moves
        for l in (3.0, 5.0, 9.0):
            slope, mag = real_time_effect(published_model, "pr=positive", l)
            assert slope == pytest.approx(-0.027, abs=1e-12)
            assert mag == pytest.approx(0.027, abs=1e-12)


class TestEffectTrajectory:
    def test_shapes_and_bands(self, published_model):
        hs = np.linspace(2.5, 10.5, 33)
        traj = effect_trajectory(published_model, "er=positive", hs)
        assert traj.covariate == "er=positive"
        for arr in (traj.values, traj.ses, traj.ci_lower, traj.ci_upper, traj.slopes):
            assert arr.shape == hs.shape
        np.testing.assert_allclose(traj.ci_upper - traj.values, Z_95 * traj.ses, atol=1e-12)

    def test_er_values_decrease_over_the_window(self, published_model):
        hs = np.linspace(2.5, 10.5, 17)
        traj = effect_trajectory(published_model, "er=positive", hs)
        assert np.all(np.diff(traj.values) < 0)
        assert traj.values[0] < 0.0

    def test_values_match_pointwise_evaluation(self, published_model):
        hs = [3.0, 7.0, 10.0]
        traj = effect_trajectory(published_model, "chemotherapy=yes", hs)
        for i, l in enumerate(hs):
            est = evaluate_effect(published_model, "chemotherapy=yes", l)
            assert traj.values[i] == pytest.approx(est.value, abs=1e-14)
            assert traj.ses[i] == pytest.approx(est.se, abs=1e-14)
            slope, _ = real_time_effect(published_model, "chemotherapy=yes", l)
            assert traj.slopes[i] == pytest.approx(slope, abs=1e-14)

    def test_json_round_trip_shape(self, published_model):
        traj = effect_trajectory(published_model, "er=positive", [3.0, 5.0])
        doc = traj.to_json_dict()
        assert set(doc) == {"covariate", "horizons", "values", "se", "ci_lower", "ci_upper", "slopes"}
        assert doc["values"] == traj.values.tolist()


class TestPredictRmtl:
    def test_reference_profiles(self, published_model):
        expected = {
            "high risk, untreated": (1.457, 4.192),
            "high risk, BCS + chemo": (1.182, 3.532),
            "low risk, BCS + chemo": (0.469, 1.469),
        }
        for prof in profiles():
            pred = predict_rmtl(published_model, prof, [5.0, 10.0])
            v5, v10 = expected[prof["label"]]
            assert pred.values[0] == pytest.approx(v5, abs=5e-4)
            assert pred.values[1] == pytest.approx(v10, abs=5e-4)

    def test_five_year_uncertainty(self, published_model):
        ses = [0.244, 0.264, 0.197]
        for prof, se in zip(profiles(), ses):
            pred = predict_rmtl(published_model, prof, 5.0)
            assert pred.ses[0] == pytest.approx(se, abs=5e-4)
            assert pred.ci_lower[0] == pytest.approx(pred.values[0] - Z_95 * pred.ses[0], abs=1e-12)

    def test_scalar_horizon_accepted(self, published_model):
        pred = predict_rmtl(published_model, profiles()[0], 5.0)
        assert pred.values.shape == (1,)

    def test_missing_covariate_rejected(self, published_model):
        prof = dict(profiles()[0])
        del prof["er"]
        with pytest.raises(Exception, match="er"):
            predict_rmtl(published_model, prof, 5.0)

    def test_range_guard(self, published_model):
        with pytest.raises(PredictionRangeError):
            predict_rmtl(published_model, profiles()[0], [5.0, 11.0])

    def test_json_dict_keys(self, published_model):
        doc = predict_rmtl(published_model, profiles()[0], [5.0]).to_json_dict()
        assert set(doc) == {"horizons", "values", "se", "ci_lower", "ci_upper"}


class TestIntervalScaling:
    def test_ci_width_shrinks_like_root_n(self):
        widths = []
        for n in (500, 2000, 8000):
            cohort = generate_cohort(reference_scenario(n=n), seed=404)
            grid = HorizonGrid(points=np.linspace(0.25, 1.5, 6), tau=1.5)
            fitted = fit(build_stacked(cohort, grid, TimeBasis.full(2)))
            est = evaluate_effect(fitted, "z1", 1.0)
            widths.append(est.ci_upper - est.ci_lower)
        assert 1.6 <= widths[0] / widths[1] <= 2.4
        assert 1.6 <= widths[1] / widths[2] <= 2.4


class TestCIndex:
    def test_constant_predictions_score_half(self):
        ds = binary_dataset([1.0, 2.0, 3.0, 4.0], [1, 1, 2, 1], [0, 1, 0, 1])
        assert c_index(np.zeros(4), ds, 3.5) == pytest.approx(0.5, abs=1e-15)

    def test_perfect_ordering_scores_one(self):
        rng = np.random.default_rng(3)
        times = rng.exponential(1.0, 60)
        ds = binary_dataset(times, np.ones(60, dtype=int), np.zeros(60))
        assert c_index(-times, ds, float(np.median(times))) == 1.0

    def test_monotone_transform_invariance(self):
        cohort = generate_cohort(reference_scenario(n=300), seed=9)
        rng = np.random.default_rng(10)
        preds = rng.random(300)
        a = c_index(preds, cohort, 1.0)
        b = c_index(np.exp(3.0 * preds) + 1.0, cohort, 1.0)
        assert a == pytest.approx(b, abs=1e-14)

    def test_no_anchor_error(self):
        ds = binary_dataset([1.0, 2.0], [2, 2], [0.0, 1.0])
        with pytest.raises(ValueError, match="no comparable pairs"):
            c_index(np.zeros(2), ds, 1.5)

    def test_truth_scored_discrimination(self):
        # predictions from the exact generator law must beat coin flipping
        scn = reference_scenario(n=2000)
        cohort = generate_cohort(scn, seed=2023)
        l = 1.0
        truth = {s: true_rmtl(*scn.stratum_params(s), l) for s in ((0, 0), (0, 1), (1, 0), (1, 1))}
        z = cohort.covariates.astype(int)
        preds = np.array([truth[(a, b)] for a, b in z])
        assert c_index(preds, cohort, l) > 0.55

    def test_model_and_vector_routes_agree(self):
        train = generate_cohort(reference_scenario(n=800), seed=30)
        test = generate_cohort(reference_scenario(n=400), seed=31)
        grid = HorizonGrid(points=np.linspace(0.25, 1.5, 6), tau=1.5)
        fitted = fit(build_stacked(train, grid, TimeBasis.full(2)))
        l = 1.0
        x = fitted.basis.expand_rows(test.covariates, l)
        manual = x @ fitted.coefficients
        assert c_index(fitted, test, l) == pytest.approx(c_index(manual, test, l), abs=1e-14)
        assert 0.0 < c_index(fitted, test, l) < 1.0

    def test_schema_mismatch_rejected(self):
        train = generate_cohort(reference_scenario(n=200), seed=40)
        grid = HorizonGrid(points=np.linspace(0.25, 1.5, 6), tau=1.5)
        fitted = fit(build_stacked(train, grid, TimeBasis.full(2)))
        other = binary_dataset([1.0, 2.0], [1, 2], [0.0, 1.0])
        with pytest.raises(ValueError, match="schema"):
            c_index(fitted, other, 1.0)

    def test_prediction_vector_length_checked(self):
        ds = binary_dataset([1.0, 2.0], [1, 2], [0.0, 1.0])
        with pytest.raises(ValueError, match="length"):
            c_index([1.0, 2.0, 3.0], ds, 1.5)


class TestPredictionError:
    def test_saturated_fit_gives_group_mad(self):
        rng = np.random.default_rng(8)
        n = 100
        z = np.repeat([0.0, 1.0], n // 2)
        ds = binary_dataset(rng.exponential(1.0, n), rng.integers(1, 3, n), z)
        l = 1.5
        grid = HorizonGrid(points=np.array([l]), tau=l)
        stacked = build_stacked(ds, grid, TimeBasis.constant_only(1))
        fitted = fit(stacked)
        y = stacked.life_lost
        mads = []
        for g in (0.0, 1.0):
            yy = y[z == g]
            mads.append(np.abs(yy - yy.mean()).mean())
        expected = 0.5 * (mads[0] + mads[1])
        assert prediction_error(fitted, ds, l) == pytest.approx(expected, abs=1e-12)

    def test_zero_loss_data_scores_zero(self):
        ds = binary_dataset([2.0, 3.0, 4.0], [2, 2, 2], [0, 1, 0])
        assert prediction_error(np.zeros(3), ds, 1.5) == 0.0

    def test_shifted_predictions_obey_triangle_bound(self):
        cohort = generate_cohort(reference_scenario(n=400), seed=50)
        preds = np.full(400, 0.2)
        base = prediction_error(preds, cohort, 1.0)
        shifted = prediction_error(preds + 0.5, cohort, 1.0)
        assert shifted <= base + 0.5 + 1e-12

    def test_all_weights_zero_error(self):
        ds = binary_dataset([1.0, 2.0, 3.0], [0, 0, 0], [0, 1, 0])
        with pytest.raises(ValueError, match="weights are zero"):
            prediction_error(np.zeros(3), ds, 5.0)

    def test_accepts_plain_lists(self):
        ds = binary_dataset([0.5, 2.0], [1, 2], [0.0, 1.0])
        err = prediction_error([0.5, 0.0], ds, 1.5)
        assert err == pytest.approx(0.5 * (abs(1.0 - 0.5) + 0.0), abs=1e-12)
