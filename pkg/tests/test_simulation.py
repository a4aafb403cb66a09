import io
import math

import numpy as np
import pytest
from scipy import integrate

from dynrmtl.simulation import (
    STRATA,
    SimulationError,
    SimulationScenario,
    calibrate_censoring,
    cif1,
    cif2,
    generate_cohort,
    load_scenario,
    p_event1,
    reference_scenario,
    run_monte_carlo,
    sample_event,
    shr,
    true_coefficients,
    true_rmtl,
)


class TestScenario:
    def test_reference_parameters(self):
        scn = reference_scenario()
        assert scn.gamma == (2.88, 1.95, 2.29, 1.55)
        assert scn.rho == (-1.7, -1.4, -2.9, -2.8)
        assert scn.exposure_prob == (0.5, 0.5)
        assert scn.censor_rate == 0.1
        assert scn.n == 500

    def test_strata_order_and_lookup(self):
        assert STRATA == ((0, 0), (0, 1), (1, 0), (1, 1))
        scn = reference_scenario()
        assert scn.stratum_params((1, 0)) == (2.29, -2.9)
        assert scn.stratum_params((1, 1)) == (1.55, -2.8)

    def test_validation(self):
        ok = dict(
            gamma=(1, 1, 1, 1), rho=(-1, -1, -1, -1), exposure_prob=(0.5, 0.5),
            censor_rate=0.1, n=10,
        )
        with pytest.raises(ValueError, match="4"):
            SimulationScenario(**{**ok, "gamma": (1, 1, 1)})
        with pytest.raises(ValueError, match="positive"):
            SimulationScenario(**{**ok, "gamma": (1, 0, 1, 1)})
        with pytest.raises(ValueError, match="negative"):
            SimulationScenario(**{**ok, "rho": (-1, -1, 0.5, -1)})
        with pytest.raises(ValueError, match="probabilities"):
            SimulationScenario(**{**ok, "exposure_prob": (0.5, 1.5)})
        with pytest.raises(ValueError, match="censor_rate"):
            SimulationScenario(**{**ok, "censor_rate": 1.0})
        with pytest.raises(ValueError, match="n"):
            SimulationScenario(**{**ok, "n": 0})

    def test_from_maps_uses_stratum_keys(self):
        scn = SimulationScenario.from_maps(
            gamma={"00": 2.88, "01": 1.95, "10": 2.29, "11": 1.55},
            rho={"00": -1.7, "01": -1.4, "10": -2.9, "11": -2.8},
            exposure_prob=(0.5, 0.5),
            censor_rate=0.1,
            n=500,
        )
        assert scn == reference_scenario()

    def test_from_maps_rejects_missing_key(self):
        with pytest.raises((KeyError, ValueError)):
            SimulationScenario.from_maps(
                gamma={"00": 1.0}, rho={"00": -1.0},
                exposure_prob=(0.5, 0.5), censor_rate=0.0, n=5,
            )

    def test_json_round_trip_and_stream_load(self):
        scn = reference_scenario(n=77, censor_rate=0.25, exposure=0.3)
        back = SimulationScenario.from_json_dict(scn.to_json_dict())
        assert back == scn
        import json

        stream = io.StringIO(json.dumps(scn.to_json_dict()))
        assert load_scenario(stream) == scn


class TestGompertzLaw:
    # every closed form below is cross-checked against a scipy quadrature
    # of the defining hazard integral, keeping the two routes independent

    def test_cif1_at_zero_and_limit(self):
        assert cif1(0.0, 2.88, -1.7) == 0.0
        assert cif1(1e9, 2.88, -1.7) == pytest.approx(p_event1(2.88, -1.7), abs=1e-12)

    def test_cif1_against_hazard_quadrature(self):
        for g, r in [(2.88, -1.7), (1.95, -1.4), (2.29, -2.9), (1.55, -2.8)]:
            for t in (0.25, 0.75, 1.5):
                cum, _ = integrate.quad(lambda s: g * math.exp(r * s), 0.0, t)
                assert cif1(t, g, r) == pytest.approx(1.0 - math.exp(-cum), abs=1e-10)

    def test_total_mass_sums_to_one(self):
        scn = reference_scenario()
        for s in STRATA:
            g, r = scn.stratum_params(s)
            assert cif1(50.0, g, r) + cif2(50.0, g, r) == pytest.approx(1.0, abs=1e-9)

    def test_p_event1_reference_value(self):
        assert p_event1(2.88, -1.7) == pytest.approx(1.0 - math.exp(2.88 / -1.7), abs=1e-15)
        assert p_event1(2.88, -1.7) == pytest.approx(0.81624, abs=5e-6)

    def test_sample_event_cause2_inverse(self):
        t, eps = sample_event(0.99, 0.5, 2.88, -1.7)
        assert eps == 2
        assert t == pytest.approx(math.log(2.0), abs=1e-12)

    def test_sample_event_cause1_reference_point(self):
        t, eps = sample_event(0.0, 0.5, 2.88, -1.7)
        assert eps == 1
        assert t == pytest.approx(0.217907, abs=5e-7)
        assert cif1(t, 2.88, -1.7) == pytest.approx(0.5 * p_event1(2.88, -1.7), abs=1e-12)

    def test_sample_event_inverse_property(self):
        rng = np.random.default_rng(31)
        u_t = rng.random(200)
        g, r = 1.95, -1.4
        t, eps = sample_event(np.zeros(200), u_t, g, r)
        assert np.all(eps == 1)
        np.testing.assert_allclose(cif1(t, g, r), u_t * p_event1(g, r), atol=1e-9)

    def test_shr_reference_values(self):
        scn = reference_scenario()
        assert shr(scn, 1, 0.0) == pytest.approx(2.29 / 2.88, abs=1e-12)
        assert shr(scn, 2, 0.0) == pytest.approx(1.95 / 2.88, abs=1e-12)

    def test_shr2_crosses_one(self):
        scn = reference_scenario()
        t_cross = math.log(2.88 / 1.95) / 0.3
        assert t_cross == pytest.approx(1.29987, abs=1e-5)
        assert shr(scn, 2, t_cross) == pytest.approx(1.0, abs=1e-9)
        assert shr(scn, 2, 0.5) < 1.0 < shr(scn, 2, 2.0)

    def test_shr_rejects_bad_covariate(self):
        with pytest.raises(ValueError):
            shr(reference_scenario(), 3, 1.0)


class TestTrueValues:
    def test_true_rmtl_against_scipy(self):
        for g, r in [(2.88, -1.7), (1.55, -2.8)]:
            for l in (0.75, 1.0, 1.5):
                ref, _ = integrate.quad(lambda t: cif1(t, g, r), 0.0, l)
                assert true_rmtl(g, r, l) == pytest.approx(ref, abs=1e-6)

    def test_true_rmtl_rejects_nonpositive_horizon(self):
        with pytest.raises(ValueError):
            true_rmtl(2.88, -1.7, 0.0)

    def test_true_coefficients_are_stratum_contrasts(self):
        scn = reference_scenario()
        l = 1.0
        mu = {s: true_rmtl(*scn.stratum_params(s), l) for s in STRATA}
        b0, b1, b2 = true_coefficients(scn, l)
        assert b0 == pytest.approx(mu[(0, 0)], abs=1e-12)
        assert b1 == pytest.approx(mu[(1, 1)] - mu[(0, 1)], abs=1e-12)
        assert b2 == pytest.approx(mu[(0, 1)] - mu[(0, 0)], abs=1e-12)

    def test_true_coefficients_vanish_at_the_origin(self):
        vals = true_coefficients(reference_scenario(), 1e-6)
        assert all(abs(v) < 1e-5 for v in vals)

    def test_effect_magnitudes_grow_with_horizon(self):
        scn = reference_scenario()
        grid = np.linspace(0.1, 1.5, 15)
        table = np.array([true_coefficients(scn, float(l)) for l in grid])
        assert np.all(np.diff(table[:, 0]) > 0)
        assert np.all(np.diff(table[:, 1]) < 1e-12)
        assert np.all(np.diff(table[:, 2]) < 1e-12)
        assert np.all(table[:, 1] < 0) and np.all(table[:, 2] < 0)


class TestCensoringCalibration:
    def test_zero_rate_disables_censoring(self):
        assert calibrate_censoring(reference_scenario(censor_rate=0.0)) == math.inf

    def test_high_rate_rejected(self):
        with pytest.raises(SimulationError, match="0.9"):
            calibrate_censoring(reference_scenario(censor_rate=0.95))

    @pytest.mark.parametrize("rate,lo,hi", [(0.1, 0.09, 0.11), (0.25, 0.24, 0.26)])
    def test_realized_censoring_matches_target(self, rate, lo, hi):
        scn = reference_scenario(n=100_000, censor_rate=rate)
        cohort = generate_cohort(scn, seed=7)
        frac = float(np.mean(cohort.events == 0))
        assert lo <= frac <= hi

    def test_repeated_calls_hit_the_cache(self):
        a = calibrate_censoring(reference_scenario())
        b = calibrate_censoring(reference_scenario(n=999))
        assert a == b


class TestGenerateCohort:
    def test_deterministic_given_seed(self):
        scn = reference_scenario(n=200)
        a = generate_cohort(scn, seed=11)
        b = generate_cohort(scn, seed=11)
        np.testing.assert_array_equal(a.times, b.times)
        np.testing.assert_array_equal(a.events, b.events)
        np.testing.assert_array_equal(a.covariates, b.covariates)
        c = generate_cohort(scn, seed=12)
        assert not np.array_equal(a.times, c.times)

    def test_zero_exposure_pins_the_stratum(self):
        scn = reference_scenario(n=300, censor_rate=0.0)
        scn = SimulationScenario(
            gamma=scn.gamma, rho=scn.rho, exposure_prob=(0.0, 0.0),
            censor_rate=0.0, n=300,
        )
        cohort = generate_cohort(scn, seed=3)
        assert np.all(cohort.covariates == 0.0)
        assert np.all(cohort.events > 0)

    def test_schema_and_shapes(self):
        cohort = generate_cohort(reference_scenario(n=50), seed=1)
        assert cohort.n == 50
        assert cohort.schema.design_names == ("z1", "z2")
        assert cohort.covariates.shape == (50, 2)
        assert set(np.unique(cohort.covariates)) <= {0.0, 1.0}

    def test_uncensored_stratum_event_mix(self):
        # empirical cause-1 share in the baseline stratum tracks the law
        scn = reference_scenario(n=40_000, censor_rate=0.0)
        cohort = generate_cohort(scn, seed=77)
        base = (cohort.covariates[:, 0] == 0) & (cohort.covariates[:, 1] == 0)
        share = float(np.mean(cohort.events[base] == 1))
        assert share == pytest.approx(p_event1(2.88, -1.7), abs=0.02)


class TestRunMonteCarlo:
    def test_needs_two_replications(self):
        with pytest.raises(ValueError, match="2 replications"):
            run_monte_carlo(reference_scenario(n=100), replications=1)

    def test_inject_truth_self_test(self):
        table = run_monte_carlo(
            reference_scenario(n=50),
            replications=3,
            eval_points=(0.75, 1.0),
            grid_points=4,
            inject_truth=True,
        )
        assert table.coefficients == ("beta0", "beta1", "beta2")
        np.testing.assert_allclose(table.mean_bias, 0.0, atol=1e-14)
        np.testing.assert_allclose(table.rmse, 0.0, atol=1e-14)
        assert np.all(np.isnan(table.rel_se))
        assert np.all(np.isnan(table.coverage))
        assert table.failures == 0

    def test_byte_identical_across_runs_and_workers(self):
        scn = reference_scenario(n=150)
        kw = dict(replications=5, eval_points=(0.75, 1.0), grid_points=5)
        outs = []
        for workers in (1, 1, 3):
            buf = io.StringIO()
            run_monte_carlo(scn, n_workers=workers, **kw).write_csv(buf)
            outs.append(buf.getvalue())
        assert outs[0] == outs[1] == outs[2]

    def test_small_benchmark_slice_behaves(self):
        table = run_monte_carlo(
            reference_scenario(n=400),
            replications=25,
            eval_points=(1.0,),
            grid_points=10,
        )
        assert table.failures == 0
        assert abs(table.rel_bias[0, 0]) < 0.1
        assert 0.8 <= table.coverage[0, 0] <= 1.0
        assert 0.5 <= table.rel_se[0, 0] <= 1.5

    def test_hopeless_scenario_raises(self):
        scn = reference_scenario(n=2)
        with pytest.raises(SimulationError, match="4/4 replications failed"):
            run_monte_carlo(scn, replications=4, eval_points=(1.0,), grid_points=5)

    def test_csv_format(self):
        table = run_monte_carlo(
            reference_scenario(n=50),
            replications=2,
            eval_points=(0.75,),
            grid_points=3,
            inject_truth=True,
        )
        buf = io.StringIO()
        table.write_csv(buf)
        lines = buf.getvalue().strip().splitlines()
        assert lines[0] == "coefficient,l,true,bias_x100,rel_bias,rmse,rel_se,coverage"
        assert len(lines) == 1 + 3
        first = lines[1].split(",")
        assert first[0] == "beta0" and first[1] == "0.75"
        # undefined dispersion columns stay empty rather than printing nan
        assert first[6] == "" and first[7] == ""
