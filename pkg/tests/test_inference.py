from __future__ import annotations

import numpy as np
import pytest

from dips.errors import EstimationError, InferenceError
from dips.estimators import EstimatorConfig, estimate_all
from dips.inference import (
    PerturbationConfig,
    draw_weights,
    perturb_once,
    perturbation_summary,
    resample_rng,
    summarize,
)


class TestDrawWeights:
    def test_law_of_large_numbers(self):
        g = draw_weights(10 ** 6, resample_rng(0, 0))
        assert 0.995 < g.mean() < 1.005
        assert abs(g.var() - 1.0) < 0.01

    def test_nonnegative(self):
        g = draw_weights(10 ** 4, resample_rng(1, 2))
        assert np.all(g >= 0)

    def test_deterministic_streams(self):
        a = draw_weights(100, resample_rng(7, 3))
        b = draw_weights(100, resample_rng(7, 3))
        c = draw_weights(100, resample_rng(7, 4))
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_poisson_law(self):
        g = draw_weights(10 ** 5, resample_rng(0, 0), law="poisson-1")
        assert np.all(g >= 0)
        assert abs(g.mean() - 1.0) < 0.02
        assert abs(g.var() - 1.0) < 0.02


class TestSummarize:
    def test_hand_example(self):
        s = summarize(3.0, [1.0, 2.0, 3.0, 4.0, 5.0])
        assert s.se_mad == pytest.approx(1.4826, abs=1e-12)
        assert s.ci_percentile == (pytest.approx(1.1, abs=1e-12),
                                   pytest.approx(4.9, abs=1e-12))
        assert s.se_sd == pytest.approx(np.sqrt(2.5), abs=1e-12)

    def test_constant_resamples_flagged(self):
        s = summarize(1.0, [2.0, 2.0, 2.0])
        assert s.se_mad == 0.0
        assert s.p_wald is None

    def test_scaled_mad_consistency_on_normal_cloud(self):
        r = np.random.default_rng(0)
        s = summarize(0.0, r.standard_normal(10 ** 5))
        assert 0.99 < s.se_mad < 1.01
        assert s.p_wald == pytest.approx(1.0, abs=1e-6)

    def test_needs_two_resamples(self):
        with pytest.raises(InferenceError):
            summarize(0.0, [1.0])


@pytest.fixture(scope="module")
def setup():
    from tests.conftest import toy_dataset

    ds = toy_dataset(n=150, p=3, seed=8)
    config = EstimatorConfig()
    estimates, fits = estimate_all(ds, config, methods=("dips",))
    warm = (np.concatenate([fits.ps_pen.intercepts, fits.ps_pen.coefficients]),
            np.concatenate([fits.om_pen.intercepts, fits.om_pen.coefficients]))
    return ds, config, estimates["dips"], fits, warm


class TestPerturbOnce:

    def test_identity_weights_reproduce_estimate_bitwise(self, setup):
        ds, config, est, fits, warm = setup
        d = perturb_once(ds, np.ones(ds.n), config,
                         fixed_lambdas=fits.lambdas, warm=warm)
        assert d == est.delta

    def test_constant_weights_reproduce_estimate_bitwise(self, setup):
        ds, config, est, fits, warm = setup
        d = perturb_once(ds, np.full(ds.n, 2.0), config,
                         fixed_lambdas=fits.lambdas, warm=warm)
        assert d == est.delta

    def test_degenerate_arm_mass_fails(self, setup):
        ds, config, _, fits, warm = setup
        g = np.where(ds.t == 1, 0.0, 1.0)
        with pytest.raises(EstimationError, match="degenerate"):
            perturb_once(ds, g, config, fixed_lambdas=fits.lambdas, warm=warm)

    def test_comparators_supported(self, setup):
        ds, config, _, _, _ = setup
        g = draw_weights(ds.n, resample_rng(5, 0))
        for method in ("ipw-alas", "dr-alas"):
            val = perturb_once(ds, g, config, method=method)
            assert np.isfinite(val)


class TestPerturbationSummary:
    def test_full_summary_reproducible(self):
        from tests.conftest import toy_dataset

        ds = toy_dataset(n=120, p=3, seed=3)
        config = EstimatorConfig()
        pconf = PerturbationConfig(B=24, seed=11)
        est1, sum1 = perturbation_summary(ds, config, pconf)
        est2, sum2 = perturbation_summary(ds, config, pconf)
        assert np.array_equal(sum1.resamples, sum2.resamples)
        assert est1.se == est2.se and est1.ci == est2.ci

    def test_threads_do_not_change_results(self):
        from tests.conftest import toy_dataset

        ds = toy_dataset(n=120, p=3, seed=3)
        config = EstimatorConfig()
        serial = perturbation_summary(ds, config, PerturbationConfig(B=16, seed=5))
        parallel = perturbation_summary(
            ds, config, PerturbationConfig(B=16, seed=5, threads=2))
        assert np.array_equal(serial[1].resamples, parallel[1].resamples)

    def test_estimate_gains_inference_fields(self):
        from tests.conftest import toy_dataset

        ds = toy_dataset(n=120, p=3, seed=4)
        est, summary = perturbation_summary(
            ds, EstimatorConfig(), PerturbationConfig(B=30, seed=2))
        assert est.se is not None and est.se > 0
        lo, hi = est.ci
        assert lo <= hi
        assert 0.0 <= est.p_value <= 1.0
        assert est.diagnostics["resample_failures"] == summary.failures == 0

    def test_excess_failures_abort(self, monkeypatch):
        from tests.conftest import toy_dataset

        import dips.inference as inf

        ds = toy_dataset(n=120, p=3, seed=6)

        def failing(args):
            b = args[-1]
            if b % 2 == 0:
                return b, None
            return b, 0.5

        monkeypatch.setattr(inf, "_one_resample", failing)
        with pytest.raises(InferenceError, match="resamples failed"):
            perturbation_summary(ds, EstimatorConfig(),
                                 PerturbationConfig(B=20, seed=1))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PerturbationConfig(B=1)
        with pytest.raises(ValueError):
            PerturbationConfig(weight_law="cauchy")
