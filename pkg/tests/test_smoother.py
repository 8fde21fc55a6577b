from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.special import erf

from dips.data import Dataset, standardize
from dips.errors import DegenerateScoreError
from dips.estimators import EstimatorConfig, fit_components
from dips.glm import BINOMIAL, GAUSSIAN, fit_adaptive_lasso
from dips.simulation import ScenarioConfig, gen_scenario
from dips.smoother import (
    build_dips,
    dips_pi,
    kernel_q4,
    kernel_q4_1d,
    plugin_bandwidth,
    transform_scores,
)

PHI0 = 1.0 / math.sqrt(2.0 * math.pi)


def normal_cdf(z):
    return 0.5 * (1.0 + erf(np.asarray(z) / math.sqrt(2.0)))


class TestKernel:
    def test_origin_value_matches_formula(self):
        # (1.5 * phi(0))^2, cross-checked by quadrature below
        assert kernel_q4(0.0, 0.0) == pytest.approx((1.5 * PHI0) ** 2, abs=1e-12)
        assert kernel_q4(np.array([0.0, 0.0])) == pytest.approx(0.3580987, abs=1e-7)

    def test_zero_at_sqrt3(self):
        for u2 in (-1.3, 0.0, 0.7):
            assert kernel_q4(math.sqrt(3.0), u2) == pytest.approx(0.0, abs=1e-15)

    def test_symmetries(self, rng):
        a, b = rng.standard_normal(2)
        assert kernel_q4(a, b) == pytest.approx(kernel_q4(-a, -b), abs=1e-15)
        assert kernel_q4(a, b) == pytest.approx(kernel_q4(b, a), abs=1e-15)

    def test_moment_conditions_by_quadrature(self):
        # grid [-8, 8]^2, step 0.01
        step = 0.01
        u = np.arange(-8.0, 8.0 + step / 2, step)
        k1 = kernel_q4_1d(u)
        w2 = step * step
        total = np.outer(k1, k1)
        m0 = total.sum() * w2
        ua = u[:, None] * np.ones_like(u)[None, :]
        ub = np.ones_like(u)[:, None] * u[None, :]
        m_a = (ua * total).sum() * w2
        m_ab = (ua * ub * total).sum() * w2
        m_a3 = (ua ** 3 * total).sum() * w2
        m_ab2 = (ua * ub ** 2 * total).sum() * w2
        m_a4 = (ua ** 4 * total).sum() * w2
        assert m0 == pytest.approx(1.0, abs=1e-6)
        for moment in (m_a, m_ab, m_a3, m_ab2):
            assert moment == pytest.approx(0.0, abs=1e-6)
        assert m_a4 == pytest.approx(-3.0, abs=1e-4)


class TestTransform:
    def test_standard_values(self):
        out = transform_scores(np.array([-1.0, 0.0, 1.0]))
        np.testing.assert_allclose(out, normal_cdf([-1.0, 0.0, 1.0]), atol=1e-12)

    def test_monotone_and_in_unit_interval(self, rng):
        raw = rng.standard_normal(200) * 3 + 1
        out = transform_scores(raw)
        assert np.all((out > 0) & (out < 1))
        order = np.argsort(raw)
        assert np.all(np.diff(out[order]) > 0)

    def test_affine_invariance(self, rng):
        raw = rng.standard_normal(100)
        out = transform_scores(raw)
        out2 = transform_scores(3.7 * raw + 11.0)
        np.testing.assert_allclose(out2, out, atol=1e-12)

    def test_zero_variance_raises(self):
        with pytest.raises(DegenerateScoreError):
            transform_scores(np.full(10, 2.5))


class TestPluginBandwidth:
    def test_power_law_values(self):
        assert plugin_bandwidth(10 ** 6, 4, 1.0) == pytest.approx(0.1, abs=1e-12)
        assert plugin_bandwidth(1000, 4, 1.0) == pytest.approx(0.31622776, abs=1e-7)

    def test_linear_in_sigma(self):
        assert plugin_bandwidth(500, 4, 2.0) == pytest.approx(
            2 * plugin_bandwidth(500, 4, 1.0), abs=1e-14)


class TestDipsPi:
    def test_identical_scores_give_arm_share(self):
        scores = np.zeros((6, 2))
        t = np.array([1, 0, 0, 1, 1, 1])
        out = dips_pi(scores, scores, t, 1, h=0.3)
        np.testing.assert_allclose(out, 4 / 6, atol=1e-12)

    def test_two_points_equal_scores(self):
        scores = np.zeros((2, 2))
        out = dips_pi(scores, scores, np.array([1, 0]), 1, h=0.5)
        np.testing.assert_allclose(out, 0.5, atol=1e-14)

    def test_three_point_hand_instance(self):
        h = 0.4
        data = np.array([[0.0, 0.0], [h, 0.0], [0.0, h]])
        t = np.array([1, 0, 1])
        k00 = kernel_q4(0.0, 0.0)
        k01 = kernel_q4(1.0, 0.0)
        expected = (k00 + k01) / (k00 + 2 * k01)
        out = dips_pi(data[:1], data, t, 1, h=h)
        assert out[0] == pytest.approx(expected, abs=1e-12)

    def test_h_to_zero_recovers_own_arm(self, rng):
        n = 40
        scores = np.column_stack([np.linspace(0, 1, n), rng.permutation(n) / n])
        t = rng.integers(0, 2, n)
        out1 = dips_pi(scores, scores, t, 1, h=1e-4)
        np.testing.assert_allclose(out1, t.astype(float), atol=1e-6)

    def test_weighted_sums_respect_multipliers(self):
        scores = np.zeros((4, 2))
        t = np.array([1, 1, 0, 0])
        g = np.array([3.0, 1.0, 1.0, 1.0])
        out = dips_pi(scores, scores, t, 1, h=0.2, g=g)
        np.testing.assert_allclose(out, 4 / 6, atol=1e-12)

    def test_denominator_underflow_names_evaluation_point(self):
        from dips.errors import SmoothingDegeneracyError

        data = np.array([[0.0, 0.0], [1.0, 1.0]])
        with pytest.raises(SmoothingDegeneracyError, match="point 0"):
            dips_pi(np.array([[0.5, 0.5]]), data, np.array([1, 0]), 1, h=1e-3)


def _fits_for(ds, config=EstimatorConfig()):
    return fit_components(ds, config)


class TestBuildDips:
    def test_null_fits_give_arm_share(self, rng):
        n = 60
        x = rng.standard_normal((n, 2))
        t = np.tile([0, 1, 1], n // 3)
        y = rng.standard_normal(n)
        ds = Dataset(y=y, t=t, x=x, names=("a", "b"))
        ps = fit_adaptive_lasso(ds, "treatment", BINOMIAL, np.ones(2), lam=1e9)
        om = fit_adaptive_lasso(ds, "outcome", GAUSSIAN, np.ones(2), lam=1e9)
        _, _, est = build_dips(ds, ps, om)
        np.testing.assert_allclose(est.pi1, t.mean(), atol=1e-12)
        np.testing.assert_allclose(est.pi0, 1 - t.mean(), atol=1e-12)

    def test_one_dimensional_fallback_on_null_ps(self, toy_ds):
        ds, _ = standardize(toy_ds)
        ps = fit_adaptive_lasso(ds, "treatment", BINOMIAL, np.ones(ds.p), lam=1e9)
        om = fit_adaptive_lasso(ds, "outcome", GAUSSIAN, np.ones(ds.p), lam=0.01)
        s0, s1, est = build_dips(ds, ps, om)
        assert s1.live == ("om",)
        assert s1.transformed.shape == (ds.n, 1)
        assert np.all(np.isfinite(est.pi1))

    def test_complementarity_with_shared_slopes(self, toy_ds):
        fits = _fits_for(toy_ds)
        _, _, est = build_dips(fits.ds, fits.ps_refit, fits.om_refit)
        np.testing.assert_allclose(est.pi1 + est.pi0, 1.0, atol=1e-10)

    def test_complementarity_fails_with_arm_specific_slopes(self):
        cfg = ScenarioConfig(scenario="both-correct", n=400, p=10, reps=1, seed=9)
        ds, _ = gen_scenario(cfg, 0)
        # amplify heterogeneity so the per-arm scores genuinely differ
        y = ds.y + np.where(ds.t == 1, 3.0 * ds.x[:, 3], -3.0 * ds.x[:, 4])
        ds = Dataset(y=y, t=ds.t, x=ds.x, names=ds.names)
        config = EstimatorConfig(arm_specific_slopes=True)
        fits = fit_components(ds, config)
        assert fits.om_refit.arm_specific
        _, _, est = build_dips(fits.ds, fits.ps_refit, fits.om_refit)
        assert np.max(np.abs(est.pi1 + est.pi0 - 1.0)) > 1e-6

    def test_bandwidth_continuity(self):
        cfg = ScenarioConfig(scenario="both-correct", n=300, p=10, reps=1, seed=4)
        ds, _ = gen_scenario(cfg, 0)
        fits = _fits_for(ds)
        _, s1, est = build_dips(fits.ds, fits.ps_refit, fits.om_refit)
        h = s1.bandwidth
        _, _, est2 = build_dips(fits.ds, fits.ps_refit, fits.om_refit,
                                h_override=1.0001 * h)
        assert np.max(np.abs(est2.pi1 - est.pi1)) < 0.01

    def test_negative_values_infrequent(self):
        # frozen from a 100-seed oracle run at n=1000, p=15
        fracs = []
        for s in range(100):
            cfg = ScenarioConfig(scenario="both-correct", n=1000, p=15,
                                 reps=1, seed=9000 + s)
            ds, _ = gen_scenario(cfg, 0)
            fits = _fits_for(ds)
            _, _, est = build_dips(fits.ds, fits.ps_refit, fits.om_refit)
            fracs.append(est.negative_count / (2 * ds.n))
        assert np.mean(fracs) < 0.05

    def test_diagnostics_recorded(self, toy_ds):
        fits = _fits_for(toy_ds)
        _, s1, est = build_dips(fits.ds, fits.ps_refit, fits.om_refit)
        assert est.negative_count >= 0
        assert est.min_abs_value >= 0.0
        assert s1.bandwidth > 0
