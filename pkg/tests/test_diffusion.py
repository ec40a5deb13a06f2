import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldabs.diffusion import (
    ChannelModel,
    DiffusionError,
    GaussianPriorDenoiser,
    OracleDenoiser,
    build_schedule,
    conditional_refine,
    denoise_from,
    effective_alpha_bar,
    embed_received,
    forward_diffuse,
    match_step,
    posterior_coefficients,
    posterior_mean,
    posterior_variance,
    quality_proxy,
    reconstruction_quality,
    schedule_from_betas,
    transmit,
)

SCHED = build_schedule()


class TestSchedule:
    def test_single_step(self):
        s = build_schedule(1, 0.1, 0.1)
        assert s.alpha_bar[1] == pytest.approx(0.9)
        assert s.alpha_bar[0] == 1.0

    def test_two_steps(self):
        s = build_schedule(2, 0.1, 0.2)
        assert s.beta[1:].tolist() == pytest.approx([0.1, 0.2])
        assert s.alpha_bar[2] == pytest.approx(0.72)

    def test_default_is_nearly_pure_noise(self):
        assert SCHED.T == 1000
        assert SCHED.alpha_bar[-1] < 1e-4
        assert np.all(np.diff(SCHED.alpha_bar) < 0)

    @pytest.mark.parametrize("args", [(0, 1e-4, 0.02), (10, 0.0, 0.1), (10, 0.2, 0.1), (10, 0.1, 1.0)])
    def test_rejects_bad_arguments(self, args):
        with pytest.raises(DiffusionError):
            build_schedule(*args)

    def test_from_betas(self):
        s = schedule_from_betas([0.5, 0.5])
        assert s.alpha_bar.tolist() == [1.0, 0.5, 0.25]


class TestForward:
    def test_t0_identity(self):
        z0 = np.array([1.5, -2.0])
        assert np.array_equal(forward_diffuse(z0, 0, [7.0, 7.0], SCHED), z0)

    def test_quarter_retention(self):
        s = schedule_from_betas([0.75])
        assert forward_diffuse([2.0], 1, [1.0], s)[0] == pytest.approx(1.8660, abs=1e-4)

    def test_zero_noise_scales(self):
        z0 = np.array([3.0, -4.0])
        out = forward_diffuse(z0, 300, np.zeros(2), SCHED)
        assert np.linalg.norm(out) == pytest.approx(5 * math.sqrt(SCHED.alpha_bar[300]), rel=1e-12)

    def test_dim_mismatch(self):
        with pytest.raises(DiffusionError):
            forward_diffuse(np.zeros(2), 1, np.zeros(3), SCHED)

    def test_step_out_of_range(self):
        with pytest.raises(DiffusionError):
            forward_diffuse(np.zeros(2), 1001, np.zeros(2), SCHED)


class TestChannel:
    def test_noiseless(self):
        z0 = np.array([1.0, -2.0])
        assert np.array_equal(transmit(z0, ChannelModel(math.inf, gain=0.5), 0), 0.5 * z0)

    def test_attenuation(self):
        assert transmit([2.0], ChannelModel(math.inf, gain=0.5), 3)[0] == 1.0

    def test_zero_db_variance(self):
        y = transmit(np.zeros(100_000), ChannelModel(0.0, gain=2.0), 11) / 2.0
        assert np.var(y) == pytest.approx(1.0, rel=0.02)

    def test_deterministic_per_seed(self):
        ch = ChannelModel(5.0)
        assert np.array_equal(transmit(np.ones(64), ch, 9), transmit(np.ones(64), ch, 9))
        assert not np.array_equal(transmit(np.ones(64), ch, 9), transmit(np.ones(64), ch, 10))


def brute_force_step(snr_db, sched):
    sigma2 = 0.0 if snr_db == math.inf else 10 ** (-snr_db / 10)
    for t in range(1, sched.T + 1):
        ab = sched.alpha_bar[t]
        if (1 - ab) / ab >= sigma2:
            return t
    return sched.T


class TestMatchStep:
    def test_noiseless_is_one(self):
        assert match_step(math.inf, SCHED) == 1

    def test_very_noisy_is_T(self):
        assert match_step(-60.0, SCHED) == SCHED.T
        assert match_step(-math.inf, SCHED) == SCHED.T

    @pytest.mark.parametrize("snr", [10.0, -5.0, 0.0, 3.3, 20.0, 40.0])
    def test_against_scan(self, snr):
        assert match_step(snr, SCHED) == brute_force_step(snr, SCHED)

    @given(st.floats(-30, 60), st.floats(0, 20))
    def test_monotone(self, snr, extra):
        assert match_step(snr + extra, SCHED) <= match_step(snr, SCHED)


class TestEmbed:
    def test_no_makeup_when_channel_matches(self):
        s = schedule_from_betas([0.5])
        # sigma^2 = 1 equals (1 - 0.5) / 0.5 at step 1
        ch = ChannelModel(0.0)
        y = np.array([1.0, 2.0])
        assert np.allclose(embed_received(y, ch, 1, s, 0), math.sqrt(0.5) * y)

    def test_noiseless_r1_marginal_variance(self):
        z0 = np.random.default_rng(1).standard_normal(100_000) * math.sqrt(2.0)
        ch = ChannelModel(math.inf)
        z1 = embed_received(transmit(z0, ch, 0), ch, 1, SCHED, 5)
        ab = SCHED.alpha_bar[1]
        assert np.var(z1) == pytest.approx(ab * 2.0 + (1 - ab), rel=0.02)

    @pytest.mark.parametrize("snr", [20.0, 5.0, -3.0])
    def test_unit_variance_at_matched_step(self, snr):
        z0 = np.random.default_rng(2).standard_normal(100_000)
        ch = ChannelModel(snr, gain=0.7)
        r = match_step(snr, SCHED)
        z_r = embed_received(transmit(z0, ch, 3), ch, r, SCHED, 4)
        assert np.var(z_r) == pytest.approx(1.0, rel=0.02)


class TestPosterior:
    def test_t1_returns_prediction(self):
        c0, ct = posterior_coefficients(1, SCHED)
        assert c0 == pytest.approx(1.0, abs=1e-12)
        assert ct == 0.0

    def test_coefficient_sum(self):
        t = 437
        out = posterior_mean(np.ones(3), np.ones(3), t, SCHED)
        ab, abp, b = SCHED.alpha_bar[t], SCHED.alpha_bar[t - 1], SCHED.beta[t]
        expected = (math.sqrt(abp) * b + math.sqrt(1 - b) * (1 - abp)) / (1 - ab)
        assert np.allclose(out, expected, rtol=1e-12)

    def test_two_step_scalar(self):
        s = build_schedule(2, 0.1, 0.2)
        # sqrt(0.9)*0.2/0.28 + sqrt(0.8)*0.1/0.28
        assert posterior_mean([1.0], [1.0], 2, s)[0] == pytest.approx(0.9970692096789084, rel=1e-12)

    def test_variance_zero_at_t1(self):
        assert posterior_variance(1, SCHED) == 0.0

    def test_range(self):
        with pytest.raises(DiffusionError):
            posterior_mean([0.0], [0.0], 0, SCHED)


class TestDenoise:
    @pytest.mark.parametrize("r", [1, 17, 250, 1000])
    def test_oracle_round_trip(self, r):
        rng = np.random.default_rng(r)
        z0 = rng.standard_normal(512)
        z_r = forward_diffuse(z0, r, rng.standard_normal(512), SCHED)
        out = denoise_from(z_r, r, OracleDenoiser(z0), SCHED)
        assert np.max(np.abs(out - z0)) < 1e-9

    def test_r1_is_single_update(self):
        z = np.array([0.3, -0.2])
        den = GaussianPriorDenoiser(SCHED)
        assert np.array_equal(denoise_from(z, 1, den, SCHED), posterior_mean(z, den(z, 1), 1, SCHED))

    def test_gaussian_prior_collapses_to_mmse(self):
        # the deterministic reverse chain under this denoiser equals sqrt(abar_r) z_r
        z = np.random.default_rng(0).standard_normal(64)
        r = 300
        out = denoise_from(z, r, GaussianPriorDenoiser(SCHED), SCHED)
        assert np.allclose(out, math.sqrt(SCHED.alpha_bar[r]) * z, atol=1e-10)

    def test_channel_mmse(self):
        n = 10_000
        rng = np.random.default_rng(42)
        z0 = rng.standard_normal(n)
        ch = ChannelModel(0.0)  # sigma^2 = 1
        r = match_step(0.0, SCHED)
        z_r = embed_received(transmit(z0, ch, 1), ch, r, SCHED, 2)
        out = denoise_from(z_r, r, GaussianPriorDenoiser(SCHED), SCHED)
        assert np.mean((out - z0) ** 2) == pytest.approx(0.5, rel=0.05)

    @pytest.mark.parametrize("t", [50, 200, 600])
    def test_prediction_mse(self, t):
        rng = np.random.default_rng(t)
        z0 = rng.standard_normal(10_000)
        z_t = forward_diffuse(z0, t, rng.standard_normal(10_000), SCHED)
        mse = np.mean((GaussianPriorDenoiser(SCHED)(z_t, t) - z0) ** 2)
        assert mse == pytest.approx(1 - SCHED.alpha_bar[t], rel=0.05)

    def test_stochastic_reproducible(self):
        z = np.ones(32)
        den = GaussianPriorDenoiser(SCHED)
        a = denoise_from(z, 100, den, SCHED, stochastic=True, rng_seed=8)
        b = denoise_from(z, 100, den, SCHED, stochastic=True, rng_seed=8)
        c = denoise_from(z, 100, den, SCHED, stochastic=True, rng_seed=9)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)


class TestRefine:
    def test_identity_with_zero_offset(self):
        ref = np.array([0.4, -1.1, 2.0])
        out = conditional_refine(ref, np.zeros(3), 50, OracleDenoiser(ref, conditional=True), SCHED)
        assert np.max(np.abs(out - ref)) < 1e-9

    def test_oracle_pull(self):
        ref = np.zeros(2)
        out = conditional_refine(ref, [1.0, 0.0], 50, OracleDenoiser(ref, conditional=True), SCHED)
        assert np.max(np.abs(out - [1.0, 0.0])) < 1e-9

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 1000), st.integers(0, 2**32 - 1))
    def test_oracle_target_any_step(self, s, seed):
        rng = np.random.default_rng(seed)
        ref, delta = rng.standard_normal(16), rng.standard_normal(16)
        out = conditional_refine(ref, delta, s, OracleDenoiser(ref, conditional=True), SCHED, rng_seed=seed)
        assert np.max(np.abs(out - (ref + delta))) < 1e-9

    def test_prior_denoiser_ignores_condition(self):
        ref = np.random.default_rng(0).standard_normal(64)
        den = GaussianPriorDenoiser(SCHED)
        a = conditional_refine(ref, np.zeros(64), 80, den, SCHED, stochastic=True, rng_seed=4)
        b = conditional_refine(ref, np.full(64, 9.0), 80, den, SCHED, stochastic=True, rng_seed=4)
        assert np.array_equal(a, b)

    def test_dim_mismatch(self):
        with pytest.raises(DiffusionError):
            conditional_refine(np.zeros(3), np.zeros(2), 5, OracleDenoiser(np.zeros(3)), SCHED)


class TestQualityProxy:
    def test_bounds(self):
        assert quality_proxy(1.0) == 1.0
        assert quality_proxy(0.0, kappa=0.5) == 0.5
        assert quality_proxy(0.0, kappa=3.0) == 0.0

    def test_exact_csi_uses_matched_step(self):
        r, q = reconstruction_quality(15.0, 15.0, SCHED)
        assert r == match_step(15.0, SCHED)
        assert q == pytest.approx(quality_proxy(effective_alpha_bar(r, 15.0, SCHED)))

    @given(st.floats(-10, 40), st.floats(0, 3))
    def test_underestimated_snr_never_helps(self, snr, err):
        _, exact = reconstruction_quality(snr, snr, SCHED)
        _, off = reconstruction_quality(snr - err, snr, SCHED)
        assert off <= exact

    @given(st.floats(-10, 40), st.floats(-3, 3))
    def test_no_estimate_beats_channel_limit(self, snr, err):
        # exact CSI rounds up to a schedule step; overestimation can only reclaim that slack
        _, off = reconstruction_quality(snr + err, snr, SCHED)
        cap = quality_proxy(1.0 / (1.0 + 10 ** (-snr / 10)))
        assert off <= cap + 1e-12

    def test_higher_snr_higher_quality(self):
        qs = [reconstruction_quality(s, s, SCHED)[1] for s in (0.0, 10.0, 20.0, 30.0)]
        assert qs == sorted(qs)
