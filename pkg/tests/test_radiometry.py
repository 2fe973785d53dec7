import numpy as np
import pytest

import hdrfuse as hf
from fixtures import identity_T, translate_T

from hdrfuse.radiometry import (
    ConfigurationError,
    NoiseCalibration,
    estimate_radiance,
    estimate_variance,
    frame_to_samples,
    saturation_mask,
)


def simple_config(**kw):
    defaults = dict(
        sensor_id=0,
        exposure_time=0.01,
        gain=0.25,
        exposure_scaling=1.0,
        transform=identity_T(),
        saturation_level=4095,
        bit_depth=12,
        pattern=hf.BayerPattern.RGGB,
    )
    defaults.update(kw)
    return hf.SensorConfig(**defaults)


def uniform_cal(w=4, h=4, bias=32.0, var=6.5, a=1.0):
    return NoiseCalibration.uniform(w, h, bias=bias, readout_variance=var, nonuniformity=a)


class TestEstimateRadiance:
    def test_direct_evaluation(self):
        # y=100, b=32, g=0.25, t=0.01, a=1, n=1 -> 68/0.0025 = 27200 e/s
        cfg = simple_config()
        cal = uniform_cal()
        assert estimate_radiance(100, 0, cfg, cal) == pytest.approx(27200.0, rel=1e-12)

    def test_black_level_gives_zero(self):
        cfg = simple_config()
        cal = uniform_cal()
        assert estimate_radiance(32, 0, cfg, cal) == 0.0

    def test_doubling_scaling_halves_estimate(self):
        cal = uniform_cal()
        f1 = estimate_radiance(100, 0, simple_config(exposure_scaling=0.5), cal)
        f2 = estimate_radiance(100, 0, simple_config(exposure_scaling=1.0), cal)
        assert f1 == pytest.approx(2 * f2, rel=1e-12)

    def test_negative_values_preserved(self):
        cfg = simple_config()
        cal = uniform_cal()
        assert estimate_radiance(20, 0, cfg, cal) < 0

    def test_vectorized(self):
        cfg = simple_config()
        cal = uniform_cal()
        out = estimate_radiance(np.array([100.0, 32.0]), np.array([0, 1]), cfg, cal)
        np.testing.assert_allclose(out, [27200.0, 0.0])


class TestEstimateVariance:
    def test_direct_evaluation(self):
        # (0.0625*0.01*27200 + 6.5) / (0.0625*0.0001) = 3.76e6 (e/s)^2
        cfg = simple_config()
        cal = uniform_cal()
        assert estimate_variance(27200.0, 0, cfg, cal) == pytest.approx(3.76e6, rel=1e-12)

    def test_zero_signal_readout_floor(self):
        cfg = simple_config()
        cal = uniform_cal()
        g, t = 0.25, 0.01
        expected = 6.5 / (g * t) ** 2
        assert estimate_variance(0.0, 0, cfg, cal) == pytest.approx(expected, rel=1e-12)

    def test_pure_shot_noise_reduction(self):
        # Var[r]=0, f>0 -> f / (t a n)
        cfg = simple_config()
        cal = uniform_cal(var=0.0)
        f = 27200.0
        assert estimate_variance(f, 0, cfg, cal) == pytest.approx(f / 0.01, rel=1e-12)

    def test_negative_estimate_clamps_to_floor(self):
        cfg = simple_config()
        cal = uniform_cal()
        assert estimate_variance(-500.0, 0, cfg, cal) == estimate_variance(0.0, 0, cfg, cal)

    def test_monotone_in_radiance(self):
        cfg = simple_config()
        cal = uniform_cal()
        f = np.linspace(0, 1e6, 50)
        v = estimate_variance(f, np.zeros(50, int), cfg, cal)
        assert (np.diff(v) >= 0).all()


def test_exposure_consistency_across_settings():
    # noise-free conversion of the same radiance under different (t, n, g)
    f_true = 54321.0
    results = []
    for t, n, g in [(0.01, 1.0, 0.25), (0.02, 0.5, 0.3), (0.004, 1.0, 1.1)]:
        cfg = simple_config(exposure_time=t, exposure_scaling=n, gain=g)
        cal = uniform_cal(bias=10.0)
        y = g * t * n * f_true + 10.0  # analytic, unquantized
        results.append(float(estimate_radiance(y, 0, cfg, cal)))
    assert np.ptp(results) <= 1e-6 * f_true


class TestSaturationMask:
    def test_threshold(self):
        cfg = simple_config()
        img = hf.CFAImage(
            data=np.array([[4095, 4094], [0, 4095]], np.uint16),
            bit_depth=12,
            pattern=hf.BayerPattern.RGGB,
        )
        mask = saturation_mask(img, cfg)
        np.testing.assert_array_equal(mask, [[True, False], [False, True]])

    def test_all_zero_image(self):
        cfg = simple_config()
        img = hf.CFAImage(np.zeros((3, 3), np.uint16), 12, hf.BayerPattern.RGGB)
        assert not saturation_mask(img, cfg).any()


class TestFrameToSamples:
    def make_frame(self, w=16, h=12, value=1000):
        return hf.CFAImage(np.full((h, w), value, np.uint16), 12, hf.BayerPattern.RGGB)

    def test_identity_transform_positions(self):
        cfg = simple_config()
        cal = uniform_cal(16, 12)
        samples = frame_to_samples(self.make_frame(), cfg, cal)
        k = 7 * 16 + 10  # pixel (x=10, y=7)
        assert samples[k].position == (10.0, 7.0)

    def test_translation_positions(self):
        cfg = simple_config(transform=translate_T(0.4, 0.45))
        cal = uniform_cal(16, 12)
        samples = frame_to_samples(self.make_frame(), cfg, cal)
        k = 7 * 16 + 10
        assert samples[k].position == (pytest.approx(10.4), pytest.approx(7.45))

    def test_fully_saturated_frame_empty(self):
        cfg = simple_config()
        cal = uniform_cal(16, 12)
        samples = frame_to_samples(self.make_frame(value=4095), cfg, cal)
        assert len(samples) == 0

    def test_saturated_pixels_never_sampled(self):
        cfg = simple_config()
        cal = uniform_cal(16, 12)
        data = np.full((12, 16), 100, np.uint16)
        data[3, 5] = 4095
        img = hf.CFAImage(data, 12, hf.BayerPattern.RGGB)
        samples = frame_to_samples(img, cfg, cal)
        assert len(samples) == 16 * 12 - 1
        positions = samples.positions
        assert not ((positions[:, 0] == 5) & (positions[:, 1] == 3)).any()

    def test_defective_pixels_excluded(self):
        cfg = simple_config(defective=np.array([0, 17]))
        cal = uniform_cal(16, 12)
        samples = frame_to_samples(self.make_frame(), cfg, cal)
        assert len(samples) == 16 * 12 - 2

    def test_channels_follow_pattern(self):
        cfg = simple_config()
        cal = uniform_cal(16, 12)
        samples = frame_to_samples(self.make_frame(), cfg, cal)
        assert samples[0].channel == hf.ColorChannel.R
        assert samples[1].channel == hf.ColorChannel.G
        assert samples[17].channel == hf.ColorChannel.B

    def test_sigma_positive_even_noise_free(self):
        cfg = simple_config()
        cal = uniform_cal(16, 12, bias=32.0, var=0.0)
        samples = frame_to_samples(self.make_frame(value=32), cfg, cal)
        assert (samples.sigmas > 0).all()

    def test_dimension_mismatch(self):
        cfg = simple_config()
        cal = uniform_cal(8, 8)
        with pytest.raises(hf.validation.ShapeMismatchError):
            frame_to_samples(self.make_frame(), cfg, cal)


def test_monte_carlo_mean_and_variance_agree():
    cfg = simple_config(gain=0.23, exposure_time=0.01)
    noise = hf.SensorNoiseTruth(bias_dv=32.0, readout_var_dv2=6.5)
    cal = noise.as_calibration(1, 1, cfg.gain)
    f_true = 2000.0 / (0.23 * 0.01)  # mid-tone
    rng = hf.sensor_rng(99, 0)
    draws = hf.expose(np.full(10000, f_true), cfg, noise, rng)
    assert int(draws.max()) < cfg.saturation_level
    f_hat = estimate_radiance(draws.astype(float), np.zeros(len(draws), int), cfg, cal)
    pred_var = float(estimate_variance(f_true, 0, cfg, cal))
    se = np.sqrt(pred_var / len(draws))
    assert abs(f_hat.mean() - f_true) < 3 * se
    assert abs(f_hat.var(ddof=1) / pred_var - 1) < 0.10


def test_invalid_configs_rejected():
    with pytest.raises((ConfigurationError, ValueError)):
        simple_config(exposure_time=0.0)
    with pytest.raises((ConfigurationError, ValueError)):
        simple_config(exposure_scaling=1.5)
    with pytest.raises((ConfigurationError, ValueError)):
        simple_config(transform=np.array([[1.0, 0, 0], [2.0, 0, 0]]))
    with pytest.raises((ConfigurationError, ValueError)):
        simple_config(saturation_level=5000)


def test_calibration_invariants_enforced():
    with pytest.raises(ValueError):
        NoiseCalibration.uniform(2, 2, readout_variance=-1.0)
    with pytest.raises(ValueError):
        NoiseCalibration.uniform(2, 2, nonuniformity=0.0)
