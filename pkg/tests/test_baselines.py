import numpy as np
import pytest

import hdrfuse as hf
from fixtures import constant_scene, make_config, rotate_T, translate_T

from hdrfuse.baselines import (
    AlignmentError,
    debayer_bilinear,
    debayer_bilinear_mosaic,
    fuse_debayer_first,
    fuse_debayer_last,
)
from hdrfuse.simulate import RigSpec, SensorNoiseTruth, simulate_rig


def cfa(data, pattern=hf.BayerPattern.RGGB, bits=12):
    return hf.CFAImage(np.asarray(data, np.uint16), bits, pattern)


class TestDebayer:
    def test_constant_reproduction(self):
        rgb = debayer_bilinear(cfa(np.full((6, 6), 777)))
        np.testing.assert_allclose(rgb, 777.0)

    def test_corner_green_stencil(self):
        # RGGB: (0,0) is R; its G estimate averages G(1,0) and G(0,1)
        data = np.zeros((4, 4), np.uint16)
        data[0, 1] = 100  # G at (x=1, y=0)
        data[1, 0] = 300  # G at (x=0, y=1)
        rgb = debayer_bilinear(cfa(data))
        assert rgb[0, 0, 1] == pytest.approx(200.0)

    def test_interior_cross_stencil(self):
        data = np.zeros((6, 6), np.uint16)
        # G neighbors of the R site at (2, 2)
        data[2, 1] = 10
        data[2, 3] = 20
        data[1, 2] = 30
        data[3, 2] = 40
        rgb = debayer_bilinear(cfa(data))
        assert rgb[2, 2, 1] == pytest.approx(25.0)

    def test_linear_ramp_exact_interior(self):
        xs = np.arange(12)[None, :].repeat(12, 0).astype(np.uint16)
        ramp = (xs * 100).astype(np.uint16)
        rgb = debayer_bilinear(cfa(ramp))
        interior = rgb[2:-2, 2:-2, :]
        expected = np.repeat((xs * 100.0)[2:-2, 2:-2, None], 3, axis=2)
        np.testing.assert_allclose(interior, expected, rtol=1e-12)

    def test_native_samples_kept(self):
        rng = np.random.default_rng(0)
        data = rng.integers(0, 4000, (8, 8)).astype(np.uint16)
        rgb = debayer_bilinear(cfa(data))
        cmap = hf.bayer.channel_map(hf.BayerPattern.RGGB, 8, 8)
        for c in range(3):
            sites = cmap == c
            np.testing.assert_allclose(rgb[:, :, c][sites], data[sites].astype(float))

    def test_nan_site_propagates_but_neighbors_interpolate(self):
        vals = np.full((6, 6), 50.0)
        vals[2, 2] = np.nan  # an R site: no same-channel neighbor in the stencil
        rgb = debayer_bilinear_mosaic(vals, hf.BayerPattern.RGGB)
        assert np.isnan(rgb[2, 2, 0])
        assert rgb[2, 2, 1] == pytest.approx(50.0)  # G at that site from the cross
        assert rgb[2, 3, 0] == pytest.approx(50.0)  # neighbor's R skips the hole


def noise_free_rig(cfgs, w, h):
    return RigSpec(
        sensors=cfgs,
        noise=[SensorNoiseTruth() for _ in cfgs],
        sensor_sizes=[(w, h)] * len(cfgs),
        noise_free=True,
    )


def cals_for(cfgs, w, h):
    return [SensorNoiseTruth().as_calibration(w, h, c.gain) for c in cfgs]


class TestFuseDebayerFirst:
    def test_single_sensor_midrange_identity(self):
        gt = constant_scene(16, 16, 2e4)
        cfg = make_config(0, 1.0, exposure_time=0.1, black_level=0.0)
        frames, _ = simulate_rig(gt, noise_free_rig([cfg], 16, 16))
        out = fuse_debayer_first(frames, [cfg], cals_for([cfg], 16, 16))
        np.testing.assert_allclose(out.data, 2e4, rtol=1e-3)

    def test_saturated_sensor_dropped(self):
        gt = constant_scene(16, 16, 3e5)
        bright = make_config(0, 1.0, exposure_time=0.1, black_level=0.0)   # saturates
        dim = make_config(1, 2**-6, exposure_time=0.1, black_level=0.0)
        cfgs = [bright, dim]
        frames, _ = simulate_rig(gt, noise_free_rig(cfgs, 16, 16))
        assert (frames[0].data == 4095).all()
        out = fuse_debayer_first(frames, cfgs, cals_for(cfgs, 16, 16))
        np.testing.assert_allclose(out.data, 3e5, rtol=1e-2)

    def test_symmetric_two_sensor_average(self):
        # identical sensors -> equal tent weights -> arithmetic mean
        gt = constant_scene(16, 16, 2e4)
        cfgs = [make_config(i, 1.0, exposure_time=0.1, black_level=0.0) for i in range(2)]
        frames, _ = simulate_rig(gt, noise_free_rig(cfgs, 16, 16))
        single = fuse_debayer_first(frames[:1], cfgs[:1], cals_for(cfgs[:1], 16, 16))
        both = fuse_debayer_first(frames, cfgs, cals_for(cfgs, 16, 16))
        np.testing.assert_allclose(both.data, single.data, rtol=1e-12)

    def test_all_weights_zero_gives_nan(self):
        gt = constant_scene(16, 16, 1e9)  # saturates everything
        cfg = make_config(0, 1.0, exposure_time=0.1, black_level=0.0)
        frames, _ = simulate_rig(gt, noise_free_rig([cfg], 16, 16))
        out = fuse_debayer_first(frames, [cfg], cals_for([cfg], 16, 16))
        assert np.isnan(out.data).all()


class TestFuseDebayerLast:
    def make_aligned(self, w=16, h=16, value=2e4):
        gt = constant_scene(w, h, value)
        cfgs = [make_config(i, 1.0, exposure_time=0.1, black_level=0.0) for i in range(2)]
        frames, _ = simulate_rig(gt, noise_free_rig(cfgs, w, h))
        return frames, cfgs

    def test_equal_variances_arithmetic_mean(self):
        frames, cfgs = self.make_aligned()
        cals = cals_for(cfgs, 16, 16)
        out = fuse_debayer_last(frames, cfgs, cals)
        single = fuse_debayer_last(frames[:1], cfgs[:1], cals[:1])
        np.testing.assert_allclose(out.data, single.data, rtol=1e-12)

    def test_inverse_variance_weighting(self):
        # readout-dominated case: sensor B carries ~100x the variance and
        # contributes ~1% of the weight
        w = h = 8
        frames = [cfa(np.full((h, w), 1000, np.uint16)), cfa(np.full((h, w), 2000, np.uint16))]
        cfgs = [make_config(i, 1.0, exposure_time=1.0, gain=1.0, black_level=0.0,
                            bit_depth=12, saturation_level=4095)
                for i in range(2)]
        cals = [
            hf.NoiseCalibration.uniform(w, h, readout_variance=1e6),
            hf.NoiseCalibration.uniform(w, h, readout_variance=1e8),
        ]
        out = fuse_debayer_last(frames, cfgs, cals)
        # model variances, written out: shot term g^2*t*a*n*f_hat plus readout
        va = 1000.0 + 1e6
        vb = 2000.0 + 1e8
        assert va / vb == pytest.approx(0.01, rel=2e-3)
        expected = (1000.0 / va + 2000.0 / vb) / (1.0 / va + 1.0 / vb)
        cmap = hf.bayer.channel_map(hf.BayerPattern.RGGB, w, h)
        r_sites = cmap == 0
        np.testing.assert_allclose(out.data[:, :, 0][r_sites], expected, rtol=1e-6)

    def test_rotated_rig_refused(self):
        frames, cfgs = self.make_aligned()
        rotated = [cfgs[0], make_config(1, 1.0, rotate_T(3.0, 8, 8), exposure_time=0.1)]
        with pytest.raises(AlignmentError, match="alignment"):
            fuse_debayer_last(frames, rotated, cals_for(rotated, 16, 16))

    def test_subpixel_translation_refused(self):
        frames, cfgs = self.make_aligned()
        shifted = [cfgs[0], make_config(1, 1.0, translate_T(0.4, 0.45), exposure_time=0.1)]
        with pytest.raises(AlignmentError):
            fuse_debayer_last(frames, shifted, cals_for(shifted, 16, 16))

    def test_odd_translation_refused(self):
        frames, cfgs = self.make_aligned()
        shifted = [cfgs[0], make_config(1, 1.0, translate_T(1.0, 0.0), exposure_time=0.1)]
        with pytest.raises(AlignmentError, match="phase"):
            fuse_debayer_last(frames, shifted, cals_for(shifted, 16, 16))

    def test_even_translation_accepted(self):
        frames, cfgs = self.make_aligned()
        shifted = [cfgs[0], make_config(1, 1.0, translate_T(2.0, -2.0), exposure_time=0.1)]
        out = fuse_debayer_last(frames, shifted, cals_for(shifted, 16, 16))
        inner = out.data[4:-4, 4:-4, :]
        np.testing.assert_allclose(inner, 2e4, rtol=1e-2)

    def test_mixed_patterns_refused(self):
        frames, cfgs = self.make_aligned()
        mixed = [cfgs[0], make_config(1, 1.0, exposure_time=0.1, pattern=hf.BayerPattern.BGGR)]
        with pytest.raises(AlignmentError):
            fuse_debayer_last(frames, mixed, cals_for(mixed, 16, 16))
