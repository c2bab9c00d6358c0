import numpy as np
import pytest

from advise.errors import ValidationError
from advise.fsim import (
    MIN_SIDE,
    fsim,
    gradient_magnitude,
    phase_congruency,
)
from conftest import textured_image


class TestGradientMagnitude:
    def test_x_ramp(self):
        # the kernel's two taps straddle the center, so a slope-1 ramp
        # reads as 2.0
        img = np.tile(np.arange(40, dtype=np.float64), (40, 1))
        gm = gradient_magnitude(img)
        np.testing.assert_allclose(gm[5:-5, 5:-5], 2.0, atol=1e-12)

    def test_y_ramp_matches_transpose(self):
        img = np.tile(np.arange(40, dtype=np.float64), (40, 1))
        np.testing.assert_allclose(gradient_magnitude(img.T),
                                   gradient_magnitude(img).T, atol=1e-12)

    def test_constant_is_zero(self):
        assert np.all(gradient_magnitude(np.full((32, 32), 0.7)) == 0.0)


class TestPhaseCongruency:
    def test_range(self):
        for seed in (0, 1):
            from advise.imgio import luma
            img = luma(textured_image(seed)) * 255.0
            pc = phase_congruency(img)
            assert pc.min() >= 0.0
            assert pc.max() <= 1.0 + 1e-9

    def test_constant_image_has_none(self):
        pc = phase_congruency(np.full((32, 32), 100.0))
        assert np.all(pc == 0.0)

    def test_edge_localization(self):
        # a bar, not a half-plane split: the FFT's periodic extension
        # turns the latter into a square wave with energy everywhere
        img = np.zeros((64, 64))
        img[:, 32:48] = 200.0
        pc = phase_congruency(img)
        edge = pc[16:48, 31:34].mean()
        flat = pc[16:48, 8:24].mean()
        assert edge > 5 * flat


class TestFsim:
    def test_identity(self):
        img = textured_image(3)
        assert fsim(img, img) == 1.0

    def test_featureless_pair_vacuous(self):
        z = np.zeros((32, 32, 3))
        assert fsim(z, z) == 1.0
        assert fsim(np.full((32, 32, 3), 0.3), np.full((32, 32, 3), 0.7)) \
            == 1.0

    def test_symmetric(self, rng):
        a = textured_image(1)
        b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
        assert abs(fsim(a, b) - fsim(b, a)) <= 1e-12

    def test_light_noise_beats_heavy_mask(self):
        h, w = 64, 64
        yy, xx = np.mgrid[0:h, 0:w]
        blob = np.exp(-(((xx - w / 2) ** 2 + (yy - h / 2) ** 2)
                        / (2 * 6.0 ** 2)))
        for seed in (0, 1, 2):
            img = textured_image(seed)
            noise_rng = np.random.default_rng(100 + seed)
            noisy = np.clip(
                img + noise_rng.uniform(-0.02, 0.02, img.shape), 0, 1)
            masked = img * blob[:, :, None]
            s_noise = fsim(img, noisy)
            s_mask = fsim(img, masked)
            assert 0.0 < s_mask < s_noise <= 1.0

    def test_in_unit_interval(self, rng):
        img = textured_image(5)
        for _ in range(5):
            other = np.clip(img * rng.uniform(0, 1, img.shape[:2])[..., None],
                            0, 1)
            assert 0.0 < fsim(img, other) <= 1.0

    def test_too_small(self):
        small = np.zeros((MIN_SIDE - 1, 64, 3))
        with pytest.raises(ValidationError):
            fsim(small, small)

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            fsim(np.zeros((40, 40, 3)), np.zeros((40, 41, 3)))
