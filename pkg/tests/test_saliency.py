import numpy as np
import pytest

from advise.errors import ValidationError
from advise.saliency import (
    SaliencyMapSet,
    build_advise_maps,
    gradcam_map,
    group_map,
    group_units,
    mask_image,
    normalize_map,
    resize_bicubic,
)
from conftest import make_bundle
from oracles import catmull_rom_at


class TestGroupUnits:
    def test_partition_example(self):
        groups = group_units([0, 1, 1, 2])
        assert {k: list(v) for k, v in groups.items()} == {
            0: [0], 1: [1, 2], 2: [3]}

    def test_all_equal_single_group(self):
        groups = group_units(np.full(6, 3))
        assert list(groups) == [3]
        assert len(groups[3]) == 6

    def test_no_empty_groups_and_complete(self, rng):
        scores = rng.integers(0, 4, 40)
        groups = group_units(scores)
        assert all(len(v) > 0 for v in groups.values())
        assert sum(len(v) for v in groups.values()) == 40
        seen = np.sort(np.concatenate(list(groups.values())))
        np.testing.assert_array_equal(seen, np.arange(40))


class TestGroupMap:
    def test_unit_weight_times_activation(self):
        act = np.full((3, 3, 1), 2.0)
        grad = np.ones((3, 3, 1))
        np.testing.assert_allclose(group_map(act, grad, [0]), 2.0)

    def test_negative_mean_gradient_relu_zeroes(self):
        act = np.full((3, 3, 1), 5.0)
        grad = np.full((3, 3, 1), -1.0)
        assert np.all(group_map(act, grad, [0], relu=True) == 0.0)
        assert np.all(group_map(act, grad, [0], relu=False) == -5.0)

    def test_linearity_before_relu(self, rng):
        act = rng.normal(0, 1, (4, 5, 6))
        grad = rng.normal(0, 1, (4, 5, 6))
        whole = group_map(act, grad, [0, 2, 4, 5], relu=False)
        parts = (group_map(act, grad, [0, 2], relu=False)
                 + group_map(act, grad, [4, 5], relu=False))
        np.testing.assert_allclose(whole, parts, rtol=1e-6, atol=1e-12)

    def test_empty_group_rejected(self, rng):
        act = rng.normal(0, 1, (3, 3, 2))
        with pytest.raises(ValidationError):
            group_map(act, act, [])


class TestResizeBicubic:
    def test_identity_is_bit_exact(self, rng):
        m = rng.normal(0, 1, (9, 7))
        out = resize_bicubic(m, (9, 7))
        np.testing.assert_array_equal(out, m)
        assert out is not m

    def test_constant_preserved(self):
        m = np.full((3, 4), 1.7)
        out = resize_bicubic(m, (24, 32))
        np.testing.assert_allclose(out, 1.7, atol=1e-6)

    def test_against_direct_kernel_oracle(self, rng):
        src = rng.normal(0, 1, (2, 2))
        out = resize_bicubic(src, (16, 16))
        for oy, ox in ((8, 8), (3, 12), (0, 0), (15, 7)):
            sy = (oy + 0.5) * (2 / 16) - 0.5
            sx = (ox + 0.5) * (2 / 16) - 0.5
            assert out[oy, ox] == pytest.approx(
                catmull_rom_at(src, sy, sx), abs=1e-5)

    def test_oracle_on_general_resize(self, rng):
        src = rng.normal(0, 1, (5, 8))
        out = resize_bicubic(src, (17, 11))
        for oy, ox in ((0, 0), (8, 5), (16, 10), (4, 9)):
            sy = (oy + 0.5) * (5 / 17) - 0.5
            sx = (ox + 0.5) * (8 / 11) - 0.5
            assert out[oy, ox] == pytest.approx(
                catmull_rom_at(src, sy, sx), abs=1e-10)

    def test_validation(self):
        with pytest.raises(ValidationError):
            resize_bicubic(np.zeros((2, 2, 2)), (4, 4))
        with pytest.raises(ValidationError):
            resize_bicubic(np.zeros((2, 2)), (0, 4))


class TestNormalizeMap:
    def test_minmax(self):
        m = np.array([[1.0, 3.0], [2.0, 1.0]])
        out = normalize_map(m)
        assert out.min() == 0.0 and out.max() == 1.0

    def test_constant_positive_goes_to_ones(self):
        np.testing.assert_array_equal(normalize_map(np.full((2, 2), 0.4)),
                                      np.ones((2, 2)))

    def test_constant_zero_goes_to_zeros(self):
        np.testing.assert_array_equal(normalize_map(np.zeros((2, 2))),
                                      np.zeros((2, 2)))


class TestBuildAdviseMaps:
    def test_one_map_per_score_group(self, rng):
        bundle = make_bundle(rng, [1, 1, 2, 1])
        ms = build_advise_maps(bundle, np.array([0, 1, 1, 2]))
        assert ms.scores() == [0, 1, 2]
        assert ms.group_sizes == {0: 1, 1: 2, 2: 1}
        for s in ms.scores():
            assert ms.maps[s].shape == tuple(bundle.manifest.input_size)
            assert ms.normalized[s].min() >= 0.0
            assert ms.normalized[s].max() <= 1.0
        assert ms.selected is None

    def test_relu_nonnegative_no_relu_signed(self, rng):
        bundle = make_bundle(rng, [1, 2, 1])
        bundle.gradient[:, :, 0] = -np.abs(bundle.gradient[:, :, 0])
        on = build_advise_maps(bundle, np.array([0, 1, 1]), relu=True)
        off = build_advise_maps(bundle, np.array([0, 1, 1]), relu=False)
        assert on.relu and not off.relu
        assert all(m.min() >= 0.0 for m in on.maps.values())
        assert off.maps[0].min() < 0.0

    def test_single_group_equals_gradcam(self, rng):
        bundle = make_bundle(rng, [1, 2, 1, 2])
        ms = build_advise_maps(bundle, np.full(4, 1))
        raw, norm = gradcam_map(bundle)
        np.testing.assert_allclose(ms.maps[1], raw, rtol=1e-6, atol=1e-12)
        np.testing.assert_allclose(ms.normalized[1], norm, rtol=1e-6,
                                   atol=1e-12)

    def test_group_linearity_pre_relu(self, rng):
        bundle = make_bundle(rng, [1, 1, 1, 1])
        scores = np.array([0, 0, 1, 1])
        ms = build_advise_maps(bundle, scores, relu=False)
        both = group_map(bundle.activation, bundle.gradient, [0, 1, 2, 3],
                         relu=False)
        parts = (group_map(bundle.activation, bundle.gradient, [0, 1],
                           relu=False)
                 + group_map(bundle.activation, bundle.gradient, [2, 3],
                             relu=False))
        np.testing.assert_allclose(both, parts, rtol=1e-6, atol=1e-12)
        assert set(ms.maps) == {0, 1}

    def test_score_count_mismatch(self, rng):
        bundle = make_bundle(rng, [1, 1])
        with pytest.raises(ValidationError):
            build_advise_maps(bundle, np.array([1, 1, 1]))

    def test_eval_maps_view(self, rng):
        bundle = make_bundle(rng, [1, 1])
        ms = build_advise_maps(bundle, np.array([2, 5]))
        keys = list(ms.eval_maps())
        assert keys == ["score:2", "score:5"]

    def test_accepts_score_vector_dataclass(self, rng):
        from advise.scoring import UnitScoreVector
        bundle = make_bundle(rng, [1, 1])
        vec = UnitScoreVector(scores=np.array([1, 1]), normalization=[],
                              source="gradient", prominence=0.05)
        ms = build_advise_maps(bundle, vec)
        assert ms.group_sizes == {1: 2}


class TestGradcamMap:
    def test_nonnegative_and_normalized(self, rng):
        bundle = make_bundle(rng, [1, 2, 1])
        raw, norm = gradcam_map(bundle)
        assert raw.min() >= 0.0
        assert 0.0 <= norm.min() and norm.max() <= 1.0

    def test_constant_bundle_gives_constant_map(self):
        act = np.full((4, 4, 3), 2.0)
        grad = np.full((4, 4, 3), 0.5)
        from advise.bundles import Manifest, TensorBundle
        man = Manifest(model="m", layer="l", image="i.png",
                       input_size=[16, 16], class_index=0, class_score=0.5)
        bundle = TensorBundle(manifest=man, activation=act, gradient=grad)
        raw, norm = gradcam_map(bundle)
        np.testing.assert_allclose(raw, 3.0, atol=1e-6)
        np.testing.assert_array_equal(norm, np.ones((16, 16)))

    def test_out_size_override(self, rng):
        bundle = make_bundle(rng, [1])
        raw, _ = gradcam_map(bundle, out_size=(10, 12))
        assert raw.shape == (10, 12)


class TestMaskImage:
    def test_identity_mask(self, rng):
        img = rng.uniform(0, 1, (6, 5, 3))
        np.testing.assert_array_equal(mask_image(img, np.ones((6, 5))), img)

    def test_zero_mask_black(self, rng):
        img = rng.uniform(0, 1, (6, 5, 3))
        assert np.all(mask_image(img, np.zeros((6, 5))) == 0.0)

    def test_half_mask(self, rng):
        img = rng.uniform(0, 1, (4, 4, 3))
        np.testing.assert_allclose(mask_image(img, np.full((4, 4), 0.5)),
                                   img * 0.5, rtol=1e-15)

    def test_shape_mismatch(self, rng):
        img = rng.uniform(0, 1, (4, 4, 3))
        with pytest.raises(ValidationError):
            mask_image(img, np.ones((5, 4)))
        with pytest.raises(ValidationError):
            mask_image(img[:, :, 0], np.ones((4, 4)))
