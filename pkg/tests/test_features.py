import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seedpure import models as M
from seedpure.errors import BadMagicError, FormatError, LeakageError, ShapeError, TruncatedFileError
from seedpure.features import (AVGPOOL, FeatureMatrix, Standardizer, apply_standardizer,
                               decode_features, encode_features, extract_features,
                               extract_features_multi, fit_standardizer, load_features,
                               save_features)
from seedpure.weights import random_init


@pytest.fixture(scope="module")
def vgg_small():
    g = M.build_vgg16((3, 32, 40))
    return g, random_init(g, 1)


def _images(n, geo, seed=0):
    rng = np.random.default_rng(seed)
    return [rng.random((1,) + geo, dtype=np.float32) for _ in range(n)]


class TestExtraction:
    @pytest.mark.parametrize("kind,tap,width", [
        ("vgg16", "vgg.block3", 48384), ("vgg16", "vgg.block4", 20480),
        ("vgg16", "vgg.block5", 5120), ("resnet50", "resnet.stage5.block1", 36864)])
    def test_widths_at_default_geometry(self, kind, tap, width):
        shape = M.build_graph(kind).tap_shape(tap)
        assert int(np.prod(shape)) == width

    def test_vgg_block3_full_size(self):
        g = M.build_vgg16()
        fm = extract_features(g, random_init(g, 42), _images(1, g.input_geometry), "vgg.block3")
        assert fm.values.shape == (1, 48384)

    def test_batch_size_invariance(self, vgg_small):
        g, w = vgg_small
        imgs = _images(10, g.input_geometry)
        a = extract_features(g, w, imgs, "vgg.block4", batch_size=1)
        b = extract_features(g, w, imgs, "vgg.block4", batch_size=7)
        assert a.values.tobytes() == b.values.tobytes()

    def test_flatten_is_bijective(self, vgg_small):
        g, w = vgg_small
        imgs = _images(2, g.input_geometry, seed=3)
        act = M.forward_to_tap(g, w, np.concatenate(imgs), "vgg.block3")
        fm = extract_features(g, w, imgs, "vgg.block3")
        np.testing.assert_array_equal(fm.values.reshape(act.shape), act)

    def test_multi_tap_single_pass(self, vgg_small):
        g, w = vgg_small
        imgs = _images(3, g.input_geometry, seed=4)
        multi = extract_features_multi(g, w, imgs, M.VGG_TAPS, labels=[1, 0, 1])
        for tap in M.VGG_TAPS:
            single = extract_features(g, w, imgs, tap, labels=[1, 0, 1])
            np.testing.assert_array_equal(multi[tap].values, single.values)
            np.testing.assert_array_equal(multi[tap].labels, [1, 0, 1])
            assert multi[tap].n_features == int(np.prod(g.tap_shape(tap)))

    def test_avgpool_mode(self, vgg_small):
        g, w = vgg_small
        fm = extract_features(g, w, _images(2, g.input_geometry), "vgg.block5", mode=AVGPOOL)
        assert fm.n_features == 512

    def test_empty_image_list(self, vgg_small):
        g, w = vgg_small
        fm = extract_features(g, w, [], "vgg.block3")
        assert fm.values.shape == (0, int(np.prod(g.tap_shape("vgg.block3"))))

    def test_bad_batch_size(self, vgg_small):
        g, w = vgg_small
        with pytest.raises(ValueError):
            extract_features(g, w, _images(1, g.input_geometry), "vgg.block3", batch_size=0)


class TestFeatureMatrix:
    def test_label_length_checked(self):
        with pytest.raises(ShapeError):
            FeatureMatrix(np.zeros((2, 3), np.float32), np.zeros(3, np.uint8))

    def test_labels_binary(self):
        with pytest.raises(ValueError):
            FeatureMatrix.build(np.zeros((2, 1)), [0, 2])

    def test_subset_keeps_role(self):
        fm = FeatureMatrix.build(np.arange(6).reshape(3, 2), [0, 1, 1], role="train")
        sub = fm.subset([2, 0])
        np.testing.assert_array_equal(sub.values, [[4, 5], [0, 1]])
        assert sub.role == "train" and sub.subset([0], "test").role == "test"


class TestStandardizer:
    def test_two_point_column(self):
        s = fit_standardizer(FeatureMatrix.build([[1.0], [3.0]]))
        assert s.mean[0] == 2 and s.std[0] == 1

    def test_constant_column_maps_to_zero(self):
        fm = FeatureMatrix.build([[4.0, 1.0], [4.0, 2.0], [4.0, 3.0]])
        s = fit_standardizer(fm)
        assert s.std[0] == 0
        assert np.all(apply_standardizer(s, fm).values[:, 0] == 0)

    def test_constant_column_not_fooled_by_rounding(self):
        fm = FeatureMatrix.build(np.full((7, 1), 0.1))
        assert np.all(apply_standardizer(fit_standardizer(fm), fm).values == 0)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10 ** 6), n=st.integers(2, 40), d=st.integers(1, 6))
    def test_training_columns_become_unit(self, seed, n, d):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((n, d)) * rng.uniform(0.5, 50, d) + rng.uniform(-100, 100, d)
        fm = FeatureMatrix.build(x)
        z = apply_standardizer(fit_standardizer(fm), fm).values.astype(np.float64)
        assert np.all(np.abs(z.mean(axis=0)) <= 1e-6)
        assert np.all(np.abs(z.std(axis=0) - 1) <= 1e-6)

    def test_identity_and_arithmetic(self):
        fm = FeatureMatrix.build([[5.0], [-2.0]])
        ident = apply_standardizer(Standardizer(np.zeros(1), np.ones(1)), fm)
        np.testing.assert_allclose(ident.values, fm.values, rtol=1e-7)
        s = Standardizer(np.array([3.0]), np.array([2.0]), 0.0)
        assert apply_standardizer(s, FeatureMatrix.build([[5.0]])).values[0, 0] == 1

    def test_width_mismatch(self):
        s = fit_standardizer(FeatureMatrix.build(np.ones((2, 3))))
        with pytest.raises(ShapeError):
            apply_standardizer(s, FeatureMatrix.build(np.ones((2, 4))))

    def test_refuses_test_rows(self):
        with pytest.raises(LeakageError):
            fit_standardizer(FeatureMatrix.build(np.ones((3, 2)), role="test"))

    def test_labels_untouched(self):
        fm = FeatureMatrix.build(np.arange(6.0).reshape(3, 2), [1, 0, 1])
        out = apply_standardizer(fit_standardizer(fm), fm)
        np.testing.assert_array_equal(out.labels, [1, 0, 1])


class TestSpft:
    def test_layout(self):
        fm = FeatureMatrix.build([[1.0, -2.0]], [1])
        data = encode_features(fm)
        assert data == b"SPFT" + struct.pack("<III", 1, 1, 2) + b"\x01" + struct.pack("<2f", 1, -2)

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(0, 12), d=st.integers(0, 9))
    def test_round_trip_bit_exact(self, seed, n, d):
        rng = np.random.default_rng(seed)
        bits = rng.integers(0, 2 ** 32, (n, d), dtype=np.uint64).astype(np.uint32)
        fm = FeatureMatrix(bits.view(np.float32), rng.integers(0, 2, n).astype(np.uint8))
        back = decode_features(encode_features(fm))
        assert back.values.tobytes() == fm.values.tobytes()
        np.testing.assert_array_equal(back.labels, fm.labels)

    def test_file_round_trip(self, tmp_path, rng):
        fm = FeatureMatrix.build(rng.standard_normal((5, 3)), [0, 1, 0, 1, 1])
        save_features(fm, tmp_path / "f.spft")
        back = load_features(tmp_path / "f.spft")
        assert back.values.tobytes() == fm.values.tobytes()

    def test_empty_file(self, tmp_path):
        (tmp_path / "e.spft").write_bytes(b"")
        with pytest.raises(BadMagicError):
            load_features(tmp_path / "e.spft")

    def test_truncated_and_trailing(self):
        data = encode_features(FeatureMatrix.build(np.ones((2, 2))))
        with pytest.raises(TruncatedFileError):
            decode_features(data[:-1])
        with pytest.raises(FormatError):
            decode_features(data + b"\x00")
