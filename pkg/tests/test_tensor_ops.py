"""Forward-op contracts: shapes, frozen values, and oracle agreement."""

import math

import numpy as np
import pytest

from segforge import Tensor, ops, set_debug_checks
from segforge.errors import NumericalError, ShapeError

from oracles import bilinear_reference, naive_conv2d


def rand(shape, seed=0, dtype=np.float32):
    return np.random.default_rng(seed).standard_normal(shape).astype(dtype)


class TestConv2d:
    def test_same_padding_preserves_shape(self):
        x = Tensor(rand((1, 8, 21, 40), seed=1))
        w = Tensor(rand((8, 8, 3, 3), seed=2) * 0.1)
        out = ops.conv2d(x, w, stride=1, padding=1, dilation=1)
        assert out.shape == (1, 8, 21, 40)

    def test_identity_1x1_kernel(self):
        x = Tensor(rand((1, 6, 9, 9), seed=3))
        w = np.zeros((6, 6, 1, 1), dtype=np.float32)
        for i in range(6):
            w[i, i, 0, 0] = 1.0
        out = ops.conv2d(x, Tensor(w), Tensor(np.zeros(6, dtype=np.float32)))
        np.testing.assert_array_equal(out.data, x.data)

    def test_dilated_matches_naive_oracle(self):
        x = rand((1, 8, 33, 33), seed=4, dtype=np.float64)
        w = rand((8, 8, 3, 3), seed=5, dtype=np.float64) * 0.2
        out = ops.conv2d(Tensor(x), Tensor(w), stride=1, padding=6, dilation=6)
        assert out.shape == (1, 8, 33, 33)
        ref = naive_conv2d(x, w, stride=1, padding=6, dilation=6)
        np.testing.assert_allclose(out.data, ref, rtol=1e-6, atol=1e-9)

    @pytest.mark.parametrize("k,s,d,groups", [
        (1, 1, 1, 1), (3, 1, 1, 1), (3, 2, 1, 1), (3, 1, 2, 1),
        (3, 1, 2, 2), (3, 2, 2, 4), (1, 2, 1, 1), (3, 1, 1, 4),
    ])
    def test_oracle_grid(self, k, s, d, groups):
        cin, cout = 4, 8
        x = rand((2, cin, 11, 13), seed=k * 100 + s * 10 + d, dtype=np.float64)
        w = rand((cout, cin // groups, k, k), seed=groups, dtype=np.float64) * 0.3
        b = rand((cout,), seed=9, dtype=np.float64)
        p = d * (k - 1) // 2
        out = ops.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=s, padding=p,
                         dilation=d, groups=groups)
        ref = naive_conv2d(x, w, b, stride=s, padding=p, dilation=d, groups=groups)
        np.testing.assert_allclose(out.data, ref, rtol=1e-6, atol=1e-9)

    @pytest.mark.parametrize("k", [1, 3])
    @pytest.mark.parametrize("s", [1, 2])
    @pytest.mark.parametrize("d", [1, 2, 6, 12, 18])
    def test_shape_law(self, k, s, d):
        h, w = 45, 50
        p = d  # generous padding keeps outputs positive across the grid
        x = Tensor(rand((1, 2, h, w), seed=6))
        wt = Tensor(rand((3, 2, k, k), seed=7) * 0.1)
        out = ops.conv2d(x, wt, stride=s, padding=p, dilation=d)
        eh = (h + 2 * p - d * (k - 1) - 1) // s + 1
        ew = (w + 2 * p - d * (k - 1) - 1) // s + 1
        assert out.shape == (1, 3, eh, ew)

    def test_linearity(self):
        w = Tensor(rand((4, 3, 3, 3), seed=8) * 0.2)
        x = rand((1, 3, 10, 10), seed=9)
        y = rand((1, 3, 10, 10), seed=10)
        a, b = 1.7, -0.6
        lhs = ops.conv2d(Tensor(a * x + b * y), w, padding=1)
        rhs = a * ops.conv2d(Tensor(x), w, padding=1).data + b * ops.conv2d(
            Tensor(y), w, padding=1).data
        np.testing.assert_allclose(lhs.data, rhs, rtol=1e-5, atol=1e-6)

    def test_shape_errors(self):
        x = Tensor(rand((1, 4, 8, 8)))
        with pytest.raises(ShapeError):
            ops.conv2d(x, Tensor(rand((4, 3, 3, 3))))  # in-channel mismatch
        with pytest.raises(ShapeError):
            ops.conv2d(x, Tensor(rand((4, 4, 3, 3))), groups=3)
        with pytest.raises(ShapeError):
            ops.conv2d(Tensor(rand((1, 2, 2, 2))), Tensor(rand((2, 2, 5, 5))))

    def test_forward_determinism(self):
        x = Tensor(rand((2, 3, 16, 16), seed=11))
        w = Tensor(rand((5, 3, 3, 3), seed=12))
        a = ops.conv2d(x, w, padding=1).data
        b = ops.conv2d(x, w, padding=1).data
        np.testing.assert_array_equal(a, b)


class TestBatchNorm:
    def _buffers(self, c):
        return (Tensor(np.ones(c, dtype=np.float32)), Tensor(np.zeros(c, dtype=np.float32)),
                Tensor(np.zeros(c, dtype=np.float32)), Tensor(np.ones(c, dtype=np.float32)))

    def test_constant_input_training_is_zero(self):
        gamma, beta, rm, rv = self._buffers(3)
        x = Tensor(np.full((2, 3, 4, 4), 2.5, dtype=np.float32))
        out = ops.batch_norm2d(x, gamma, beta, rm, rv, training=True)
        np.testing.assert_allclose(out.data, 0.0, atol=1e-5)

    def test_eval_identity_normalization(self):
        gamma, beta, rm, rv = self._buffers(3)
        x = Tensor(rand((2, 3, 5, 5), seed=1))
        out = ops.batch_norm2d(x, gamma, beta, rm, rv, training=False, epsilon=1e-12)
        np.testing.assert_allclose(out.data, x.data, rtol=1e-5, atol=1e-6)

    def test_training_statistics(self):
        gamma, beta, rm, rv = self._buffers(8)
        x = Tensor(rand((4, 8, 5, 5), seed=2, dtype=np.float64))
        out = ops.batch_norm2d(x, gamma, beta, rm, rv, training=True)
        mean = out.data.mean(axis=(0, 2, 3))
        var = out.data.var(axis=(0, 2, 3))
        np.testing.assert_allclose(mean, 0.0, atol=1e-5)
        np.testing.assert_allclose(var, 1.0, atol=1e-4)

    def test_running_stats_update(self):
        gamma, beta, rm, rv = self._buffers(2)
        x = np.zeros((2, 2, 3, 3), dtype=np.float32)
        x[:, 0] = 4.0
        x[:, 1] = -2.0
        ops.batch_norm2d(Tensor(x), gamma, beta, rm, rv, training=True, momentum=0.5)
        np.testing.assert_allclose(rm.data, [2.0, -1.0], atol=1e-6)

    def test_channel_mismatch_raises(self):
        gamma, beta, rm, rv = self._buffers(3)
        with pytest.raises(ShapeError):
            ops.batch_norm2d(Tensor(rand((1, 4, 2, 2))), gamma, beta, rm, rv, training=True)

    def test_batch1_spatial1_defined(self):
        gamma, beta, rm, rv = self._buffers(2)
        x = Tensor(rand((1, 2, 1, 1), seed=3))
        out = ops.batch_norm2d(x, gamma, beta, rm, rv, training=True)
        assert np.all(np.isfinite(out.data))
        np.testing.assert_allclose(out.data, 0.0, atol=1e-3)


class TestActivationAndPooling:
    def test_relu_values(self):
        out = ops.relu(Tensor(np.array([[-3.0, 2.5]], dtype=np.float32)))
        np.testing.assert_array_equal(out.data, [[0.0, 2.5]])

    def test_max_pool_2x2(self):
        x = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]], dtype=np.float32))
        out = ops.max_pool2d(x, 2, 2)
        np.testing.assert_array_equal(out.data, [[[[4.0]]]])

    def test_max_pool_shape_law(self):
        x = Tensor(rand((1, 2, 13, 17), seed=4))
        out = ops.max_pool2d(x, 3, 2, padding=1)
        assert out.shape == (1, 2, (13 + 2 - 3) // 2 + 1, (17 + 2 - 3) // 2 + 1)

    def test_max_pool_empty_spatial_raises(self):
        with pytest.raises(ShapeError):
            ops.max_pool2d(Tensor(rand((1, 1, 1, 1))), 3, 1, padding=0)

    def test_global_avg_pool_constant(self):
        x = Tensor(np.full((2, 3, 7, 5), 1.25, dtype=np.float32))
        out = ops.global_avg_pool2d(x)
        assert out.shape == (2, 3, 1, 1)
        np.testing.assert_allclose(out.data, 1.25, rtol=1e-6)

    def test_global_avg_pool_is_spatial_mean(self):
        x = rand((2, 4, 6, 6), seed=5)
        out = ops.global_avg_pool2d(Tensor(x))
        np.testing.assert_allclose(out.data[..., 0, 0], x.mean(axis=(2, 3)), rtol=1e-5)


class TestBilinear:
    def test_constant_stays_constant(self):
        x = Tensor(np.full((1, 2, 3, 4), 0.7, dtype=np.float32))
        out = ops.bilinear_upsample(x, 9, 11)
        np.testing.assert_allclose(out.data, 0.7, rtol=1e-6)

    def test_2x2_to_4x4_frozen_values(self):
        x = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]], dtype=np.float64))
        out = ops.bilinear_upsample(x, 4, 4)
        expected = np.array([
            [1.0, 1.25, 1.75, 2.0],
            [1.5, 1.75, 2.25, 2.5],
            [2.5, 2.75, 3.25, 3.5],
            [3.0, 3.25, 3.75, 4.0],
        ])
        np.testing.assert_allclose(out.data[0, 0], expected, rtol=1e-12)
        ref = bilinear_reference(x.data, 4, 4)
        np.testing.assert_allclose(out.data, ref, rtol=1e-12)

    def test_matches_reference_on_random_sizes(self):
        x = rand((1, 3, 5, 7), seed=6, dtype=np.float64)
        for oh, ow in [(10, 14), (7, 9), (3, 4), (20, 28)]:
            out = ops.bilinear_upsample(Tensor(x), oh, ow)
            np.testing.assert_allclose(out.data, bilinear_reference(x, oh, ow),
                                       rtol=1e-9, atol=1e-12)

    def test_same_size_is_exact_identity(self):
        x = rand((2, 3, 6, 8), seed=7)
        out = ops.bilinear_upsample(Tensor(x), 6, 8)
        np.testing.assert_array_equal(out.data, x)


class TestSoftmax:
    def test_uniform_logits(self):
        x = Tensor(np.zeros((1, 5, 2, 2), dtype=np.float32))
        out = ops.softmax_channelwise(x)
        np.testing.assert_allclose(out.data, 0.2, rtol=1e-6)

    def test_closed_form_two_channels(self):
        logits = np.zeros((1, 2, 1, 1), dtype=np.float64)
        logits[0, 1] = math.log(3.0)
        out = ops.softmax_channelwise(Tensor(logits))
        np.testing.assert_allclose(out.data[0, :, 0, 0], [0.25, 0.75], rtol=1e-12)

    def test_rows_sum_to_one(self):
        x = Tensor(rand((2, 7, 4, 4), seed=8) * 20)
        out = ops.softmax_channelwise(x)
        np.testing.assert_allclose(out.data.sum(axis=1), 1.0, atol=1e-6)

    def test_shift_invariance(self):
        x = rand((1, 4, 3, 3), seed=9, dtype=np.float64)
        a = ops.softmax_channelwise(Tensor(x)).data
        b = ops.softmax_channelwise(Tensor(x + 7.5)).data
        np.testing.assert_allclose(a, b, atol=1e-7)

    def test_non_finite_rejected(self):
        bad = np.zeros((1, 2, 1, 1), dtype=np.float32)
        bad[0, 0] = np.inf
        with pytest.raises(NumericalError):
            ops.softmax_channelwise(Tensor(bad))


class TestDropout:
    def test_rate_zero_is_identity(self):
        x = rand((3, 3), seed=10)
        out = ops.dropout(Tensor(x), 0.0, True, np.random.default_rng(0))
        np.testing.assert_array_equal(out.data, x)

    def test_eval_mode_is_identity(self):
        x = rand((3, 3), seed=11)
        out = ops.dropout(Tensor(x), 0.9, False, np.random.default_rng(0))
        np.testing.assert_array_equal(out.data, x)

    def test_inverted_scaling_preserves_mean(self):
        x = Tensor(np.ones(1_000_000, dtype=np.float32))
        out = ops.dropout(x, 0.1, True, np.random.default_rng(42))
        assert 0.99 <= float(out.data.mean()) <= 1.01

    def test_deterministic_given_seed(self):
        x = Tensor(rand((64,), seed=12))
        a = ops.dropout(x, 0.5, True, np.random.default_rng(7)).data
        b = ops.dropout(x, 0.5, True, np.random.default_rng(7)).data
        np.testing.assert_array_equal(a, b)

    def test_rate_one_rejected(self):
        with pytest.raises(ShapeError):
            ops.dropout(Tensor(rand((2,))), 1.0, True, np.random.default_rng(0))


class TestDebugChecks:
    def test_nan_raises_when_enabled(self):
        set_debug_checks(True)
        try:
            x = Tensor(np.array([np.nan], dtype=np.float32))
            with pytest.raises(NumericalError):
                ops.relu(x)
        finally:
            set_debug_checks(False)

    def test_nan_propagates_when_disabled(self):
        x = Tensor(np.array([np.nan], dtype=np.float32))
        out = ops.relu(x)
        assert out.shape == (1,)


class TestBackendEquivalence:
    """Compiled and numpy kernels are interchangeable bit for bit."""

    def test_all_kernels_match(self):
        from segforge.kernels import numpy_backend

        try:
            from segforge.kernels import _native
        except ImportError:
            pytest.skip("compiled backend not built")
        rng = np.random.default_rng(3)
        for dtype in (np.float32, np.float64):
            x = np.ascontiguousarray(rng.standard_normal((2, 3, 11, 11)).astype(dtype))
            for (kh, kw, s, d, oh, ow) in [(3, 3, 1, 1, 9, 9), (3, 3, 2, 2, 3, 3), (1, 1, 1, 1, 11, 11)]:
                a = numpy_backend.im2col(x, kh, kw, s, s, d, d, oh, ow)
                b = _native.im2col(x, kh, kw, s, s, d, d, oh, ow)
                np.testing.assert_array_equal(a, b)
                cols = np.ascontiguousarray(rng.standard_normal(a.shape).astype(dtype))
                ca = numpy_backend.col2im(cols, 2, 3, 11, 11, kh, kw, s, s, d, d, oh, ow)
                cb = _native.col2im(cols, 2, 3, 11, 11, kh, kw, s, s, d, d, oh, ow)
                np.testing.assert_array_equal(ca, cb)
            oa, ia = numpy_backend.maxpool_forward(x, 3, 2, 5, 5)
            ob, ib = _native.maxpool_forward(x, 3, 2, 5, 5)
            np.testing.assert_array_equal(oa, ob)
            np.testing.assert_array_equal(ia, ib)
            g = np.ascontiguousarray(rng.standard_normal(oa.shape).astype(dtype))
            ga = numpy_backend.maxpool_backward(g, ia, 2, 3, 11, 11)
            gb = _native.maxpool_backward(g, ib, 2, 3, 11, 11)
            np.testing.assert_array_equal(ga, gb)

    def test_maxpool_tie_takes_first_in_scan(self):
        x = np.zeros((1, 1, 2, 2), dtype=np.float32)  # four-way tie
        from segforge import kernels

        out, idx = kernels.maxpool_forward(x, 2, 2, 1, 1)
        assert idx[0, 0, 0, 0] == 0
