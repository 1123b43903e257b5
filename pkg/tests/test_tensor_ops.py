"""Numerical-kernel tests: convolution against a nested-loop oracle,
gradients against central finite differences, MSE against a scalar loop,
and Adam against a scalar float32 reference trace."""

import numpy as np
import pytest

from scnn_inpaint.errors import ConfigurationError, NumericError, ShapeMismatchError
from scnn_inpaint.tensor_ops import (
    AdamState,
    ConvLayerParams,
    adam_step,
    as_tensor4,
    conv2d_backward,
    conv2d_forward,
    conv_output_hw,
    mse_loss,
    relu,
    relu_backward,
)

from reference_impl import (
    assert_rel_close,
    central_difference,
    conv2d_nested_loops,
    scalar_adam_f32,
    scalar_mse,
)


def _conv(out_c, in_c, k, rng, stride=1, padding=0, dtype=np.float32):
    weight = rng.normal(size=(out_c, in_c, k, k)).astype(dtype)
    bias = rng.normal(size=out_c).astype(dtype)
    return ConvLayerParams(weight=weight, bias=bias, stride=stride, padding=padding)


class TestConvForward:
    def test_scalar_scaling(self):
        """All-ones input through a [2] kernel doubles every element."""
        x = np.ones((1, 1, 3, 3), dtype=np.float32)
        params = ConvLayerParams(np.full((1, 1, 1, 1), 2, dtype=np.float32),
                                 np.zeros(1, dtype=np.float32))
        np.testing.assert_array_equal(conv2d_forward(x, params),
                                      np.full((1, 1, 3, 3), 2, dtype=np.float32))

    def test_identity_kernel(self, rng):
        """A centred delta kernel with same-padding reproduces the input."""
        x = rng.normal(size=(1, 1, 3, 3)).astype(np.float32)
        weight = np.zeros((1, 1, 3, 3), dtype=np.float32)
        weight[0, 0, 1, 1] = 1.0
        params = ConvLayerParams(weight, np.zeros(1, dtype=np.float32), padding=1)
        np.testing.assert_allclose(conv2d_forward(x, params), x, rtol=1e-6)

    def test_matches_nested_loop_oracle(self, rng):
        """Random 2x3x8x8 instance agrees with the six-loop reference to 1e-6."""
        x = rng.normal(size=(2, 3, 8, 8)).astype(np.float32)
        params = _conv(4, 3, 3, rng, padding=1)
        expected = conv2d_nested_loops(x, params.weight, params.bias, 1, 1)
        assert_rel_close(conv2d_forward(x, params), expected, rtol=1e-6, context="conv")

    def test_random_geometries_vs_oracle(self, rng):
        """Strides, paddings, and channel counts all match the reference."""
        for _ in range(20):
            k = int(rng.choice([1, 3, 5]))
            stride = int(rng.integers(1, 3))
            padding = int(rng.integers(0, 3))
            in_c, out_c = int(rng.integers(1, 4)), int(rng.integers(1, 4))
            h = int(rng.integers(k, 9))
            h -= (h + 2 * padding - k) % stride
            if h < k:
                continue
            x = rng.normal(size=(int(rng.integers(1, 3)), in_c, h, h)).astype(np.float32)
            params = _conv(out_c, in_c, k, rng, stride=stride, padding=padding)
            expected = conv2d_nested_loops(x, params.weight, params.bias, stride, padding)
            assert_rel_close(conv2d_forward(x, params), expected, rtol=1e-6,
                             context=f"k={k} s={stride} p={padding}")

    @pytest.mark.parametrize("k", [1, 3, 5, 7])
    def test_same_padding_preserves_dims(self, rng, k):
        """pad=(k-1)/2 with stride 1 keeps spatial dims for every odd k."""
        x = rng.normal(size=(1, 2, 9, 9)).astype(np.float32)
        params = _conv(3, 2, k, rng, padding=(k - 1) // 2)
        assert conv2d_forward(x, params).shape == (1, 3, 9, 9)

    def test_channel_mismatch_raises(self, rng):
        x = rng.normal(size=(1, 2, 4, 4)).astype(np.float32)
        with pytest.raises(ShapeMismatchError, match="channels"):
            conv2d_forward(x, _conv(1, 3, 3, rng))

    def test_non_integer_output_raises(self, rng):
        params = _conv(1, 1, 3, rng, stride=2)
        with pytest.raises(ConfigurationError):
            conv_output_hw(6, 6, params)

    def test_even_kernel_rejected(self, rng):
        with pytest.raises(ConfigurationError, match="odd"):
            ConvLayerParams(np.zeros((1, 1, 2, 2), dtype=np.float32),
                            np.zeros(1, dtype=np.float32))


class TestConvBackward:
    def test_zero_grad_out_gives_zero_grads(self, rng):
        x = rng.normal(size=(1, 2, 5, 5)).astype(np.float32)
        params = _conv(3, 2, 3, rng, padding=1)
        gi, gw, gb = conv2d_backward(x, params, np.zeros((1, 3, 5, 5), dtype=np.float32))
        assert not gi.any() and not gw.any() and not gb.any()

    def test_scalar_chain_rule(self):
        """1x1 conv: grad_input = w*g, grad_weight = x*g, grad_bias = g."""
        x = np.full((1, 1, 1, 1), 3.0, dtype=np.float32)
        params = ConvLayerParams(np.full((1, 1, 1, 1), 5.0, dtype=np.float32),
                                 np.zeros(1, dtype=np.float32))
        g = np.full((1, 1, 1, 1), 2.0, dtype=np.float32)
        gi, gw, gb = conv2d_backward(x, params, g)
        assert gi.item() == 10.0 and gw.item() == 6.0 and gb.item() == 2.0

    def test_grads_match_finite_differences(self, rng):
        """Projection gradients agree with central differences at 1e-4."""
        for trial in range(3):
            x = rng.normal(size=(2, 2, 5, 5))
            params = _conv(3, 2, 3, rng, padding=1, dtype=np.float64)
            r = rng.normal(size=(2, 3, 5, 5))
            gi, gw, gb = conv2d_backward(x, params, r)

            fd_x = central_difference(
                lambda xv: float((conv2d_forward(xv, params) * r).sum()), x)
            assert_rel_close(gi, fd_x, rtol=1e-4, atol=1e-9, context=f"input t{trial}")

            def loss_w(wv):
                p = ConvLayerParams(wv, params.bias, params.stride, params.padding)
                return float((conv2d_forward(x, p) * r).sum())

            fd_w = central_difference(loss_w, params.weight)
            assert_rel_close(gw, fd_w, rtol=1e-4, atol=1e-9, context=f"weight t{trial}")

            def loss_b(bv):
                p = ConvLayerParams(params.weight, bv, params.stride, params.padding)
                return float((conv2d_forward(x, p) * r).sum())

            fd_b = central_difference(loss_b, params.bias)
            assert_rel_close(gb, fd_b, rtol=1e-4, atol=1e-9, context=f"bias t{trial}")

    def test_grad_out_shape_mismatch_raises(self, rng):
        x = rng.normal(size=(1, 2, 5, 5)).astype(np.float32)
        params = _conv(3, 2, 3, rng, padding=1)
        with pytest.raises(ShapeMismatchError):
            conv2d_backward(x, params, np.zeros((1, 3, 4, 4), dtype=np.float32))


class TestRelu:
    def test_definition(self):
        x = np.array([-1.0, 0.0, 2.0], dtype=np.float32).reshape(1, 1, 1, 3)
        np.testing.assert_array_equal(relu(x).ravel(), [0.0, 0.0, 2.0])

    def test_all_negative(self, rng):
        x = -np.abs(rng.normal(size=(1, 2, 3, 3))).astype(np.float32) - 0.1
        assert not relu(x).any()
        assert not relu_backward(x, rng.normal(size=x.shape).astype(np.float32)).any()

    def test_subgradient_at_zero_is_zero(self):
        x = np.zeros((1, 1, 1, 1), dtype=np.float32)
        g = np.ones_like(x)
        assert relu_backward(x, g).item() == 0.0

    def test_backward_matches_finite_differences(self, rng):
        """Away from the kink, the ReLU gradient matches central differences."""
        x = rng.normal(size=(1, 2, 4, 4))
        x = np.where(np.abs(x) < 0.05, 0.5, x)  # keep clear of the kink at 0
        r = rng.normal(size=x.shape)
        analytic = relu_backward(x, r)
        fd = central_difference(lambda xv: float((relu(xv) * r).sum()), x)
        assert_rel_close(analytic, fd, rtol=1e-4, atol=1e-9, context="relu")


class TestMseLoss:
    def test_identical_inputs(self, rng):
        x = rng.normal(size=(2, 1, 3, 3)).astype(np.float32)
        loss, grad = mse_loss(x, x.copy())
        assert loss == 0.0 and not grad.any()

    def test_constant_case(self):
        for shape in [(1, 1, 2, 2), (3, 2, 4, 5)]:
            loss, _ = mse_loss(np.ones(shape, dtype=np.float32),
                               np.zeros(shape, dtype=np.float32))
            assert loss == pytest.approx(1.0)

    def test_matches_scalar_loop(self, rng):
        pred = rng.normal(size=(2, 3, 4, 4)).astype(np.float32)
        target = rng.normal(size=(2, 3, 4, 4)).astype(np.float32)
        loss, grad = mse_loss(pred, target)
        ref_loss, ref_grad = scalar_mse(pred, target)
        assert loss == pytest.approx(ref_loss, rel=1e-6)
        assert_rel_close(grad, ref_grad, rtol=1e-6, atol=1e-12, context="mse grad")

    def test_nonnegative_and_zero_iff_equal(self, rng):
        for _ in range(10):
            pred = rng.normal(size=(1, 2, 3, 3)).astype(np.float32)
            target = rng.normal(size=(1, 2, 3, 3)).astype(np.float32)
            loss, _ = mse_loss(pred, target)
            assert loss >= 0
            assert (loss == 0) == bool((pred == target).all())

    def test_shape_mismatch_raises(self, rng):
        with pytest.raises(ShapeMismatchError):
            mse_loss(np.zeros((1, 1, 2, 2), dtype=np.float32),
                     np.zeros((1, 1, 2, 3), dtype=np.float32))

    def test_grad_matches_finite_differences(self, rng):
        pred = rng.normal(size=(1, 2, 3, 3))
        target = rng.normal(size=(1, 2, 3, 3))
        _, grad = mse_loss(pred, target)
        fd = central_difference(lambda pv: mse_loss(pv, target)[0], pred)
        assert_rel_close(grad, fd, rtol=1e-4, atol=1e-12, context="mse fd")


class TestAdam:
    def test_zero_grad_is_identity(self, rng):
        param = rng.normal(size=(2, 2, 3, 3)).astype(np.float32)
        state = AdamState.for_param(param)
        for _ in range(3):
            new_param, state = adam_step(param, np.zeros_like(param), state)
            np.testing.assert_array_equal(new_param, param)
            param = new_param
        assert state.t == 3 and not state.m.any() and not state.v.any()

    def test_first_step_magnitude(self):
        """From 0 with grad 1 the first update is -lr to within 1e-6."""
        param = np.zeros((1, 1, 1, 1), dtype=np.float32)
        new_param, state = adam_step(param, np.ones_like(param),
                                     AdamState.for_param(param, lr=0.001))
        assert abs(new_param.item() + 0.001) < 1e-6
        assert state.t == 1

    def test_trace_matches_scalar_reference_bitwise(self):
        """Successive identical steps reproduce the float32 scalar trace exactly."""
        grads = [1.0, 1.0, 0.5, -2.0]
        expected = scalar_adam_f32(0.0, grads)
        param = np.zeros((1, 1, 1, 1), dtype=np.float32)
        state = AdamState.for_param(param)
        for g, ref in zip(grads, expected):
            param, state = adam_step(param, np.full_like(param, g), state)
            assert param.item() == ref

    def test_shape_mismatch_raises(self, rng):
        param = np.zeros((1, 1, 2, 2), dtype=np.float32)
        with pytest.raises(ShapeMismatchError):
            adam_step(param, np.zeros((1, 1, 2, 3), dtype=np.float32),
                      AdamState.for_param(param))


class TestValidation:
    def test_rank_enforced(self):
        with pytest.raises(ShapeMismatchError, match="rank-4"):
            as_tensor4(np.zeros((2, 3)))

    def test_non_finite_rejected(self):
        bad = np.zeros((1, 1, 2, 2), dtype=np.float32)
        bad[0, 0, 0, 0] = np.nan
        with pytest.raises(NumericError):
            as_tensor4(bad)

    def test_nan_input_to_conv_rejected(self, rng):
        params = _conv(1, 1, 3, rng)
        bad = np.full((1, 1, 4, 4), np.inf, dtype=np.float32)
        with pytest.raises(NumericError):
            conv2d_forward(bad, params)
