"""Spiking-layer tests: ternary spike code, deterministic noise, surrogate
gradient semantics, and finite-difference checks against the smoothed
forward pass."""

import numpy as np
import pytest

from scnn_inpaint.errors import ConfigurationError, ShapeMismatchError
from scnn_inpaint.lif import LifParams
from scnn_inpaint.spiking import (
    SnnConvLayer,
    draw_noise,
    snn_backward,
    snn_forward,
    spike_fn,
    spike_smoothed,
    spike_surrogate,
)
from scnn_inpaint.tensor_ops import ConvLayerParams

from reference_impl import assert_rel_close, central_difference


def _layer(rng, in_c=1, out_c=1, k=3, noise_std=0.1, width=0.5, dtype=np.float32):
    conv = ConvLayerParams(
        rng.normal(size=(out_c, in_c, k, k)).astype(dtype),
        rng.normal(size=out_c).astype(dtype),
        stride=1, padding=(k - 1) // 2,
    )
    return SnnConvLayer(conv=conv, lif=LifParams(noise_std=noise_std), surrogate_width=width)


def _identity_layer(noise_std=0.0, width=0.5):
    """1x1 unit conv so the spike input equals the layer input."""
    conv = ConvLayerParams(np.ones((1, 1, 1, 1), dtype=np.float32),
                           np.zeros(1, dtype=np.float32))
    return SnnConvLayer(conv=conv, lif=LifParams(noise_std=noise_std),
                        surrogate_width=width)


class TestSpikeFn:
    def test_threshold_boundary_spikes(self):
        assert spike_fn(np.float32(1.0), 1.0) == 1.0
        assert spike_fn(np.float32(-1.0), 1.0) == -1.0

    def test_examples(self):
        assert spike_fn(np.float32(1.5), 1.0) == 1.0
        assert spike_fn(np.float32(0.5), 1.0) == 0.0
        assert spike_fn(np.float32(-1.5), 1.0) == -1.0
        assert spike_fn(np.float32(0.0), 1.0) == 0.0

    def test_odd_symmetry_over_sweep(self):
        u = np.linspace(-2.0, 2.0, 401).reshape(1, 1, 1, -1)
        np.testing.assert_array_equal(spike_fn(u, 1.0), -spike_fn(-u, 1.0))


class TestSurrogate:
    def test_height_inside_bands(self):
        assert spike_surrogate(np.float64(1.0), 1.0, 0.5) == 1.0
        assert spike_surrogate(np.float64(-1.3), 1.0, 0.5) == 1.0

    def test_zero_outside_bands(self):
        for u in (0.0, 0.49, 1.51, -0.2, -1.6, 3.0):
            assert spike_surrogate(np.float64(u), 1.0, 0.5) == 0.0

    def test_smoothed_derivative_is_surrogate(self, rng):
        """Central differences of the ramp reproduce the rectangular window."""
        u = rng.uniform(-2.0, 2.0, size=(1, 1, 4, 4))
        u = np.where(np.abs(np.abs(u) - 0.5) < 0.05, 0.0, u)   # avoid band edges
        u = np.where(np.abs(np.abs(u) - 1.5) < 0.05, 0.0, u)
        fd = central_difference(
            lambda uv: float(spike_smoothed(uv, 1.0, 0.5).sum()), u, step=1e-4)
        np.testing.assert_allclose(fd, spike_surrogate(u, 1.0, 0.5), atol=1e-6)

    def test_smoothed_coincides_with_spike_outside_ramp(self):
        u = np.array([[-3.0, -1.6], [0.4, 2.1]]).reshape(1, 1, 2, 2)
        np.testing.assert_array_equal(spike_smoothed(u, 1.0, 0.5), spike_fn(u, 1.0))


class TestSnnForward:
    def test_output_domain_is_ternary(self, rng):
        layer = _layer(rng, in_c=3, out_c=4)
        x = rng.normal(size=(2, 3, 8, 8)).astype(np.float32)
        spikes, _ = snn_forward(layer, x, rng_seed=1, training=True)
        assert set(np.unique(spikes)) <= {-1.0, 0.0, 1.0}

    def test_spike_values_via_identity_conv(self):
        layer = _identity_layer()
        x = np.array([1.5, 0.5, -1.5, 0.0], dtype=np.float32).reshape(1, 1, 1, 4)
        spikes, _ = snn_forward(layer, x)
        np.testing.assert_array_equal(spikes.ravel(), [1.0, 0.0, -1.0, 0.0])

    def test_zero_noise_training_equals_inference(self, rng):
        layer = _layer(rng, noise_std=0.0)
        x = rng.normal(size=(1, 1, 6, 6)).astype(np.float32)
        train_out, _ = snn_forward(layer, x, rng_seed=3, training=True)
        infer_out, _ = snn_forward(layer, x, rng_seed=4, training=False)
        np.testing.assert_array_equal(train_out, infer_out)

    def test_fixed_seed_bit_identical(self, rng):
        layer = _layer(rng)
        x = rng.normal(size=(1, 1, 6, 6)).astype(np.float32)
        a, ca = snn_forward(layer, x, rng_seed=7, training=True)
        b, cb = snn_forward(layer, x, rng_seed=7, training=True)
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(ca.u, cb.u)

    def test_different_seeds_differ(self, rng):
        layer = _layer(rng, noise_std=0.5)
        x = rng.normal(size=(1, 1, 8, 8)).astype(np.float32)
        _, ca = snn_forward(layer, x, rng_seed=1, training=True)
        _, cb = snn_forward(layer, x, rng_seed=2, training=True)
        assert not np.array_equal(ca.u, cb.u)

    def test_noise_draw_statistics(self):
        noise = draw_noise(0, 0, (200, 200), std=0.1)
        assert noise.mean() == pytest.approx(1.0, abs=0.01)
        assert noise.std() == pytest.approx(0.1, abs=0.01)

    def test_invalid_surrogate_width_rejected(self, rng):
        with pytest.raises(ConfigurationError):
            _layer(rng, width=0.0)


class TestSnnBackward:
    def test_zero_grad_out(self, rng):
        layer = _layer(rng)
        x = rng.normal(size=(1, 1, 5, 5)).astype(np.float32)
        _, cache = snn_forward(layer, x, rng_seed=0, training=True)
        gi, gw, gb = snn_backward(layer, cache, np.zeros_like(cache.u))
        assert not gi.any() and not gw.any() and not gb.any()

    def test_local_derivative_at_threshold(self):
        """u exactly at v_th with width 0.5 passes gradient factor 1.0."""
        layer = _identity_layer(width=0.5)
        x = np.full((1, 1, 1, 1), 1.0, dtype=np.float32)
        _, cache = snn_forward(layer, x)
        gi, _, _ = snn_backward(layer, cache, np.ones_like(x))
        assert gi.item() == 1.0

    def test_grad_weight_matches_fd_of_smoothed_forward(self, rng):
        """Analytic grads equal finite differences of the ramp forward at 1e-3."""
        x = rng.uniform(-1.0, 1.0, size=(1, 1, 4, 4))
        layer = _layer(rng, noise_std=0.1, dtype=np.float64)
        r = rng.normal(size=(1, 1, 4, 4))

        _, cache = snn_forward(layer, x, rng_seed=5, training=True, smooth=True)
        gi, gw, gb = snn_backward(layer, cache, r)

        def smoothed_loss_w(wv):
            p = ConvLayerParams(wv, layer.conv.bias, layer.conv.stride, layer.conv.padding)
            lay = SnnConvLayer(conv=p, lif=layer.lif, surrogate_width=layer.surrogate_width)
            out, _ = snn_forward(lay, x, rng_seed=5, training=True, smooth=True)
            return float((out * r).sum())

        fd_w = central_difference(smoothed_loss_w, layer.conv.weight, step=1e-5)
        assert_rel_close(gw, fd_w, rtol=1e-3, atol=1e-7, context="snn grad_weight")

        def smoothed_loss_x(xv):
            out, _ = snn_forward(layer, xv, rng_seed=5, training=True, smooth=True)
            return float((out * r).sum())

        fd_x = central_difference(smoothed_loss_x, x, step=1e-5)
        assert_rel_close(gi, fd_x, rtol=1e-3, atol=1e-7, context="snn grad_input")

    def test_backward_magnitude_bounded(self, rng):
        """Total backward signal is bounded by ||grad_out|| / (2 * width)."""
        for width in (0.25, 0.5, 1.0):
            layer = _identity_layer(width=width)
            u = rng.uniform(-2, 2, size=(1, 1, 8, 8)).astype(np.float32)
            _, cache = snn_forward(layer, u)
            g = rng.normal(size=u.shape).astype(np.float32)
            gi, _, _ = snn_backward(layer, cache, g)
            assert np.abs(gi).sum() <= np.abs(g).sum() / (2 * width) + 1e-5

    def test_cache_shape_mismatch_raises(self, rng):
        layer = _layer(rng)
        x = rng.normal(size=(1, 1, 5, 5)).astype(np.float32)
        _, cache = snn_forward(layer, x)
        with pytest.raises(ShapeMismatchError):
            snn_backward(layer, cache, np.zeros((1, 1, 4, 4), dtype=np.float32))
