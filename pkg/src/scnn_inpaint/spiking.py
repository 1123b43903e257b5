"""Spiking convolutional layer: convolution, multiplicative Gaussian noise,
ternary spike activation, and a rectangular surrogate gradient.

The activation maps the (noisy) convolution response u to signed spikes:
+1 where u >= v_th, -1 where u <= -v_th, 0 between.  The hard nonlinearity
has no useful derivative, so the backward pass substitutes a rectangular
window of height 1/(2*width) centred on both thresholds.
:func:`spike_smoothed` is the exact antiderivative of that window (a
piecewise-linear ramp) and exists so gradient checks can difference a
forward pass whose true derivative equals the surrogate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ShapeMismatchError
from .lif import LifParams
from .seeding import rng_for
from .tensor_ops import ConvLayerParams, check_tensor4, conv2d_backward, conv2d_forward


@dataclass
class SnnConvLayer:
    """Convolution parameters plus the LIF constants the layer consumes.

    Only ``lif.v_th`` (spike threshold) and ``lif.noise_std`` act inside
    the layer; the full membrane dynamics live in :mod:`scnn_inpaint.lif`.
    """

    conv: ConvLayerParams
    lif: LifParams
    surrogate_width: float = 0.5

    def __post_init__(self):
        if self.surrogate_width <= 0:
            raise ConfigurationError(
                f"surrogate_width must be positive, got {self.surrogate_width}"
            )

    def astype(self, dtype) -> "SnnConvLayer":
        return SnnConvLayer(self.conv.astype(dtype), self.lif, self.surrogate_width)


@dataclass
class SnnForwardCache:
    """Values stashed by :func:`snn_forward` for the backward pass."""

    input: np.ndarray
    u: np.ndarray  # post-noise convolution response
    noise: np.ndarray  # multiplier actually applied (all ones outside training)


def spike_fn(u, v_th: float):
    """Ternary spike code: +1 for u >= v_th, -1 for u <= -v_th, else 0."""
    u = np.asarray(u)
    return (u >= v_th).astype(u.dtype) - (u <= -v_th).astype(u.dtype)


def spike_surrogate(u, v_th: float, width: float):
    """Rectangular surrogate derivative: 1/(2*width) where ||u| - v_th| < width."""
    u = np.asarray(u)
    band = np.abs(np.abs(u) - v_th) < width
    return band.astype(u.dtype) / u.dtype.type(2 * width)


def spike_smoothed(u, v_th: float, width: float):
    """Piecewise-linear ramp whose derivative is :func:`spike_surrogate`.

    Odd in u; ramps from 0 to +/-1 across [v_th - width, v_th + width].
    Coincides with :func:`spike_fn` outside the ramp bands (for
    width < v_th, which the default configuration satisfies).
    """
    u = np.asarray(u)
    ramp = np.clip((np.abs(u) - (v_th - width)) / (2 * width), 0.0, 1.0)
    return (np.sign(u) * ramp).astype(u.dtype)


def draw_noise(rng_seed: int, counter: int, shape, std: float, dtype=np.float32) -> np.ndarray:
    """Seed-deterministic mean-1 Gaussian multipliers for one forward call."""
    rng = rng_for(rng_seed, "snn-noise", counter)
    return rng.normal(loc=1.0, scale=std, size=shape).astype(dtype)


def snn_forward(
    layer: SnnConvLayer,
    input: np.ndarray,
    rng_seed: int = 0,
    training: bool = False,
    counter: int = 0,
    smooth: bool = False,
) -> tuple[np.ndarray, SnnForwardCache]:
    """Convolve, optionally perturb with multiplicative noise, then spike.

    Outputs take values in {-1, 0, +1} (or the smoothed ramp when
    ``smooth`` is set, used only by gradient checks).  With a fixed seed
    the call is bit-reproducible; inference mode applies no noise.
    """
    check_tensor4(input, "snn input")
    u = conv2d_forward(input, layer.conv)
    if training and layer.lif.noise_std > 0:
        noise = draw_noise(rng_seed, counter, u.shape, layer.lif.noise_std, dtype=u.dtype)
        u = u * noise
    else:
        noise = np.ones_like(u)
    if smooth:
        spikes = spike_smoothed(u, layer.lif.v_th, layer.surrogate_width)
    else:
        spikes = spike_fn(u, layer.lif.v_th)
    return spikes, SnnForwardCache(input=input, u=u, noise=noise)


def snn_backward(
    layer: SnnConvLayer, cache: SnnForwardCache, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Backward pass through spike, noise, and convolution.

    The spike is differentiated with the rectangular surrogate evaluated at
    the cached post-noise response; the noise multiplier is treated as a
    constant factor.
    """
    if grad_out.shape != cache.u.shape:
        raise ShapeMismatchError(
            f"grad_out shape {grad_out.shape} != cached response shape {cache.u.shape}"
        )
    grad_u = grad_out * spike_surrogate(cache.u, layer.lif.v_th, layer.surrogate_width)
    grad_conv = grad_u * cache.noise
    return conv2d_backward(cache.input, layer.conv, grad_conv)
