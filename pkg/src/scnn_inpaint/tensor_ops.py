"""Dense numerical kernel: rank-4 tensors, 2-D convolution with analytic
gradients, ReLU, MSE loss, and Adam.

Tensors are plain ``numpy.ndarray`` values of shape (batch, channels,
height, width).  The package stores everything as float32; convolution and
loss reductions accumulate in float64 internally and round the result back
to the input dtype, so float64 arrays pass through unchanged (which is what
the gradient-check tests rely on).  All functions are pure: inputs are
never mutated and outputs are freshly allocated.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, NumericError, ShapeMismatchError

DTYPE = np.float32


def as_tensor4(data, name: str = "tensor") -> np.ndarray:
    """Coerce ``data`` to a float32 (n, c, h, w) array, validating rank and finiteness."""
    arr = np.asarray(data, dtype=DTYPE)
    if arr.ndim != 4:
        raise ShapeMismatchError(f"{name} must be rank-4 (n, c, h, w), got shape {arr.shape}")
    check_finite(arr, name)
    return arr


def check_tensor4(arr: np.ndarray, name: str = "tensor") -> np.ndarray:
    """Validate an existing array as a rank-4 tensor without copying or casting."""
    if not isinstance(arr, np.ndarray) or arr.ndim != 4:
        raise ShapeMismatchError(
            f"{name} must be a rank-4 ndarray (n, c, h, w), got "
            f"{type(arr).__name__} with shape {getattr(arr, 'shape', None)}"
        )
    check_finite(arr, name)
    return arr


def check_finite(arr: np.ndarray, name: str = "tensor") -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains NaN or Inf")


@dataclass
class ConvLayerParams:
    """Learnable weights/bias plus geometry for one convolution.

    weight has shape (out_c, in_c, kh, kw) with odd kh, kw; bias has shape
    (out_c,).  Padding is symmetric zero-padding.
    """

    weight: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        self.weight = np.asarray(self.weight)
        self.bias = np.asarray(self.bias)
        if self.weight.ndim != 4:
            raise ShapeMismatchError(f"conv weight must be rank-4, got shape {self.weight.shape}")
        out_c, _, kh, kw = self.weight.shape
        if kh % 2 == 0 or kw % 2 == 0:
            raise ConfigurationError(f"kernel dims must be odd, got {kh}x{kw}")
        if self.bias.shape != (out_c,):
            raise ShapeMismatchError(
                f"bias shape {self.bias.shape} inconsistent with {out_c} output channels"
            )
        if self.stride < 1:
            raise ConfigurationError(f"stride must be positive, got {self.stride}")
        if self.padding < 0:
            raise ConfigurationError(f"padding must be non-negative, got {self.padding}")
        check_finite(self.weight, "conv weight")
        check_finite(self.bias, "conv bias")

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def kernel_size(self) -> tuple[int, int]:
        return self.weight.shape[2], self.weight.shape[3]

    def astype(self, dtype) -> "ConvLayerParams":
        return replace(self, weight=self.weight.astype(dtype), bias=self.bias.astype(dtype))


def conv_output_hw(h: int, w: int, params: ConvLayerParams) -> tuple[int, int]:
    """Spatial output size of :func:`conv2d_forward`; raises if it is not a positive integer."""
    kh, kw = params.kernel_size
    s, p = params.stride, params.padding
    num_h, num_w = h + 2 * p - kh, w + 2 * p - kw
    if num_h < 0 or num_w < 0 or num_h % s or num_w % s:
        raise ConfigurationError(
            f"conv geometry invalid: input {h}x{w}, kernel {kh}x{kw}, "
            f"stride {s}, padding {p} gives no integer positive output size"
        )
    return num_h // s + 1, num_w // s + 1


def _im2col(x_padded: np.ndarray, kh: int, kw: int, stride: int, out_h: int, out_w: int) -> np.ndarray:
    """Extract sliding patches as a (n, c*kh*kw, out_h*out_w) matrix (copy, C-order)."""
    n, c = x_padded.shape[:2]
    sn, sc, sh, sw = x_padded.strides
    patches = np.lib.stride_tricks.as_strided(
        x_padded,
        shape=(n, c, kh, kw, out_h, out_w),
        strides=(sn, sc, sh, sw, stride * sh, stride * sw),
        writeable=False,
    )
    return patches.reshape(n, c * kh * kw, out_h * out_w).copy()


def _col2im(cols: np.ndarray, n: int, c: int, hp: int, wp: int,
            kh: int, kw: int, stride: int, out_h: int, out_w: int) -> np.ndarray:
    """Scatter-add columns back to a padded image; inverse map of :func:`_im2col`."""
    x = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    cols = cols.reshape(n, c, kh, kw, out_h, out_w)
    for i in range(kh):
        for j in range(kw):
            x[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride] += cols[:, :, i, j]
    return x


def _pad_nchw(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def conv2d_forward(input: np.ndarray, params: ConvLayerParams) -> np.ndarray:
    """Cross-correlate ``input`` with ``params.weight`` and add per-channel bias.

    Output shape is (n, out_c, h', w') with h', w' from :func:`conv_output_hw`.
    Accumulation runs in float64; the result is rounded to the input dtype.
    """
    check_tensor4(input, "conv input")
    n, c, h, w = input.shape
    if c != params.in_channels:
        raise ShapeMismatchError(
            f"conv input has {c} channels but weight expects {params.in_channels}"
        )
    out_h, out_w = conv_output_hw(h, w, params)
    kh, kw = params.kernel_size

    x = _pad_nchw(input, params.padding).astype(np.float64, copy=False)
    cols = _im2col(x, kh, kw, params.stride, out_h, out_w)
    w_mat = params.weight.reshape(params.out_channels, -1).astype(np.float64, copy=False)
    out = np.matmul(w_mat, cols) + params.bias.astype(np.float64, copy=False)[:, None]
    out = out.reshape(n, params.out_channels, out_h, out_w).astype(input.dtype)
    check_finite(out, "conv output")
    return out


def conv2d_backward(
    input: np.ndarray, params: ConvLayerParams, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Analytic gradients of :func:`conv2d_forward` w.r.t. input, weight, and bias."""
    check_tensor4(input, "conv input")
    n, c, h, w = input.shape
    out_h, out_w = conv_output_hw(h, w, params)
    expected = (n, params.out_channels, out_h, out_w)
    if grad_out.shape != expected:
        raise ShapeMismatchError(f"grad_out shape {grad_out.shape} != forward output {expected}")

    kh, kw = params.kernel_size
    p, s = params.padding, params.stride
    x = _pad_nchw(input, p).astype(np.float64, copy=False)
    cols = _im2col(x, kh, kw, s, out_h, out_w)
    go = grad_out.reshape(n, params.out_channels, -1).astype(np.float64, copy=False)
    w_mat = params.weight.reshape(params.out_channels, -1).astype(np.float64, copy=False)

    grad_bias = go.sum(axis=(0, 2))
    grad_weight = np.einsum("nof,ncf->oc", go, cols).reshape(params.weight.shape)
    grad_cols = np.matmul(w_mat.T, go)
    grad_x = _col2im(grad_cols, n, c, h + 2 * p, w + 2 * p, kh, kw, s, out_h, out_w)
    if p:
        grad_x = grad_x[:, :, p:-p, p:-p]

    grad_input = grad_x.astype(input.dtype)
    check_finite(grad_input, "conv grad_input")
    return (
        grad_input,
        grad_weight.astype(params.weight.dtype),
        grad_bias.astype(params.bias.dtype),
    )


def relu(input: np.ndarray) -> np.ndarray:
    """Elementwise max(0, x)."""
    check_tensor4(input, "relu input")
    return np.maximum(input, 0)


def relu_backward(input: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Pass gradient where input > 0; the subgradient at exactly 0 is 0."""
    if grad_out.shape != input.shape:
        raise ShapeMismatchError(
            f"relu grad_out shape {grad_out.shape} != input shape {input.shape}"
        )
    return np.where(input > 0, grad_out, 0).astype(input.dtype)


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean over all elements of (pred - target)**2 and its gradient w.r.t. pred."""
    check_tensor4(pred, "pred")
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"pred shape {pred.shape} != target shape {target.shape}")
    diff = pred.astype(np.float64) - target.astype(np.float64)
    count = diff.size
    loss = float(np.mean(diff * diff))
    grad = (2.0 / count * diff).astype(pred.dtype)
    if not np.isfinite(loss):
        raise NumericError("mse loss is not finite")
    return loss, grad


@dataclass
class AdamState:
    """Per-parameter Adam accumulators and hyperparameters."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_param(cls, param: np.ndarray, lr: float = 0.001, **kwargs) -> "AdamState":
        return cls(m=np.zeros_like(param), v=np.zeros_like(param), lr=lr, **kwargs)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; returns the new parameter and state.

    Elementwise arithmetic stays in the parameter dtype with a fixed
    operation order, so repeated runs are bitwise reproducible.
    """
    if grad.shape != param.shape or state.m.shape != param.shape:
        raise ShapeMismatchError(
            f"adam shapes disagree: param {param.shape}, grad {grad.shape}, m {state.m.shape}"
        )
    check_finite(grad, "adam grad")
    dt = param.dtype.type
    t = state.t + 1
    b1, b2 = dt(state.beta1), dt(state.beta2)
    m = b1 * state.m + (dt(1) - b1) * grad
    v = b2 * state.v + (dt(1) - b2) * (grad * grad)
    m_hat = m / (dt(1) - b1 ** dt(t))
    v_hat = v / (dt(1) - b2 ** dt(t))
    new_param = param - dt(state.lr) * m_hat / (np.sqrt(v_hat) + dt(state.epsilon))
    check_finite(new_param, "adam param")
    return new_param, replace(state, m=m, v=v, t=t)
