"""Six-layer hybrid inpainting network: five standard conv+ReLU layers and
one spiking conv layer, assembled per configuration, with end-to-end
forward/backward and a versioned binary checkpoint format.

The network input is the corrupted image concatenated with its binary mask
along channels; the final layer has neither ReLU nor spike so predictions
cover the whole normalized pixel range.
"""

from __future__ import annotations

import dataclasses
import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    CheckpointError,
    CheckpointVersionError,
    ConfigurationError,
    ShapeMismatchError,
)
from .fileio import atomic_write_bytes
from .lif import LifParams
from .seeding import rng_for
from .spiking import SnnConvLayer, SnnForwardCache, snn_backward, snn_forward
from .tensor_ops import (
    DTYPE,
    ConvLayerParams,
    check_finite,
    check_tensor4,
    conv2d_backward,
    conv2d_forward,
    relu,
    relu_backward,
)

NUM_LAYERS = 6

CHECKPOINT_MAGIC = b"SCNNCKPT"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetConfig:
    """Architecture hyperparameters; every field has a default."""

    in_channels: int = 3
    hidden_channels: int = 32
    kernel_size: int = 3
    snn_position: int = 1
    lif: LifParams = field(default_factory=LifParams)
    surrogate_width: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.in_channels < 1:
            raise ConfigurationError(f"in_channels must be >= 1, got {self.in_channels}")
        if self.hidden_channels < 1:
            raise ConfigurationError(f"hidden_channels must be >= 1, got {self.hidden_channels}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigurationError(f"kernel_size must be odd, got {self.kernel_size}")
        if not 0 <= self.snn_position < NUM_LAYERS:
            raise ConfigurationError(
                f"snn_position must be in 0..{NUM_LAYERS - 1}, got {self.snn_position}"
            )
        if self.surrogate_width <= 0:
            raise ConfigurationError(
                f"surrogate_width must be positive, got {self.surrogate_width}"
            )

    def channel_plan(self) -> list[tuple[int, int]]:
        """(in, out) channel pairs per layer; layer 0 also sees the mask channel."""
        plan = [(self.in_channels + 1, self.hidden_channels)]
        plan += [(self.hidden_channels, self.hidden_channels)] * (NUM_LAYERS - 2)
        plan.append((self.hidden_channels, self.in_channels))
        return plan

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        d = dict(d)
        d["lif"] = LifParams(**d["lif"])
        return cls(**d)


@dataclass
class ModelInput:
    """Corrupted image batch plus its binary mask (1 = missing pixel)."""

    corrupted: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        check_tensor4(self.corrupted, "corrupted")
        check_tensor4(self.mask, "mask")
        n, _, h, w = self.corrupted.shape
        if self.mask.shape != (n, 1, h, w):
            raise ShapeMismatchError(
                f"mask shape {self.mask.shape} must be ({n}, 1, {h}, {w})"
            )
        if not np.all((self.mask == 0) | (self.mask == 1)):
            raise ConfigurationError("mask values must be exactly 0 or 1")
        if np.any(self.corrupted * self.mask != 0):
            raise ConfigurationError("corrupted pixels under the mask must be zero")


@dataclass
class Model:
    """Built network: an ordered stack of conv / spiking-conv layers."""

    config: NetConfig
    layers: list

    def astype(self, dtype) -> "Model":
        return Model(self.config, [layer.astype(dtype) for layer in self.layers])


@dataclass
class LayerGrads:
    weight: np.ndarray
    bias: np.ndarray


def build(config: NetConfig) -> Model:
    """Assemble the six-layer stack with He-initialised weights and zero biases.

    Identical seeds produce bit-identical parameters.
    """
    k = config.kernel_size
    pad = (k - 1) // 2
    layers = []
    for i, (c_in, c_out) in enumerate(config.channel_plan()):
        fan_in = c_in * k * k
        rng = rng_for(config.seed, "init", i)
        weight = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(c_out, c_in, k, k)).astype(DTYPE)
        conv = ConvLayerParams(weight=weight, bias=np.zeros(c_out, dtype=DTYPE),
                               stride=1, padding=pad)
        if i == config.snn_position:
            layers.append(SnnConvLayer(conv=conv, lif=config.lif,
                                       surrogate_width=config.surrogate_width))
        else:
            layers.append(conv)
    return Model(config=config, layers=layers)


def _applies_relu(config: NetConfig, i: int) -> bool:
    return i != config.snn_position and i != NUM_LAYERS - 1


def forward(
    model: Model,
    input: ModelInput,
    training: bool = False,
    seed: int = 0,
    smooth_spike: bool = False,
) -> tuple[np.ndarray, list]:
    """Run the stack on (corrupted ++ mask); returns prediction and per-layer caches.

    ``smooth_spike`` swaps the hard spike for its surrogate antiderivative;
    gradient checks difference that variant.
    """
    cfg = model.config
    first = model.layers[0]
    dtype = (first.conv if isinstance(first, SnnConvLayer) else first).weight.dtype
    x = np.concatenate([input.corrupted, input.mask], axis=1).astype(dtype, copy=False)
    caches = []
    for i, layer in enumerate(model.layers):
        if isinstance(layer, SnnConvLayer):
            x, cache = snn_forward(
                layer, x, rng_seed=seed, training=training, counter=i, smooth=smooth_spike
            )
            caches.append(cache)
        else:
            z = conv2d_forward(x, layer)
            if _applies_relu(cfg, i):
                caches.append((x, z))
                x = relu(z)
            else:
                caches.append((x, None))
                x = z
    if x.shape != input.corrupted.shape:
        raise ShapeMismatchError(
            f"prediction shape {x.shape} != input shape {input.corrupted.shape}"
        )
    check_finite(x, "prediction")
    return x, caches


def backward(model: Model, caches: list, grad_pred: np.ndarray) -> list[LayerGrads]:
    """Chain gradients back through every layer; one LayerGrads per layer."""
    if len(caches) != len(model.layers):
        raise ShapeMismatchError(
            f"got {len(caches)} caches for {len(model.layers)} layers"
        )
    grads: list[LayerGrads] = [None] * len(model.layers)
    g = grad_pred
    for i in reversed(range(len(model.layers))):
        layer = model.layers[i]
        if isinstance(layer, SnnConvLayer):
            if not isinstance(caches[i], SnnForwardCache):
                raise ShapeMismatchError(f"cache {i} does not match spiking layer {i}")
            g, gw, gb = snn_backward(layer, caches[i], g)
        else:
            x, z = caches[i]
            if z is not None:
                g = relu_backward(z, g)
            g, gw, gb = conv2d_backward(x, layer, g)
        grads[i] = LayerGrads(weight=gw, bias=gb)
    return grads


def named_parameters(model: Model) -> list[tuple[str, np.ndarray]]:
    """Stable (name, array) listing of every learnable tensor."""
    out = []
    for i, layer in enumerate(model.layers):
        conv = layer.conv if isinstance(layer, SnnConvLayer) else layer
        out.append((f"layer{i}.weight", conv.weight))
        out.append((f"layer{i}.bias", conv.bias))
    return out


def set_parameter(model: Model, name: str, value: np.ndarray) -> None:
    layer_part, attr = name.split(".")
    i = int(layer_part.removeprefix("layer"))
    layer = model.layers[i]
    conv = layer.conv if isinstance(layer, SnnConvLayer) else layer
    current = getattr(conv, attr)
    if value.shape != current.shape:
        raise ShapeMismatchError(
            f"parameter {name}: shape {value.shape} != expected {current.shape}"
        )
    setattr(conv, attr, value)


# --- checkpoint format -----------------------------------------------------
#
# magic (8 bytes) | version u32 LE | header_len u32 LE | header JSON UTF-8 |
# raw float32 LE tensor payloads in header manifest order | crc32 u32 LE of
# every preceding byte.


def _checkpoint_bytes(
    config: NetConfig,
    tensors: list[tuple[str, np.ndarray]],
    adam_meta: dict | None,
    epoch: int | None,
    best_val_loss: float | None,
) -> bytes:
    header = {
        "config": config.to_dict(),
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in tensors],
        "adam": adam_meta,
        "epoch": epoch,
        "best_val_loss": best_val_loss,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [
        CHECKPOINT_MAGIC,
        np.uint32(CHECKPOINT_VERSION).tobytes(),
        np.uint32(len(header_bytes)).tobytes(),
        header_bytes,
    ]
    for _, arr in tensors:
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + np.uint32(zlib.crc32(body) & 0xFFFFFFFF).tobytes()


def save_checkpoint(
    model: Model,
    path,
    adam_states: dict | None = None,
    epoch: int | None = None,
    best_val_loss: float | None = None,
) -> None:
    """Serialize parameters (and optional Adam state) to ``path`` atomically."""
    tensors = list(named_parameters(model))
    adam_meta = None
    if adam_states is not None:
        names = sorted(adam_states)
        first = adam_states[names[0]]
        adam_meta = {
            "lr": first.lr,
            "beta1": first.beta1,
            "beta2": first.beta2,
            "epsilon": first.epsilon,
            "t": {n: adam_states[n].t for n in names},
        }
        for n in names:
            tensors.append((f"adam.{n}.m", adam_states[n].m))
            tensors.append((f"adam.{n}.v", adam_states[n].v))
    atomic_write_bytes(path, _checkpoint_bytes(model.config, tensors, adam_meta,
                                               epoch, best_val_loss))


@dataclass
class CheckpointContents:
    """Everything stored in a checkpoint file."""

    config: NetConfig
    params: dict
    adam: dict | None
    epoch: int | None
    best_val_loss: float | None


def read_checkpoint(path) -> CheckpointContents:
    """Parse and fully validate a checkpoint file."""
    raw = Path(path).read_bytes()
    base = 8 + 4 + 4
    if len(raw) < base + 4:
        raise CheckpointError(f"{path}: truncated checkpoint (only {len(raw)} bytes)")
    if raw[:8] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes, not a checkpoint file")
    stored_crc = int(np.frombuffer(raw[-4:], dtype="<u4")[0])
    if stored_crc != (zlib.crc32(raw[:-4]) & 0xFFFFFFFF):
        raise CheckpointError(f"{path}: checksum mismatch, file is corrupt")
    version = int(np.frombuffer(raw[8:12], dtype="<u4")[0])
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version} unsupported (expected {CHECKPOINT_VERSION})"
        )
    header_len = int(np.frombuffer(raw[12:16], dtype="<u4")[0])
    if base + header_len + 4 > len(raw):
        raise CheckpointError(f"{path}: truncated checkpoint header")
    try:
        header = json.loads(raw[base:base + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint header: {exc}") from exc

    offset = base + header_len
    payload_end = len(raw) - 4
    arrays = {}
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        nbytes = count * 4
        if offset + nbytes > payload_end:
            raise CheckpointError(f"{path}: truncated tensor payload for {entry['name']}")
        arr = np.frombuffer(raw[offset:offset + nbytes], dtype="<f4").reshape(entry["shape"])
        arrays[entry["name"]] = arr.astype(DTYPE)
        offset += nbytes
    if offset != payload_end:
        raise CheckpointError(f"{path}: {payload_end - offset} unexpected trailing payload bytes")

    params = {n: a for n, a in arrays.items() if not n.startswith("adam.")}
    adam = None
    if header.get("adam") is not None:
        adam = dict(header["adam"])
        adam["m"] = {n: arrays[f"adam.{n}.m"] for n in adam["t"]}
        adam["v"] = {n: arrays[f"adam.{n}.v"] for n in adam["t"]}
    return CheckpointContents(
        config=NetConfig.from_dict(header["config"]),
        params=params,
        adam=adam,
        epoch=header.get("epoch"),
        best_val_loss=header.get("best_val_loss"),
    )


def load_checkpoint(path) -> Model:
    """Rebuild a Model from a checkpoint; round-trips forward outputs bit-exactly."""
    contents = read_checkpoint(path)
    model = build(contents.config)
    expected = {name for name, _ in named_parameters(model)}
    if expected != set(contents.params):
        raise CheckpointError(
            f"{path}: parameter names do not match architecture: "
            f"missing {sorted(expected - set(contents.params))}, "
            f"unexpected {sorted(set(contents.params) - expected)}"
        )
    for name, value in contents.params.items():
        set_parameter(model, name, value)
    return model
