"""Training and evaluation loop: batched MSE training with Adam, per-epoch
validation, metrics logging, best-checkpoint tracking, and mask-composited
inference.

The loop is a pure function of (seed, data, config): batch order, mask
draws, and noise draws all derive from labelled seeds, and epoch timing is
recorded only when an explicit clock is injected, so metrics and
checkpoints are bit-reproducible by default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .data import DatasetManifest, MaskSpec, load_image, make_sample
from .errors import ConfigurationError, NumericError, ShapeMismatchError
from .fileio import atomic_write_text
from .network import Model, ModelInput, backward, forward, named_parameters, save_checkpoint, set_parameter
from .seeding import derive_seed, rng_for
from .tensor_ops import AdamState, adam_step, mse_loss

LOSS_MODES = ("full_image", "masked_region")


@dataclass
class TrainConfig:
    """Optimizer and loop hyperparameters."""

    lr: float = 0.001
    batch_size: int = 8
    epochs: int = 20
    seed: int = 0
    loss_on: str = "full_image"
    checkpoint_dir: str | None = None
    metrics_path: str | None = None

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigurationError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if self.loss_on not in LOSS_MODES:
            raise ConfigurationError(f"loss_on must be one of {LOSS_MODES}, got {self.loss_on!r}")


@dataclass
class EpochMetrics:
    """One epoch of bookkeeping.

    ``seconds`` comes from the clock injected into :func:`train`; with no
    clock it stays 0.0 so metrics files are bit-reproducible run to run.
    """

    epoch: int
    train_loss: float
    val_loss: float
    seconds: float = 0.0
    samples: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.train_loss) and self.train_loss >= 0):
            raise NumericError(f"train_loss must be finite and >= 0, got {self.train_loss}")
        if not (math.isfinite(self.val_loss) and self.val_loss >= 0):
            raise NumericError(f"val_loss must be finite and >= 0, got {self.val_loss}")


def batch_loss(pred: np.ndarray, target: np.ndarray, mask: np.ndarray, loss_on: str):
    """MSE over the full image or restricted to masked pixels, with gradient."""
    if loss_on == "full_image":
        return mse_loss(pred, target)
    maskc = np.broadcast_to(mask, pred.shape).astype(np.float64)
    count = maskc.sum()
    diff = (pred.astype(np.float64) - target.astype(np.float64)) * maskc
    loss = float((diff * diff).sum() / count)
    grad = (2.0 / count * diff).astype(pred.dtype)
    return loss, grad


def _make_batches(order: np.ndarray, batch_size: int) -> list[np.ndarray]:
    return [order[i:i + batch_size] for i in range(0, len(order), batch_size)]


def train_on_arrays(
    model: Model,
    train_images: list[np.ndarray],
    val_images: list[np.ndarray],
    mask_spec: MaskSpec,
    config: TrainConfig,
    clock: Callable[[], float] | None = None,
    progress: Callable[[EpochMetrics], None] | None = None,
) -> tuple[Model, list[EpochMetrics]]:
    """Core loop over in-memory images; see :func:`train` for the file-backed entry.

    Training masks are redrawn every epoch (mask index ``epoch * n + i``);
    validation masks stay fixed per sample so losses are comparable across
    epochs.
    """
    if not train_images or not val_images:
        raise ConfigurationError("both train and validation splits must be non-empty")
    states = {
        name: AdamState.for_param(param, lr=config.lr)
        for name, param in named_parameters(model)
    }
    n = len(train_images)
    history: list[EpochMetrics] = []
    best_val = math.inf
    for epoch in range(config.epochs):
        t0 = clock() if clock is not None else 0.0
        order = rng_for(config.seed, "shuffle", epoch).permutation(n)
        losses = []
        for batch_idx, batch in enumerate(_make_batches(order, config.batch_size)):
            samples = [
                make_sample(train_images[i], mask_spec, epoch * n + int(i)) for i in batch
            ]
            inp = ModelInput(
                corrupted=np.concatenate([s.corrupted for s in samples]),
                mask=np.concatenate([s.mask for s in samples]),
            )
            target = np.concatenate([s.ground_truth for s in samples])
            pred, caches = forward(
                model, inp, training=True,
                seed=derive_seed(config.seed, "noise", epoch, batch_idx),
            )
            loss, grad_pred = batch_loss(pred, target, inp.mask, config.loss_on)
            if not math.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {batch_idx}")
            losses.append(loss)
            grads = backward(model, caches, grad_pred)
            params = dict(named_parameters(model))
            for i, g in enumerate(grads):
                for attr, grad in (("weight", g.weight), ("bias", g.bias)):
                    name = f"layer{i}.{attr}"
                    new_param, states[name] = adam_step(params[name], grad, states[name])
                    set_parameter(model, name, new_param)
        val_loss = evaluate_arrays(model, val_images, mask_spec)
        seconds = (clock() - t0) if clock is not None else 0.0
        metrics = EpochMetrics(
            epoch=epoch,
            train_loss=float(np.mean(losses)),
            val_loss=val_loss,
            seconds=seconds,
            samples=n * (epoch + 1),
        )
        history.append(metrics)
        if val_loss < best_val:
            best_val = val_loss
            if config.checkpoint_dir is not None:
                ckpt_dir = Path(config.checkpoint_dir)
                ckpt_dir.mkdir(parents=True, exist_ok=True)
                save_checkpoint(
                    model, ckpt_dir / "best.ckpt",
                    adam_states=states, epoch=epoch, best_val_loss=val_loss,
                )
        if progress is not None:
            progress(metrics)
    if config.metrics_path is not None:
        write_metrics(history, config.metrics_path)
    return model, history


def train(
    model: Model,
    manifest: DatasetManifest,
    mask_spec: MaskSpec,
    config: TrainConfig,
    clock: Callable[[], float] | None = None,
    progress: Callable[[EpochMetrics], None] | None = None,
) -> tuple[Model, list[EpochMetrics]]:
    """Train against a dataset manifest; images load at the manifest resolution."""
    train_paths, val_paths = manifest.paths("train"), manifest.paths("val")
    if not train_paths or not val_paths:
        raise ConfigurationError("manifest must contain both train and val images")
    train_images = [load_image(p, manifest.resolution) for p in train_paths]
    val_images = [load_image(p, manifest.resolution) for p in val_paths]
    return train_on_arrays(model, train_images, val_images, mask_spec, config,
                           clock=clock, progress=progress)


def evaluate_arrays(model: Model, images: list[np.ndarray], mask_spec: MaskSpec) -> float:
    """Mean full-image MSE over samples with fixed per-index masks, inference mode."""
    if not images:
        raise ConfigurationError("evaluation split must be non-empty")
    total = 0.0
    for idx, image in enumerate(images):
        sample = make_sample(image, mask_spec, idx)
        inp = ModelInput(corrupted=sample.corrupted, mask=sample.mask)
        pred, _ = forward(model, inp, training=False)
        loss, _ = mse_loss(pred, sample.ground_truth)
        total += loss
    return total / len(images)


def evaluate(model: Model, manifest: DatasetManifest, split: str, mask_spec: MaskSpec) -> float:
    """Mean full-image MSE over a manifest split."""
    paths = manifest.paths(split)
    if not paths:
        raise ConfigurationError(f"split {split!r} is empty")
    images = [load_image(p, manifest.resolution) for p in paths]
    return evaluate_arrays(model, images, mask_spec)


def inpaint(model: Model, corrupted: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Fill holes with the model prediction; known pixels pass through untouched.

    Composites ``mask * clamp(pred) + (1 - mask) * corrupted``: the
    prediction is clamped to [0, 1] before compositing so unmasked input
    pixels are returned bit-exactly.
    """
    if mask.shape != (corrupted.shape[0], 1) + corrupted.shape[2:]:
        raise ShapeMismatchError(
            f"mask shape {mask.shape} inconsistent with image shape {corrupted.shape}"
        )
    if not np.all((mask == 0) | (mask == 1)):
        raise ConfigurationError("mask values must be exactly 0 or 1")
    zeroed = (corrupted * (1 - mask)).astype(corrupted.dtype)
    pred, _ = forward(model, ModelInput(corrupted=zeroed, mask=mask), training=False)
    filled = np.clip(pred, 0.0, 1.0)
    return (mask * filled + (1 - mask) * corrupted).astype(corrupted.dtype)


def write_metrics(history: list[EpochMetrics], path) -> None:
    """CSV with one row per epoch; floats carry 10 significant digits."""
    lines = ["epoch,train_loss,val_loss,seconds,samples"]
    for m in history:
        lines.append(
            f"{m.epoch},{m.train_loss:.10g},{m.val_loss:.10g},{m.seconds:.10g},{m.samples}"
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_metrics(path) -> list[EpochMetrics]:
    """Parse a metrics CSV back into EpochMetrics rows."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "epoch,train_loss,val_loss,seconds,samples":
        raise ConfigurationError(f"{path}: not a metrics CSV")
    out = []
    for ln in lines[1:]:
        if not ln.strip():
            continue
        e, tr, vl, sec, smp = ln.split(",")
        out.append(EpochMetrics(int(e), float(tr), float(vl), float(sec), int(smp)))
    return out
