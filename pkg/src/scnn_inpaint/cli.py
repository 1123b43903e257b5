"""Command-line interface.

Subcommands wire the pipeline end to end: ``make-dataset`` synthesises a
corpus and manifest, ``train`` fits the network, ``infer`` composites a
prediction into an image's holes, ``eval`` reports a split's mean MSE, and
``neuron-sim`` runs the standalone LIF simulator.

Exit codes: 0 success, 1 I/O failure, 2 configuration/validation error,
3 corrupt data.  Declarative config comes from a flat ``key = value`` file;
command-line flags override file values, and unknown keys are hard errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data as data_mod
from .errors import (
    CheckpointError,
    ConfigurationError,
    ImageFormatError,
    NumericError,
    ShapeMismatchError,
    UnsupportedImageError,
)
from .fileio import atomic_write_text
from .lif import LifParams, simulate_neuron
from .network import NetConfig, build, load_checkpoint
from .seeding import derive_seed
from .training import TrainConfig, evaluate, inpaint, train

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_CORRUPT = 3

MANIFEST_NAME = "manifest.tsv"
METRICS_NAME = "metrics.csv"


@dataclass
class RunConfig:
    """Flat, fully defaulted view of every tunable the CLI exposes."""

    # network
    in_channels: int = 3
    hidden_channels: int = 32
    kernel_size: int = 3
    snn_position: int = 1
    surrogate_width: float = 0.5
    # LIF constants
    v_th: float = 1.0
    v_reset: float = 0.0
    tau_m: float = 40.0
    r_m: float = 1.0
    refractory_ms: float = 1.0
    dt_ms: float = 1.0
    noise_std: float = 0.1
    rate_min_hz: float = 100.0
    rate_max_hz: float = 200.0
    # optimisation
    lr: float = 0.001
    batch_size: int = 8
    epochs: int = 20
    seed: int = 0
    loss_on: str = "full_image"
    # mask synthesis
    num_rects_min: int = 1
    num_rects_max: int = 3
    rect_h_min: float = 0.1
    rect_h_max: float = 0.4
    rect_w_min: float = 0.1
    rect_w_max: float = 0.4
    # data
    val_fraction: float = 0.25
    resolution: int = 32

    @classmethod
    def load(cls, config_path: str | None, overrides: dict | None = None) -> "RunConfig":
        values = {}
        if config_path is not None:
            values.update(cls._parse_file(config_path))
        for key, val in (overrides or {}).items():
            if val is not None:
                values[key] = val
        return cls(**values)

    @classmethod
    def _parse_file(cls, path) -> dict:
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"config file not found: {path}")
        types = {f.name: type(f.default) for f in dataclasses.fields(cls)}
        out = {}
        for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in types:
                raise ConfigurationError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                out[key] = types[key](value)
            except ValueError as exc:
                raise ConfigurationError(
                    f"{path}:{lineno}: bad value for {key!r}: {value!r}"
                ) from exc
        return out

    def lif_params(self) -> LifParams:
        return LifParams(
            v_th=self.v_th, v_reset=self.v_reset, tau_m=self.tau_m, r_m=self.r_m,
            refractory_ms=self.refractory_ms, dt_ms=self.dt_ms, noise_std=self.noise_std,
            rate_min_hz=self.rate_min_hz, rate_max_hz=self.rate_max_hz,
        )

    def net_config(self) -> NetConfig:
        return NetConfig(
            in_channels=self.in_channels, hidden_channels=self.hidden_channels,
            kernel_size=self.kernel_size, snn_position=self.snn_position,
            lif=self.lif_params(), surrogate_width=self.surrogate_width,
            seed=derive_seed(self.seed, "net-init"),
        )

    def mask_spec(self) -> data_mod.MaskSpec:
        return data_mod.MaskSpec(
            num_rects=(self.num_rects_min, self.num_rects_max),
            rect_h=(self.rect_h_min, self.rect_h_max),
            rect_w=(self.rect_w_min, self.rect_w_max),
            seed=derive_seed(self.seed, "masks"),
        )

    def train_config(self, out_dir: Path) -> TrainConfig:
        return TrainConfig(
            lr=self.lr, batch_size=self.batch_size, epochs=self.epochs, seed=self.seed,
            loss_on=self.loss_on, checkpoint_dir=str(out_dir),
            metrics_path=str(out_dir / METRICS_NAME),
        )


def _resolve_manifest(data_dir: str) -> data_mod.DatasetManifest:
    base = Path(data_dir)
    if not base.is_dir():
        raise ConfigurationError(f"data directory not found: {base}")
    manifest_path = base / MANIFEST_NAME
    if not manifest_path.exists():
        raise ConfigurationError(f"no {MANIFEST_NAME} in data directory: {base}")
    manifest = data_mod.read_manifest(manifest_path)
    manifest.entries = [
        (p if Path(p).is_absolute() else str(base / p), s) for p, s in manifest.entries
    ]
    return manifest


def cmd_make_dataset(args) -> int:
    out = Path(args.out)
    paths = data_mod.synth_corpus(args.count, args.resolution, args.seed, out)
    names = [Path(p).name for p in paths]
    if names:
        manifest = data_mod.split_dataset(
            names, args.seed, args.val_fraction, resolution=args.resolution
        )
    else:
        manifest = data_mod.DatasetManifest(entries=[], seed=args.seed,
                                            resolution=args.resolution)
    out.mkdir(parents=True, exist_ok=True)
    data_mod.write_manifest(manifest, out / MANIFEST_NAME)
    print(f"wrote {len(names)} images and {MANIFEST_NAME} to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    run = RunConfig.load(args.config, {"epochs": args.epochs, "seed": args.seed})
    manifest = _resolve_manifest(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = build(run.net_config())

    last = [time.monotonic()]

    def progress(m):
        now = time.monotonic()
        print(
            f"epoch {m.epoch + 1}/{run.epochs} "
            f"train_loss={m.train_loss:.6f} val_loss={m.val_loss:.6f} "
            f"({now - last[0]:.1f}s)"
        )
        last[0] = now

    train(model, manifest, run.mask_spec(), run.train_config(out), progress=progress)
    print(f"wrote {METRICS_NAME} and best.ckpt to {out}")
    return EXIT_OK


def cmd_infer(args) -> int:
    model = load_checkpoint(args.checkpoint)
    image = data_mod.load_image(args.image)
    _, _, h, w = image.shape
    if args.mask is not None:
        mask_img = data_mod.load_image(args.mask)
        if mask_img.shape[2:] != (h, w):
            raise ConfigurationError(
                f"mask dims {mask_img.shape[2:]} do not match image dims {(h, w)}"
            )
        mask = (mask_img[:, :1] > 0.5).astype(np.float32)
    else:
        mask = data_mod.generate_mask(h, w, data_mod.MaskSpec(seed=args.mask_seed), 0)
    result = inpaint(model, image, mask)
    data_mod.save_image(result, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    run = RunConfig.load(args.config, {"seed": args.seed})
    model = load_checkpoint(args.checkpoint)
    manifest = _resolve_manifest(args.data)
    mse = evaluate(model, manifest, args.split, run.mask_spec())
    print(f"mse={mse:.10g}")
    return EXIT_OK


def cmd_neuron_sim(args) -> int:
    params = LifParams(v_th=args.threshold, tau_m=args.tau, dt_ms=args.dt)
    try:
        trace = [float(args.current)] * args.steps
    except ValueError:
        current_path = Path(args.current)
        if not current_path.exists():
            raise ConfigurationError(
                f"--current must be a number or an existing trace file, got {args.current!r}"
            )
        tokens = current_path.read_text(encoding="utf-8").replace(",", " ").split()
        try:
            trace = [float(t) for t in tokens]
        except ValueError as exc:
            raise ConfigurationError(f"{current_path}: non-numeric trace entry") from exc
    if not trace:
        raise ConfigurationError("input current trace is empty")
    v_trace, spike_times = simulate_neuron(trace, params)
    spiked = set(spike_times)
    lines = ["step,v,spiked"]
    lines += [f"{i},{v:.10g},{1 if i in spiked else 0}" for i, v in enumerate(v_trace)]
    atomic_write_text(args.out, "\n".join(lines) + "\n")
    print(f"wrote {args.out} ({len(v_trace)} steps, {len(spike_times)} spikes)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scnn-inpaint",
        description="Hybrid spiking-convolutional image inpainting toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("make-dataset", formatter_class=fmt,
                       help="synthesise a deterministic image corpus and manifest")
    p.add_argument("--count", type=int, default=64, help="number of images to generate")
    p.add_argument("--resolution", type=int, default=32, help="image side length in pixels")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--val-fraction", type=float, default=0.25,
                   help="validation share of the split")
    p.set_defaults(func=cmd_make_dataset)

    p = sub.add_parser("train", formatter_class=fmt,
                       help="train the inpainting network on a dataset directory")
    p.add_argument("--config", default=None, help="key = value config file")
    p.add_argument("--data", required=True, help="dataset directory with manifest.tsv")
    p.add_argument("--epochs", type=int, default=None,
                   help="override epochs (default: config value, 20)")
    p.add_argument("--seed", type=int, default=None,
                   help="override master seed (default: config value, 0)")
    p.add_argument("--out", required=True, help="output directory for metrics and checkpoints")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", formatter_class=fmt,
                       help="inpaint one image with a trained checkpoint")
    p.add_argument("--checkpoint", required=True, help="checkpoint file from train")
    p.add_argument("--image", required=True, help="input image (pgm/ppm/png)")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--mask", default=None,
                       help="mask image file; pixels > 0.5 count as missing")
    group.add_argument("--mask-seed", type=int, default=0,
                       help="seed for a generated mask when --mask is absent")
    p.add_argument("--out", required=True, help="output image path")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", formatter_class=fmt,
                       help="report mean MSE of a checkpoint over a manifest split")
    p.add_argument("--checkpoint", required=True, help="checkpoint file from train")
    p.add_argument("--data", required=True, help="dataset directory with manifest.tsv")
    p.add_argument("--split", default="val", help="manifest split to evaluate (train or val)")
    p.add_argument("--config", default=None, help="key = value config file")
    p.add_argument("--seed", type=int, default=None,
                   help="override master seed (default: config value, 0)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("neuron-sim", formatter_class=fmt,
                       help="simulate a single LIF neuron and write step,v,spiked CSV")
    p.add_argument("--current", required=True,
                   help="constant input current, or a file of current values")
    p.add_argument("--steps", type=int, default=100,
                   help="number of steps for a constant current")
    p.add_argument("--dt", type=float, default=1.0, help="integration step, ms")
    p.add_argument("--tau", type=float, default=40.0, help="membrane time constant, ms")
    p.add_argument("--threshold", type=float, default=1.0, help="spike threshold")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_neuron_sim)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ShapeMismatchError, UnsupportedImageError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CheckpointError, ImageFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except (NumericError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
