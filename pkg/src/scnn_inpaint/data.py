"""Dataset machinery: image codecs, rectangle-union mask synthesis,
sample corruption, deterministic train/validation splitting, and a
procedurally generated corpus so the whole pipeline runs without
downloads.

Binary PGM (P5) and PPM (P6) are decoded and encoded natively and are the
bit-exact baseline; PNG goes through Pillow.  Everything downstream of the
file bytes is a pure function of (bytes, seed), so re-running any stage
reproduces identical tensors and identical files.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ImageFormatError, UnsupportedImageError
from .fileio import atomic_write_bytes, atomic_write_text
from .seeding import rng_for
from .tensor_ops import DTYPE, check_tensor4

MASK_RETRY_LIMIT = 16


# --- image io ---------------------------------------------------------------


def _parse_netpbm(raw: bytes, path) -> np.ndarray:
    """Decode binary PGM/PPM bytes to a (h, w, channels) float array scaled by maxval."""
    magic = raw[:2]
    channels = {b"P5": 1, b"P6": 3}.get(magic)
    if channels is None:
        raise UnsupportedImageError(
            f"{path}: unsupported netpbm variant {magic!r} (only binary P5/P6)"
        )
    # Header tokens: width, height, maxval; '#' comments run to end of line.
    tokens: list[int] = []
    pos = 2
    while len(tokens) < 3:
        if pos >= len(raw):
            raise ImageFormatError(f"{path}: malformed header, ended before width/height/maxval")
        ch = raw[pos:pos + 1]
        if ch == b"#":
            nl = raw.find(b"\n", pos)
            pos = len(raw) if nl == -1 else nl + 1
        elif ch.isspace():
            pos += 1
        elif ch.isdigit():
            end = pos
            while end < len(raw) and raw[end:end + 1].isdigit():
                end += 1
            tokens.append(int(raw[pos:end]))
            pos = end
        else:
            raise ImageFormatError(f"{path}: malformed header near byte {pos}: {ch!r}")
    w, h, maxval = tokens
    if w <= 0 or h <= 0 or not 0 < maxval < 65536:
        raise ImageFormatError(f"{path}: malformed header values w={w} h={h} maxval={maxval}")
    pos += 1  # single whitespace byte after maxval
    bytes_per = 1 if maxval < 256 else 2
    need = w * h * channels * bytes_per
    payload = raw[pos:pos + need]
    if len(payload) != need:
        raise ImageFormatError(
            f"{path}: payload truncated, expected {need} bytes, got {len(payload)}"
        )
    dt = ">u2" if bytes_per == 2 else np.uint8
    pixels = np.frombuffer(payload, dtype=dt).reshape(h, w, channels).astype(np.float64)
    return pixels / maxval


def _encode_netpbm(img_hwc: np.ndarray, maxval: int = 255) -> bytes:
    """Encode a float (h, w, 1|3) array in [0, 1] as binary PGM/PPM bytes."""
    h, w, c = img_hwc.shape
    magic = {1: b"P5", 3: b"P6"}[c]
    header = magic + f"\n{w} {h}\n{maxval}\n".encode("ascii")
    quantized = np.rint(np.clip(img_hwc, 0.0, 1.0) * maxval).astype(np.uint8)
    return header + quantized.tobytes()


def _resize_nearest(img_hwc: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = img_hwc.shape[:2]
    rows = np.minimum(np.arange(out_h) * h // out_h, h - 1)
    cols = np.minimum(np.arange(out_w) * w // out_w, w - 1)
    return img_hwc[rows][:, cols]


def load_image(path, resolution: int | None = None) -> np.ndarray:
    """Read PGM/PPM/PNG into a (1, 3, h, w) float32 tensor in [0, 1].

    Grayscale sources are replicated to three channels; when ``resolution``
    is given the image is nearest-neighbour resized to (resolution,
    resolution).
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"image file not found: {path}")
    suffix = path.suffix.lower()
    if suffix in (".pgm", ".ppm"):
        img = _parse_netpbm(path.read_bytes(), path)
    elif suffix == ".png":
        img = _load_png(path)
    else:
        raise UnsupportedImageError(f"{path}: unsupported image format {suffix!r}")
    if img.shape[2] == 1:
        img = np.repeat(img, 3, axis=2)
    if resolution is not None:
        if resolution < 1:
            raise ConfigurationError(f"resolution must be >= 1, got {resolution}")
        img = _resize_nearest(img, resolution, resolution)
    tensor = img.transpose(2, 0, 1)[None].astype(DTYPE)
    return check_tensor4(tensor, str(path))


def _load_png(path) -> np.ndarray:
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as im:
            rgb = im.convert("RGB")
            return np.asarray(rgb, dtype=np.float64) / 255.0
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"{path}: malformed PNG: {exc}") from exc


def save_image(tensor: np.ndarray, path) -> None:
    """Write a (1, c, h, w) tensor in [0, 1] as PGM/PPM/PNG chosen by extension.

    PGM output stores the channel mean, so replicated-gray tensors
    round-trip exactly.
    """
    check_tensor4(tensor, "image tensor")
    path = Path(path)
    img = np.clip(tensor[0].transpose(1, 2, 0).astype(np.float64), 0.0, 1.0)
    suffix = path.suffix.lower()
    if suffix == ".ppm":
        atomic_write_bytes(path, _encode_netpbm(img))
    elif suffix == ".pgm":
        atomic_write_bytes(path, _encode_netpbm(img.mean(axis=2, keepdims=True)))
    elif suffix == ".png":
        from PIL import Image

        quantized = np.rint(img * 255).astype(np.uint8)
        import io

        buf = io.BytesIO()
        Image.fromarray(quantized, mode="RGB").save(buf, format="PNG")
        atomic_write_bytes(path, buf.getvalue())
    else:
        raise UnsupportedImageError(f"{path}: unsupported output format {suffix!r}")


# --- masks and samples ------------------------------------------------------


@dataclass(frozen=True)
class MaskSpec:
    """Rectangle-union mask synthesis configuration.

    Rect counts are an inclusive integer range; rect sizes are inclusive
    ranges of fractions of each image dimension.
    """

    num_rects: tuple[int, int] = (1, 3)
    rect_h: tuple[float, float] = (0.1, 0.4)
    rect_w: tuple[float, float] = (0.1, 0.4)
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.num_rects
        if not (1 <= lo <= hi):
            raise ConfigurationError(f"num_rects range invalid: {self.num_rects}")
        for name, (flo, fhi) in (("rect_h", self.rect_h), ("rect_w", self.rect_w)):
            if not (0 < flo <= fhi <= 1):
                raise ConfigurationError(f"{name} fractions must lie in (0, 1]: {(flo, fhi)}")


def generate_mask(h: int, w: int, spec: MaskSpec, index: int) -> np.ndarray:
    """Union of sampled axis-aligned rectangles as a (1, 1, h, w) binary mask.

    Deterministic in (spec.seed, index).  Draws are retried a bounded
    number of times until the mask has both masked and unmasked pixels;
    a spec that cannot satisfy that raises a configuration error.
    """
    min_rh = max(1, round(spec.rect_h[0] * h))
    min_rw = max(1, round(spec.rect_w[0] * w))
    if min_rh > h or min_rw > w:
        raise ConfigurationError(
            f"mask spec impossible: smallest rect {min_rh}x{min_rw} exceeds image {h}x{w}"
        )
    rng = rng_for(spec.seed, "mask", index)
    for _ in range(MASK_RETRY_LIMIT):
        mask = np.zeros((1, 1, h, w), dtype=DTYPE)
        n_rects = int(rng.integers(spec.num_rects[0], spec.num_rects[1] + 1))
        for _ in range(n_rects):
            rh = min(h, max(1, round(float(rng.uniform(*spec.rect_h)) * h)))
            rw = min(w, max(1, round(float(rng.uniform(*spec.rect_w)) * w)))
            top = int(rng.integers(0, h - rh + 1))
            left = int(rng.integers(0, w - rw + 1))
            mask[0, 0, top:top + rh, left:left + rw] = 1.0
        if 0 < mask.sum() < h * w:
            return mask
    raise ConfigurationError(
        f"mask spec cannot produce a mask with both regions on a {h}x{w} image "
        f"after {MASK_RETRY_LIMIT} attempts"
    )


@dataclass
class Sample:
    """(ground truth, mask, corrupted) triple with exact corruption algebra."""

    ground_truth: np.ndarray
    mask: np.ndarray
    corrupted: np.ndarray

    def __post_init__(self):
        check_tensor4(self.ground_truth, "ground_truth")
        if not np.all((self.mask == 0) | (self.mask == 1)):
            raise ConfigurationError("mask values must be exactly 0 or 1")
        ones, size = self.mask.sum(), self.mask.size
        if ones == 0 or ones == size:
            raise ConfigurationError("mask must contain both masked and unmasked pixels")
        if not np.array_equal(self.corrupted, self.ground_truth * (1 - self.mask)):
            raise ConfigurationError("corrupted != ground_truth * (1 - mask)")


def make_sample(image: np.ndarray, spec: MaskSpec, index: int) -> Sample:
    """Corrupt ``image`` with the mask at ``index``; masked pixels become 0."""
    check_tensor4(image, "image")
    _, _, h, w = image.shape
    mask = generate_mask(h, w, spec, index)
    corrupted = image * (1 - mask)
    return Sample(ground_truth=image, mask=mask, corrupted=corrupted)


# --- dataset manifest -------------------------------------------------------


@dataclass
class DatasetManifest:
    """Ordered (path, split) assignment plus the seed and resolution it came from."""

    entries: list = field(default_factory=list)  # (path str, "train" | "val")
    seed: int = 0
    resolution: int = 32

    def paths(self, split: str) -> list[str]:
        if split not in ("train", "val"):
            raise ConfigurationError(f"unknown split {split!r} (expected 'train' or 'val')")
        return [p for p, s in self.entries if s == split]


def _split_fraction(path: str, seed: int) -> float:
    digest = hashlib.sha256(f"{seed}:{path}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") / 2.0**64


def split_dataset(paths, seed: int, val_fraction: float, resolution: int = 32) -> DatasetManifest:
    """Assign each path to train/val by hashing (seed, path); both splits non-empty."""
    paths = [str(p) for p in paths]
    if not 0 < val_fraction < 1:
        raise ConfigurationError(f"val_fraction must be in (0, 1), got {val_fraction}")
    if len(paths) < 2:
        raise ConfigurationError(f"need at least 2 images to split, got {len(paths)}")
    fractions = {p: _split_fraction(p, seed) for p in paths}
    assignment = {p: ("val" if fractions[p] < val_fraction else "train") for p in paths}
    splits = set(assignment.values())
    if "val" not in splits:
        assignment[min(paths, key=fractions.get)] = "val"
    if "train" not in splits:
        assignment[max(paths, key=fractions.get)] = "train"
    return DatasetManifest(
        entries=[(p, assignment[p]) for p in paths], seed=seed, resolution=resolution
    )


def write_manifest(manifest: DatasetManifest, path) -> None:
    lines = [f"seed={manifest.seed}\tresolution={manifest.resolution}"]
    lines += [f"{p}\t{s}" for p, s in manifest.entries]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_manifest(path) -> DatasetManifest:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ConfigurationError(f"{path}: manifest is empty")
    header = dict(item.split("=", 1) for item in lines[0].split("\t"))
    try:
        seed, resolution = int(header["seed"]), int(header["resolution"])
    except (KeyError, ValueError) as exc:
        raise ConfigurationError(f"{path}: malformed manifest header: {lines[0]!r}") from exc
    entries = []
    for ln in lines[1:]:
        p, _, s = ln.rpartition("\t")
        if s not in ("train", "val") or not p:
            raise ConfigurationError(f"{path}: malformed manifest line: {ln!r}")
        entries.append((p, s))
    return DatasetManifest(entries=entries, seed=seed, resolution=resolution)


# --- synthetic corpus -------------------------------------------------------

_SYNTH_KINDS = ("gradient", "circles", "checkerboard")


def synth_image(resolution: int, seed: int, index: int) -> np.ndarray:
    """Analytic float image for corpus entry ``index`` (before quantization).

    Cycles through linear gradients, filled circles, and checkerboards with
    seeded colours; returns a (1, 3, r, r) tensor in [0, 1].
    """
    kind = _SYNTH_KINDS[index % len(_SYNTH_KINDS)]
    rng = rng_for(seed, "synth", index)
    r = resolution
    yy, xx = np.mgrid[0:r, 0:r].astype(np.float64)
    if kind == "gradient":
        c0, c1 = rng.uniform(0, 1, 3), rng.uniform(0, 1, 3)
        horizontal = bool(rng.integers(0, 2))
        t = (xx if horizontal else yy) / max(r - 1, 1)
        img = c0[:, None, None] + (c1 - c0)[:, None, None] * t[None]
    elif kind == "circles":
        background = rng.uniform(0, 1, 3)
        img = np.broadcast_to(background[:, None, None], (3, r, r)).copy()
        for _ in range(int(rng.integers(2, 5))):
            colour = rng.uniform(0, 1, 3)
            cy, cx = rng.uniform(0, r, 2)
            radius = rng.uniform(r / 8, r / 3)
            inside = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2
            img[:, inside] = colour[:, None]
    else:
        c0, c1 = rng.uniform(0, 1, 3), rng.uniform(0, 1, 3)
        cell = int(rng.integers(2, max(3, r // 4)))
        parity = ((yy // cell + xx // cell) % 2).astype(bool)
        img = np.where(parity[None], c1[:, None, None], c0[:, None, None])
    return img[None].astype(DTYPE)


def synth_corpus(count: int, resolution: int, seed: int, out_dir) -> list[str]:
    """Write ``count`` deterministic PPM images into ``out_dir``; returns their paths."""
    if count < 0:
        raise ConfigurationError(f"count must be >= 0, got {count}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(count):
        img = synth_image(resolution, seed, i)
        path = out_dir / f"img_{i:04d}.ppm"
        atomic_write_bytes(path, _encode_netpbm(img[0].transpose(1, 2, 0).astype(np.float64)))
        paths.append(str(path))
    return paths
