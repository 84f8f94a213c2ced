"""One-shot retrieval evaluation, attention preprocessing, augmentations,
and the handcrafted baseline descriptor.

The benchmark is a CSV manifest of (image, mask, superclass, subclass) rows.
Top-1 subclass accuracy retrieves within the query's superclass; Top-1 all
retrieves against the whole index. Accuracy is averaged inside each class
first, then unweighted over classes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence

import cv2
import numpy as np
from scipy import ndimage

from .errors import BenchmarkIndexError, EmptyMaskError, NormError
from .image_io import read_png_float
from .similarity import DESCRIPTOR_DIM, Descriptor

ATTENTION_MODES = ("none", "crop", "mask", "crop_mask")
NETWORK_INPUT_SIZE = 224


# ---------------------------------------------------------------------------
# attention preprocessing

def apply_attention(image: np.ndarray, mask: np.ndarray, mode: str,
                    out_size: Optional[int] = None, crop_pad: float = 0.0) -> tuple:
    """Focus the input on the material region.

    crop: tight mask bounding box (optionally padded by ``crop_pad`` x box
    size), both image and mask cropped; mask: out-of-mask pixels blacked;
    crop_mask: mask then crop; none: identity. When ``out_size`` is given,
    cropped outputs are resampled to (out_size, out_size).
    Returns (image, mask).
    """
    if mode not in ATTENTION_MODES:
        raise ValueError(f"unknown attention mode {mode!r}; pick one of {ATTENTION_MODES}")
    m = np.asarray(mask) > 0
    if not m.any():
        raise EmptyMaskError("attention preprocessing needs a nonempty mask")
    img = np.asarray(image, dtype=np.float64)
    if mode == "none":
        return img, m.astype(np.uint8) * 255
    if mode in ("mask", "crop_mask"):
        img = img * m[:, :, None]
    if mode in ("crop", "crop_mask"):
        ys, xs = np.nonzero(m)
        y0, y1 = ys.min(), ys.max() + 1
        x0, x1 = xs.min(), xs.max() + 1
        if crop_pad > 0:
            py = int(round((y1 - y0) * crop_pad))
            px = int(round((x1 - x0) * crop_pad))
            y0, y1 = max(0, y0 - py), min(img.shape[0], y1 + py)
            x0, x1 = max(0, x0 - px), min(img.shape[1], x1 + px)
        img = img[y0:y1, x0:x1]
        m = m[y0:y1, x0:x1]
        if out_size is not None:
            img = cv2.resize(img, (out_size, out_size), interpolation=cv2.INTER_AREA)
            m = cv2.resize(m.astype(np.uint8), (out_size, out_size),
                           interpolation=cv2.INTER_NEAREST).astype(bool)
    return np.clip(img, 0.0, 1.0), m.astype(np.uint8) * 255


# ---------------------------------------------------------------------------
# augmentations

@dataclass(frozen=True)
class AugmentationConfig:
    """Per-augmentation fire probabilities and parameter ranges."""

    blur_probability: float = 0.1
    brightness_probability: float = 0.1
    decolor_probability: float = 0.1
    noise_probability: float = 0.1
    blur_sigma: tuple = (0.5, 2.0)
    brightness_factor: tuple = (0.5, 1.5)
    desaturation: tuple = (0.3, 1.0)     # 1.0 = fully grayscale
    noise_std: tuple = (0.01, 0.08)

    def __post_init__(self):
        for p in (self.blur_probability, self.brightness_probability,
                  self.decolor_probability, self.noise_probability):
            if not (0.0 <= p <= 1.0):
                raise ValueError("probabilities must lie in [0, 1]")


def augment(image: np.ndarray, config: Optional[AugmentationConfig] = None,
            seed: int = 0) -> np.ndarray:
    """Camera-artifact augmentations: Gaussian smoothing, brightening or
    darkening, partial-to-full decoloring, and additive noise.

    Each fires independently with its configured probability; everything is
    deterministic per seed and the result is clamped to [0, 1].
    """
    config = config or AugmentationConfig()
    rng = np.random.default_rng(seed)
    fire = rng.uniform(size=4)
    img = np.asarray(image, dtype=np.float64).copy()
    if fire[0] < config.blur_probability:
        sigma = rng.uniform(*config.blur_sigma)
        img = ndimage.gaussian_filter(img, sigma=(sigma, sigma, 0))
    if fire[1] < config.brightness_probability:
        img = img * rng.uniform(*config.brightness_factor)
    if fire[2] < config.decolor_probability:
        blend = rng.uniform(*config.desaturation)
        gray = img @ np.array([0.299, 0.587, 0.114])
        img = img * (1.0 - blend) + gray[:, :, None] * blend
    if fire[3] < config.noise_probability:
        std = rng.uniform(*config.noise_std)
        img = img + rng.normal(0.0, std, size=img.shape)
    return np.clip(img, 0.0, 1.0)


# ---------------------------------------------------------------------------
# baseline descriptor

_JOINT_BINS = 6
_CHANNEL_BINS = 8
_GRAD_BINS = 16


def _soft_joint_histogram(pixels: np.ndarray, bins: int) -> np.ndarray:
    """Trilinearly-shared RGB histogram so gradual color shifts move mass
    between neighboring bins smoothly."""
    hist = np.zeros((bins,) * 3)
    x = np.clip(pixels, 0.0, 1.0) * (bins - 1)
    lo = np.floor(x).astype(int)
    hi = np.minimum(lo + 1, bins - 1)
    f = x - lo
    for dr in (0, 1):
        for dg in (0, 1):
            for db in (0, 1):
                idx = (np.where(dr, hi[:, 0], lo[:, 0]),
                       np.where(dg, hi[:, 1], lo[:, 1]),
                       np.where(db, hi[:, 2], lo[:, 2]))
                w = (np.where(dr, f[:, 0], 1 - f[:, 0])
                     * np.where(dg, f[:, 1], 1 - f[:, 1])
                     * np.where(db, f[:, 2], 1 - f[:, 2]))
                np.add.at(hist, idx, w)
    return hist.ravel()


def baseline_descriptor(image: np.ndarray, mask: np.ndarray,
                        image_ref: str = "") -> Descriptor:
    """Training-free 512-d descriptor from masked color statistics.

    Blocks: soft joint RGB histogram, per-channel histograms, a gradient
    orientation histogram, and local variance / luminance statistics, each
    L1-normalized and weighted, then zero-padded to 512 and L2-normalized.
    """
    m = np.asarray(mask) > 0
    if not m.any():
        raise EmptyMaskError("baseline descriptor needs a nonempty mask")
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    pixels = img[m]

    joint = _soft_joint_histogram(pixels, _JOINT_BINS)
    joint /= max(joint.sum(), 1e-12)

    chans = []
    for c in range(3):
        h, _ = np.histogram(pixels[:, c], bins=_CHANNEL_BINS, range=(0.0, 1.0))
        chans.append(h.astype(np.float64))
    chan = np.concatenate(chans)
    chan /= max(chan.sum(), 1e-12)

    lum = img @ np.array([0.299, 0.587, 0.114])
    gy, gx = np.gradient(lum)
    mag = np.hypot(gx, gy)[m]
    ang = np.arctan2(gy, gx)[m] % math.pi
    grad, _ = np.histogram(ang, bins=_GRAD_BINS, range=(0.0, math.pi), weights=mag)
    grad = grad / max(grad.sum(), 1e-12) if grad.sum() > 1e-12 else grad

    local_var = ndimage.uniform_filter(lum**2, size=3) - ndimage.uniform_filter(lum, size=3) ** 2
    lv = np.clip(local_var[m], 0.0, None)
    stats = np.array([
        lum[m].mean(), lum[m].std(),
        pixels[:, 0].mean(), pixels[:, 1].mean(), pixels[:, 2].mean(),
        math.sqrt(max(lv.mean(), 0.0)), math.sqrt(max(lv.max(), 0.0)),
        pixels.std(),
    ])

    vec = np.concatenate([joint, 0.5 * chan, 0.5 * grad, 0.25 * stats])
    out = np.zeros(DESCRIPTOR_DIM)
    out[: len(vec)] = vec[:DESCRIPTOR_DIM]
    norm = np.linalg.norm(out)
    if norm < 1e-12:
        raise NormError("degenerate baseline descriptor")
    return Descriptor(values=out / norm, image_ref=image_ref)


# ---------------------------------------------------------------------------
# benchmark index + metrics

@dataclass(frozen=True)
class BenchmarkEntry:
    image: str
    mask: str
    superclass: str
    subclass: str

    @property
    def class_key(self) -> str:
        return f"{self.superclass}/{self.subclass}"


@dataclass(frozen=True)
class BenchmarkIndex:
    entries: tuple
    notes: str = ""

    def __post_init__(self):
        counts: Dict[str, int] = {}
        for e in self.entries:
            counts[e.class_key] = counts.get(e.class_key, 0) + 1
        small = sorted(k for k, v in counts.items() if v < 2)
        if small:
            raise BenchmarkIndexError(
                f"every subclass needs >= 2 images for leave-one-out; too small: {small}")

    @property
    def class_keys(self) -> list:
        seen = []
        for e in self.entries:
            if e.class_key not in seen:
                seen.append(e.class_key)
        return seen


def load_benchmark_csv(path: str | Path) -> BenchmarkIndex:
    """Read an `image,mask,superclass,subclass` manifest; paths stay
    relative to the CSV's directory."""
    path = Path(path)
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"image", "mask", "superclass", "subclass"}
        if reader.fieldnames is None or not required.issubset(set(reader.fieldnames)):
            raise BenchmarkIndexError(
                f"manifest must have columns {sorted(required)}, got {reader.fieldnames}")
        for row in reader:
            entries.append(BenchmarkEntry(
                image=row["image"], mask=row["mask"],
                superclass=row["superclass"], subclass=row["subclass"]))
    if not entries:
        raise BenchmarkIndexError(f"empty benchmark manifest: {path}")
    return BenchmarkIndex(entries=tuple(entries))


def load_entry_arrays(index_path: str | Path, entry: BenchmarkEntry) -> tuple:
    base = Path(index_path).parent
    img = read_png_float(base / entry.image, srgb=True)
    mask = read_png_float(base / entry.mask) > 0.5
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    if mask.ndim == 3:
        mask = mask[:, :, 0]
    if not mask.any():
        raise EmptyMaskError(f"empty mask for benchmark entry {entry.image}")
    return img, mask


@dataclass
class EvalResult:
    per_class: dict
    mean: float
    metric: str

    def to_meta(self) -> dict:
        return {"metric": self.metric, "mean": self.mean, "per_class": self.per_class}


def _descriptor_matrix(index: BenchmarkIndex, descriptors: Dict[str, Descriptor]) -> np.ndarray:
    rows = []
    for e in index.entries:
        if e.image not in descriptors:
            raise KeyError(f"missing descriptor for benchmark image {e.image!r}")
        rows.append(descriptors[e.image].values)
    return np.stack(rows)


def _top1(index: BenchmarkIndex, descriptors: Dict[str, Descriptor],
          restrict_superclass: bool, metric: str) -> EvalResult:
    values = _descriptor_matrix(index, descriptors)
    sims = values @ values.T
    n = len(index.entries)
    sup = np.array([e.superclass for e in index.entries])
    keys = np.array([e.class_key for e in index.entries])
    hits: Dict[str, list] = {k: [] for k in index.class_keys}
    for i in range(n):
        if restrict_superclass:
            gallery = np.nonzero((sup == sup[i]) & (np.arange(n) != i))[0]
        else:
            gallery = np.nonzero(np.arange(n) != i)[0]
        # ties break to the lowest index: argmax returns the first maximum
        best = gallery[int(np.argmax(sims[i, gallery]))]
        hits[keys[i]].append(1.0 if keys[best] == keys[i] else 0.0)
    per_class = {k: float(np.mean(v)) for k, v in hits.items()}
    mean = float(np.mean(list(per_class.values())))
    return EvalResult(per_class=per_class, mean=mean, metric=metric)


def top1_subclass(index: BenchmarkIndex, descriptors: Dict[str, Descriptor]) -> EvalResult:
    """Leave-one-out Top-1 with the gallery restricted to the query's
    superclass; per-class accuracies plus their unweighted mean."""
    return _top1(index, descriptors, restrict_superclass=True, metric="top1_subclass")


def top1_all(index: BenchmarkIndex, descriptors: Dict[str, Descriptor]) -> EvalResult:
    """Leave-one-out Top-1 against the entire index minus the query."""
    return _top1(index, descriptors, restrict_superclass=False, metric="top1_all")
