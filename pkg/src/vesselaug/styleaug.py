"""PixMix-style photometric mixing with uncertainty perturbation.

Images are float64 arrays of shape (H, W, 3) with values in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DimensionMismatch, NoMixers, UnknownOp

OPS = ("brightness", "contrast", "gamma", "posterize", "solarize", "equalize")

DEFAULT_OP_RANGES: dict[str, tuple[float, float]] = {
    "brightness": (-0.3, 0.3),
    "contrast": (-0.5, 0.5),
    "gamma": (0.5, 2.0),
    "posterize": (3, 7),
    "solarize": (0.5, 1.0),
    "equalize": (0.0, 1.0),
}


@dataclass(frozen=True)
class StyleConfig:
    max_rounds: int = 4
    mixing_ratio: float = 0.5
    perturb_prob: float = 0.5
    photoaug_ops: dict[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_OP_RANGES))
    sigma_floor: float = 1e-6
    seed: int = 0
    # draw a fresh mixing ratio in [0, 1] at every step instead of using mixing_ratio
    resample_ratio: bool = False

    def __post_init__(self):
        if self.max_rounds < 0:
            raise ValueError("max_rounds must be >= 0")
        if not 0 <= self.mixing_ratio <= 1:
            raise ValueError("mixing_ratio must lie in [0, 1]")
        if not 0 <= self.perturb_prob <= 1:
            raise ValueError("perturb_prob must lie in [0, 1]")
        if not self.sigma_floor > 0:
            raise ValueError("sigma_floor must be > 0")
        unknown = set(self.photoaug_ops) - set(OPS)
        if unknown:
            raise UnknownOp(f"unknown photometric ops: {sorted(unknown)}")
        if not self.photoaug_ops:
            raise ValueError("photoaug_ops must not be empty")


class ChannelStats(NamedTuple):
    mean: np.ndarray
    std: np.ndarray


def _as_rgb(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {img.shape}")
    return img


def _equalize_channel(ch: np.ndarray) -> np.ndarray:
    q = np.clip(np.floor(ch * 255.0 + 0.5), 0, 255).astype(np.int64)
    hist = np.bincount(q.ravel(), minlength=256)
    cdf = np.cumsum(hist)
    nonzero = cdf[hist > 0]
    cdf_min = nonzero[0]
    total = cdf[-1]
    if total == cdf_min:
        return ch.copy()
    lut = np.clip(np.round((cdf - cdf_min) / (total - cdf_min) * 255.0), 0, 255) / 255.0
    return lut[q]


def photoaug(img: np.ndarray, op: str, magnitude: float) -> np.ndarray:
    """Apply one photometric transform.

    ``magnitude`` means: brightness/contrast -- relative change (0 is identity);
    gamma -- exponent; posterize -- bits kept; solarize -- inversion threshold
    (pixels strictly above it are inverted); equalize -- blend weight toward the
    equalized image.
    """
    x = _as_rgb(img)
    if op == "brightness":
        out = x * (1.0 + magnitude)
    elif op == "contrast":
        mean = x.mean()
        out = (x - mean) * (1.0 + magnitude) + mean
    elif op == "gamma":
        out = np.power(x, magnitude)
    elif op == "posterize":
        bits = int(np.clip(round(magnitude), 1, 8))
        q = np.clip(np.floor(x * 255.0 + 0.5), 0, 255).astype(np.uint8)
        shift = 8 - bits
        out = ((q >> shift) << shift) / 255.0
    elif op == "solarize":
        out = np.where(x > magnitude, 1.0 - x, x)
    elif op == "equalize":
        eq = np.stack([_equalize_channel(x[..., c]) for c in range(3)], axis=-1)
        out = (1.0 - magnitude) * x + magnitude * eq
    else:
        raise UnknownOp(f"unknown photometric op {op!r}")
    return np.clip(out, 0.0, 1.0)


def random_photoaug(img: np.ndarray, ops: dict[str, tuple[float, float]], rng: np.random.Generator) -> np.ndarray:
    names = sorted(ops)
    op = names[int(rng.integers(len(names)))]
    lo, hi = ops[op]
    return photoaug(img, op, float(rng.uniform(lo, hi)))


def channel_stats(img: np.ndarray) -> ChannelStats:
    """Per-channel population mean and standard deviation."""
    x = _as_rgb(img)
    mean = x.mean(axis=(0, 1))
    std = np.sqrt(((x - mean) ** 2).mean(axis=(0, 1)))
    # flat channels get exact stats; summation would leave rounding residue
    flat = x.min(axis=(0, 1)) == x.max(axis=(0, 1))
    mean = np.where(flat, x.reshape(-1, 3)[0], mean)
    std = np.where(flat, 0.0, std)
    return ChannelStats(mean, std)


def uncertainty_perturb(img: np.ndarray, eps1, eps2, sigma_floor: float = 1e-6) -> np.ndarray:
    """Re-normalize each channel to a Gaussian-jittered mean/std.

    Per channel, with population stats mu, sigma:
    beta = mu * (1 + eps1), gamma = sigma * (1 + eps2), and
    out = (x - mu) / max(sigma, sigma_floor) * gamma + beta, clamped to [0, 1].
    """
    x = _as_rgb(img)
    mu, sigma = channel_stats(x)
    eps1 = np.broadcast_to(np.asarray(eps1, dtype=np.float64), (3,))
    eps2 = np.broadcast_to(np.asarray(eps2, dtype=np.float64), (3,))
    beta = mu + eps1 * mu
    gamma = sigma + eps2 * sigma
    # affine form keeps zero eps an exact identity
    scale = gamma / np.maximum(sigma, sigma_floor)
    offset = beta - scale * mu
    return np.clip(x * scale + offset, 0.0, 1.0)


def mix(a: np.ndarray, b: np.ndarray, delta: float, kind: str) -> np.ndarray:
    a = _as_rgb(a)
    b = _as_rgb(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    if kind == "add":
        out = (1.0 - delta) * a + delta * b
    elif kind == "multiply":
        # numpy already takes 0 ** 0 == 1
        out = np.power(a, 1.0 - delta) * np.power(b, delta)
    else:
        raise ValueError(f"unknown mix kind {kind!r}")
    return np.clip(out, 0.0, 1.0)


class MixStep(NamedTuple):
    source: str  # "photoaug" or "mixer"
    kind: str
    perturbed: bool
    delta: float


def pixmix_trace(x: np.ndarray, mixers: Sequence[np.ndarray], cfg: StyleConfig) -> tuple[np.ndarray, list[MixStep]]:
    """Run the mixing chain and also return a record of every step."""
    x = np.clip(_as_rgb(x), 0.0, 1.0)
    if len(mixers) == 0:
        raise NoMixers("at least one mixing image is required")
    for z in mixers:
        if np.shape(z) != x.shape:
            raise DimensionMismatch(f"mixer {np.shape(z)} vs image {x.shape}")
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed & (2**64 - 1)))
    ops = cfg.photoaug_ops

    current = random_photoaug(x, ops, rng) if rng.integers(2) == 0 else x
    steps = int(rng.integers(cfg.max_rounds + 1))
    trace = []
    for _ in range(steps):
        if rng.integers(2) == 0:
            x_mix, source = random_photoaug(x, ops, rng), "photoaug"
        else:
            x_mix, source = np.clip(_as_rgb(mixers[int(rng.integers(len(mixers)))]), 0.0, 1.0), "mixer"
        kind = ("add", "multiply")[int(rng.integers(2))]
        perturbed = bool(rng.uniform() < cfg.perturb_prob)
        if perturbed:
            eps = rng.standard_normal((2, 3))
            x_mix = uncertainty_perturb(x_mix, eps[0], eps[1], cfg.sigma_floor)
        delta = float(rng.uniform()) if cfg.resample_ratio else cfg.mixing_ratio
        current = mix(current, x_mix, delta, kind)
        trace.append(MixStep(source, kind, perturbed, delta))
    return current, trace


def pixmix(x: np.ndarray, mixers: Sequence[np.ndarray], cfg: StyleConfig) -> np.ndarray:
    return pixmix_trace(x, mixers, cfg)[0]
