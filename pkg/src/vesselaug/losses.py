"""Forward evaluation of the mask-to-image GAN and segmentation losses.

Two sign conventions are available.  ``"nll"`` (default) writes every term as a
non-negative negative log-likelihood, lower is better.  ``"as_printed"``
flips the sign of the generator adversarial term and the paired fake term:

=================  ============================  ==========================
term               nll                           as_printed
=================  ============================  ==========================
adv (generator)    -mean(log D(G(m)))            +mean(log D(G(m)))
d_real             -mean(log D(real))            -mean(log D(real))
d_fake_paired      -mean(log(1 - D(fake)))       +mean(log(1 - D(fake)))
d_fake_unpaired    -mean(log(1 - D(fake)))       -mean(log(1 - D(fake)))
=================  ============================  ==========================
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyList

SCORE_EPS = 1e-7
CONVENTIONS = ("nll", "as_printed")


@dataclass(frozen=True)
class LossWeights:
    lambda_l1: float = 100.0
    lambda_adv: float = 0.2
    lambda_1: float = 0.3
    lambda_gp: float = 10.0

    def __post_init__(self):
        for name in ("lambda_l1", "lambda_adv", "lambda_1", "lambda_gp"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


class DiscriminatorComponents(NamedTuple):
    d_real: float
    d_fake_paired: float
    d_fake_unpaired: float


def clamp_scores(scores, eps: float = SCORE_EPS) -> np.ndarray:
    return np.clip(np.asarray(scores, dtype=np.float64), eps, 1.0 - eps)


def _check_convention(convention: str) -> None:
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")


def l1_consistency(gen, real) -> float:
    gen = np.asarray(gen, dtype=np.float64)
    real = np.asarray(real, dtype=np.float64)
    if gen.shape != real.shape:
        raise DimensionMismatch(f"{gen.shape} vs {real.shape}")
    return float(np.mean(np.abs(gen - real)))


def adv_generator(d_scores, convention: str = "nll") -> float:
    _check_convention(convention)
    val = float(np.mean(np.log(clamp_scores(d_scores))))
    return -val if convention == "nll" else val


def generator_total(l1: float, adv_paired: float, adv_unpaired: float, w: LossWeights = LossWeights()) -> float:
    return w.lambda_l1 * l1 + w.lambda_adv * adv_paired + w.lambda_adv * adv_unpaired


def discriminator_components(
    real_scores, fake_paired_scores, fake_unpaired_scores, convention: str = "nll"
) -> DiscriminatorComponents:
    _check_convention(convention)
    d_real = -float(np.mean(np.log(clamp_scores(real_scores))))
    fake_p = -float(np.mean(np.log1p(-clamp_scores(fake_paired_scores))))
    fake_u = -float(np.mean(np.log1p(-clamp_scores(fake_unpaired_scores))))
    if convention == "as_printed":
        fake_p = -fake_p
    return DiscriminatorComponents(d_real, fake_p, fake_u)


def discriminator_total(
    components: Sequence[float], gp_paired: float, gp_unpaired: float, w: LossWeights = LossWeights()
) -> float:
    d_real, d_fake_paired, d_fake_unpaired = components
    return w.lambda_1 * (d_real + d_fake_paired + d_fake_unpaired) + w.lambda_gp * (gp_paired + gp_unpaired)


def multiscale_aggregate(score_maps: Sequence) -> float:
    """Sum over scales of each discriminator's mean score."""
    if len(score_maps) == 0:
        raise EmptyList("need at least one score map")
    return float(sum(np.mean(np.asarray(s, dtype=np.float64)) for s in score_maps))


def bce_segmentation(pred, gt) -> float:
    p = clamp_scores(pred)
    y = np.asarray(gt, dtype=np.float64)
    if p.shape != y.shape:
        raise DimensionMismatch(f"{p.shape} vs {y.shape}")
    return -float(np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


def bce_segmentation_grad(pred, gt) -> np.ndarray:
    """d(bce)/d(pred) = (p - y) / (p (1 - p)) / N, evaluated at the clamped scores."""
    p = clamp_scores(pred)
    y = np.asarray(gt, dtype=np.float64)
    if p.shape != y.shape:
        raise DimensionMismatch(f"{p.shape} vs {y.shape}")
    return (p - y) / (p * (1.0 - p)) / p.size
