"""All training objectives and their weighted aggregation.

Supervised terms: binary cross-entropy for saliency maps against RGB-source
masks, L1 for depth maps against RGB-D-source depth. Adversarial terms push
unsupervised-source representations toward the supervised-source label; the
discriminators are trained on the opposite assignment. Domain routing is
carried explicitly so a miswired loss fails loudly instead of silently
training on the wrong source.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from .config import Domain, LossWeights

_BCE_EPS = 1e-7


class DomainRoutingError(ValueError):
    """A loss component was computed on the wrong source dataset."""


def _check_shapes(pred, target):
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")


def bce_map_loss(pred, target) -> torch.Tensor:
    """Mean pixelwise binary cross-entropy; pred is a probability map."""
    _check_shapes(pred, target)
    if pred.min() < 0 or pred.max() > 1:
        raise ValueError("bce_map_loss expects predictions in [0, 1]")
    p = pred.clamp(_BCE_EPS, 1 - _BCE_EPS)
    return -(target * p.log() + (1 - target) * (1 - p).log()).mean()


def l1_map_loss(pred, target) -> torch.Tensor:
    _check_shapes(pred, target)
    return (pred - target).abs().mean()


def discriminator_loss(sup_logits, unsup_logits) -> torch.Tensor:
    """Patch BCE with supervised source labeled 0, unsupervised labeled 1."""
    return (F.binary_cross_entropy_with_logits(sup_logits, torch.zeros_like(sup_logits))
            + F.binary_cross_entropy_with_logits(unsup_logits, torch.ones_like(unsup_logits)))


def adversarial_loss(unsup_logits) -> torch.Tensor:
    """Generator-side loss: unsupervised-source patches pushed toward label 0."""
    return F.binary_cross_entropy_with_logits(unsup_logits, torch.zeros_like(unsup_logits))


# which source each generator-loss component must be computed on
EXPECTED_DOMAINS = {
    "init_s": Domain.RGB_SOURCE,
    "fin_s": Domain.RGB_SOURCE,
    "adv_d": Domain.RGB_SOURCE,
    "init_d": Domain.RGBD_SOURCE,
    "fin_d": Domain.RGBD_SOURCE,
    "adv_s": Domain.RGBD_SOURCE,
}


@dataclass
class GeneratorLossParts:
    """The six generator-loss components plus their source-domain provenance.

    Inactive components (under ablations) stay at 0.0 and keep their default
    provenance tag.
    """

    init_s: torch.Tensor | float = 0.0
    init_d: torch.Tensor | float = 0.0
    fin_s: torch.Tensor | float = 0.0
    fin_d: torch.Tensor | float = 0.0
    adv_s: torch.Tensor | float = 0.0
    adv_d: torch.Tensor | float = 0.0
    domains: dict = field(default_factory=lambda: dict(EXPECTED_DOMAINS))

    def components(self) -> dict:
        return {name: getattr(self, name) for name in EXPECTED_DOMAINS}


def total_generator_loss(parts: GeneratorLossParts, weights: LossWeights):
    """Weighted six-term objective minimized by the prediction model."""
    for name, expected in EXPECTED_DOMAINS.items():
        actual = parts.domains.get(name)
        if actual is not expected:
            raise DomainRoutingError(
                f"{name} must be computed on {expected.name}, got "
                f"{actual.name if actual is not None else None}")
    w = weights
    return (w.lambda_s * parts.fin_s
            + w.lambda_d * parts.fin_d
            + w.lambda_init * w.lambda_s * parts.init_s
            + w.lambda_init * w.lambda_d * parts.init_d
            + w.lambda_adv_s * parts.adv_s
            + w.lambda_adv_d * parts.adv_d)


def total_discriminator_loss(ds_loss, dt_loss):
    return ds_loss + dt_loss


LOSS_FIELDS = ("init_s", "init_d", "fin_s", "fin_d", "adv_s", "adv_d",
               "disc_s", "disc_d", "total_G", "total_D")


@dataclass
class LossRecord:
    """Per-step scalar log. total_G/total_D recompose exactly from the
    logged components under the run's weights (double precision)."""

    init_s: float = 0.0
    init_d: float = 0.0
    fin_s: float = 0.0
    fin_d: float = 0.0
    adv_s: float = 0.0
    adv_d: float = 0.0
    disc_s: float = 0.0
    disc_d: float = 0.0
    total_G: float = 0.0
    total_D: float = 0.0

    def as_tuple(self):
        return tuple(getattr(self, name) for name in LOSS_FIELDS)


def _scalar(x) -> float:
    return float(x.detach()) if torch.is_tensor(x) else float(x)


def make_loss_record(parts: GeneratorLossParts, disc_s, disc_d,
                     weights: LossWeights) -> LossRecord:
    """Freeze a step's losses into plain floats, recomposed in float64."""
    c = {name: _scalar(value) for name, value in parts.components().items()}
    ds, dt = _scalar(disc_s), _scalar(disc_d)
    w = weights
    total_g = (w.lambda_s * c["fin_s"] + w.lambda_d * c["fin_d"]
               + w.lambda_init * w.lambda_s * c["init_s"]
               + w.lambda_init * w.lambda_d * c["init_d"]
               + w.lambda_adv_s * c["adv_s"] + w.lambda_adv_d * c["adv_d"])
    return LossRecord(**c, disc_s=ds, disc_d=dt, total_G=total_g, total_D=ds + dt)
