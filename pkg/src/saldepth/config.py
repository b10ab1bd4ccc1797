"""Configuration dataclasses and enums shared across the pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from enum import Enum
from pathlib import Path


class Domain(Enum):
    """Which source dataset a sample (or a loss term) belongs to."""

    RGB_SOURCE = "rgb"
    RGBD_SOURCE = "rgbd"


class Backbone(Enum):
    VGG19_STYLE = "vgg19"
    TINY = "tiny"


VGG19_CHANNELS = (64, 128, 256, 512, 512)
VGG19_CONVS = (2, 2, 4, 4, 4)
# Small preset for CPU-scale tests; same 5-level two-branch topology.
TINY_CHANNELS = (8, 16, 32, 64, 64)
TINY_CONVS = (1, 1, 1, 1, 1)


class Ablation(Enum):
    """Nested model variants: each level adds components to the previous."""

    B = "B"
    B_M = "B+M"
    B_M_A = "B+M+A"
    FULL = "FULL"

    @property
    def use_attention(self) -> bool:
        """Self/feature-guided attention and the aggregation pyramid."""
        return self is not Ablation.B

    @property
    def use_depth_branch(self) -> bool:
        return self in (Ablation.B_M_A, Ablation.FULL)

    @property
    def use_stage2(self) -> bool:
        return self in (Ablation.B_M_A, Ablation.FULL)

    @property
    def use_discriminators(self) -> bool:
        return self is Ablation.FULL

    @classmethod
    def parse(cls, text: str) -> "Ablation":
        text = text.strip().upper().replace(" ", "")
        for member in cls:
            if member.value == text or member.name == text:
                return member
        raise ValueError(
            f"unknown ablation {text!r}; expected one of "
            f"{[m.value for m in cls]}"
        )


@dataclass(frozen=True)
class EncoderConfig:
    backbone: Backbone = Backbone.VGG19_STYLE
    input_size: int = 256
    pretrained_weights: Path | None = None

    @property
    def channels_per_level(self) -> tuple[int, ...]:
        return TINY_CHANNELS if self.backbone is Backbone.TINY else VGG19_CHANNELS

    @property
    def convs_per_level(self) -> tuple[int, ...]:
        return TINY_CONVS if self.backbone is Backbone.TINY else VGG19_CONVS

    def level_size(self, level: int) -> int:
        """Spatial side of level L (1-based): input_size / 2^(L-1)."""
        return self.input_size // (2 ** (level - 1))


@dataclass(frozen=True)
class LossWeights:
    """Objective weights; defaults favour the saliency branch and stage 2."""

    lambda_s: float = 1.75
    lambda_d: float = 1.0
    lambda_init: float = 0.2
    lambda_adv_s: float = 0.002
    lambda_adv_d: float = 0.001

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 0:
                raise ValueError(f"{name} must be non-negative, got {value}")


@dataclass
class ToyDatasetSpec:
    """Parameters of the synthetic shape dataset used for desk-scale runs."""

    n_rgb: int = 8
    n_rgbd: int = 8
    image_size: int = 64
    shapes_per_image: tuple[int, int] = (1, 3)
    seed: int = 0

    def validate(self):
        if self.n_rgb <= 0 or self.n_rgbd <= 0:
            raise ValueError("toy dataset counts must be positive")
        if self.image_size <= 7:
            raise ValueError("image_size too small")
        lo, hi = self.shapes_per_image
        if lo <= 0 or hi < lo:
            raise ValueError(f"bad shapes_per_image range {self.shapes_per_image}")


@dataclass
class TrainingConfig:
    loss_weights: LossWeights = field(default_factory=LossWeights)
    lr_generator: float = 1e-4
    lr_discriminator: float = 5e-5
    adam_betas: tuple[float, float] = (0.9, 0.999)
    batch_size: int = 4
    steps: int = 10000
    input_size: int = 256
    backbone: Backbone = Backbone.VGG19_STYLE
    pretrained_weights: Path | None = None
    seed: int = 0
    ablation: Ablation = Ablation.FULL
    checkpoint_dir: Path = Path("runs/default")
    checkpoint_every: int = 1000
    detach_refinement_query: bool = False
    patch_grid: int | None = None
    torch_threads: int = 0

    def __post_init__(self):
        if isinstance(self.checkpoint_dir, str):
            self.checkpoint_dir = Path(self.checkpoint_dir)
        if isinstance(self.pretrained_weights, str):
            self.pretrained_weights = Path(self.pretrained_weights)
        if self.batch_size <= 0:
            raise ValueError("batch_size must be positive")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            backbone=self.backbone,
            input_size=self.input_size,
            pretrained_weights=self.pretrained_weights,
        )

    def resolved_patch_grid(self) -> int:
        if self.patch_grid is not None:
            return self.patch_grid
        return max(1, self.input_size // 32)

    @classmethod
    def tiny(cls, **overrides) -> "TrainingConfig":
        """CPU-scale preset: tiny backbone on 64x64 inputs."""
        defaults = dict(backbone=Backbone.TINY, input_size=64)
        defaults.update(overrides)
        return cls(**defaults)

    def to_dict(self) -> dict:
        return {
            "lambda_s": self.loss_weights.lambda_s,
            "lambda_d": self.loss_weights.lambda_d,
            "lambda_init": self.loss_weights.lambda_init,
            "lambda_adv_s": self.loss_weights.lambda_adv_s,
            "lambda_adv_d": self.loss_weights.lambda_adv_d,
            "lr_generator": self.lr_generator,
            "lr_discriminator": self.lr_discriminator,
            "adam_beta1": self.adam_betas[0],
            "adam_beta2": self.adam_betas[1],
            "batch_size": self.batch_size,
            "steps": self.steps,
            "input_size": self.input_size,
            "backbone": self.backbone.value,
            "pretrained_weights": (
                str(self.pretrained_weights) if self.pretrained_weights else ""
            ),
            "seed": self.seed,
            "ablation": self.ablation.value,
            "checkpoint_dir": str(self.checkpoint_dir),
            "checkpoint_every": self.checkpoint_every,
            "detach_refinement_query": self.detach_refinement_query,
            "patch_grid": -1 if self.patch_grid is None else self.patch_grid,
            "torch_threads": self.torch_threads,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        patch_grid = d.get("patch_grid", -1)
        return cls(
            loss_weights=LossWeights(
                lambda_s=float(d["lambda_s"]),
                lambda_d=float(d["lambda_d"]),
                lambda_init=float(d["lambda_init"]),
                lambda_adv_s=float(d["lambda_adv_s"]),
                lambda_adv_d=float(d["lambda_adv_d"]),
            ),
            lr_generator=float(d["lr_generator"]),
            lr_discriminator=float(d["lr_discriminator"]),
            adam_betas=(float(d.get("adam_beta1", 0.9)), float(d.get("adam_beta2", 0.999))),
            batch_size=int(d["batch_size"]),
            steps=int(d["steps"]),
            input_size=int(d["input_size"]),
            backbone=Backbone(d["backbone"]),
            pretrained_weights=Path(d["pretrained_weights"]) if d.get("pretrained_weights") else None,
            seed=int(d["seed"]),
            ablation=Ablation.parse(d["ablation"]),
            checkpoint_dir=Path(d["checkpoint_dir"]),
            checkpoint_every=int(d["checkpoint_every"]),
            detach_refinement_query=bool(d["detach_refinement_query"]),
            patch_grid=None if int(patch_grid) < 0 else int(patch_grid),
            torch_threads=int(d.get("torch_threads", 0)),
        )
