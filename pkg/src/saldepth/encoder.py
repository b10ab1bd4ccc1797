"""Two-branch five-level feature encoder with a shared two-level root."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn as nn

from .config import Backbone, EncoderConfig


@dataclass
class FeaturePyramid:
    """The 8 encoder maps: two shared roots plus three levels per branch."""

    f1: torch.Tensor
    f2: torch.Tensor
    f3s: torch.Tensor
    f4s: torch.Tensor
    f5s: torch.Tensor
    f3d: torch.Tensor | None = None
    f4d: torch.Tensor | None = None
    f5d: torch.Tensor | None = None

    def saliency_levels(self):
        return self.f3s, self.f4s, self.f5s

    def depth_levels(self):
        return self.f3d, self.f4d, self.f5d


def _stage(in_ch: int, out_ch: int, n_convs: int) -> nn.Sequential:
    layers = []
    for i in range(n_convs):
        layers.append(nn.Conv2d(in_ch if i == 0 else out_ch, out_ch, 3, padding=1))
        layers.append(nn.ReLU())
    return nn.Sequential(*layers)


def he_init_(module: nn.Module):
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            nn.init.kaiming_normal_(m.weight, mode="fan_in", nonlinearity="relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)


class TwoBranchEncoder(nn.Module):
    """VGG-style encoder: levels 1-2 shared, levels 3-5 duplicated per task.

    The branch split sits immediately after the level-2 pooling, so both
    branches consume the same pooled root feature. Without pretrained
    weights all convolutions use He initialization.
    """

    def __init__(self, config: EncoderConfig, include_depth_branch: bool = True):
        super().__init__()
        self.config = config
        self.include_depth_branch = include_depth_branch
        ch = config.channels_per_level
        nc = config.convs_per_level
        self.pool = nn.MaxPool2d(2, 2)
        self.stage1 = _stage(3, ch[0], nc[0])
        self.stage2 = _stage(ch[0], ch[1], nc[1])
        self.sal3 = _stage(ch[1], ch[2], nc[2])
        self.sal4 = _stage(ch[2], ch[3], nc[3])
        self.sal5 = _stage(ch[3], ch[4], nc[4])
        if include_depth_branch:
            self.dep3 = _stage(ch[1], ch[2], nc[2])
            self.dep4 = _stage(ch[2], ch[3], nc[3])
            self.dep5 = _stage(ch[3], ch[4], nc[4])
        he_init_(self)
        if config.pretrained_weights is not None:
            load_vgg19_features(self, config.pretrained_weights)

    def forward(self, rgb: torch.Tensor) -> FeaturePyramid:
        if rgb.dim() != 4 or rgb.shape[1] != 3:
            raise ValueError(f"expected [B, 3, S, S] input, got {tuple(rgb.shape)}")
        s = self.config.input_size
        if rgb.shape[-2:] != (s, s):
            raise ValueError(f"expected {s}x{s} input, got {tuple(rgb.shape[-2:])}")
        if not torch.isfinite(rgb).all():
            raise ValueError("non-finite values in encoder input")

        f1 = self.stage1(rgb)
        f2 = self.stage2(self.pool(f1))
        root = self.pool(f2)
        f3s = self.sal3(root)
        f4s = self.sal4(self.pool(f3s))
        f5s = self.sal5(self.pool(f4s))
        if not self.include_depth_branch:
            return FeaturePyramid(f1=f1, f2=f2, f3s=f3s, f4s=f4s, f5s=f5s)
        f3d = self.dep3(root)
        f4d = self.dep4(self.pool(f3d))
        f5d = self.dep5(self.pool(f4d))
        return FeaturePyramid(f1=f1, f2=f2, f3s=f3s, f4s=f4s, f5s=f5s,
                              f3d=f3d, f4d=f4d, f5d=f5d)


def encode(rgb, encoder: TwoBranchEncoder) -> FeaturePyramid:
    return encoder(rgb)


# torchvision VGG19 `features` conv indices grouped by stage
_VGG19_FEATURE_IDX = ((0, 2), (5, 7), (10, 12, 14, 16), (19, 21, 23, 25), (28, 30, 32, 34))


def load_vgg19_features(encoder: TwoBranchEncoder, path) -> None:
    """Initialize from a torchvision-style VGG19 ``features`` state dict.

    Shared stages take stages 1-2; both branches start from identical copies
    of stages 3-5. Only valid for the VGG19_STYLE configuration.
    """
    if encoder.config.backbone is not Backbone.VGG19_STYLE:
        raise ValueError("pretrained VGG19 weights require the VGG19_STYLE backbone")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"pretrained weights not found: {path}")
    state = torch.load(path, map_location="cpu", weights_only=True)
    if any(k.startswith("features.") for k in state):
        state = {k[len("features."):]: v for k, v in state.items() if k.startswith("features.")}

    def fill(stage: nn.Sequential, idxs):
        convs = [m for m in stage if isinstance(m, nn.Conv2d)]
        for conv, idx in zip(convs, idxs):
            w, b = state[f"{idx}.weight"], state[f"{idx}.bias"]
            if conv.weight.shape != w.shape:
                raise ValueError(f"pretrained conv {idx} shape {tuple(w.shape)} does not fit")
            with torch.no_grad():
                conv.weight.copy_(w)
                conv.bias.copy_(b)

    fill(encoder.stage1, _VGG19_FEATURE_IDX[0])
    fill(encoder.stage2, _VGG19_FEATURE_IDX[1])
    for i, stage in enumerate((encoder.sal3, encoder.sal4, encoder.sal5)):
        fill(stage, _VGG19_FEATURE_IDX[2 + i])
    if encoder.include_depth_branch:
        for i, stage in enumerate((encoder.dep3, encoder.dep4, encoder.dep5)):
            fill(stage, _VGG19_FEATURE_IDX[2 + i])
