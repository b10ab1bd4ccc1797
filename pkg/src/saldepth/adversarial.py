from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


class PatchDiscriminator(nn.Module):
    """Classifies one branch's representations by source dataset, per patch.

    Each of the four inputs (three refined feature levels plus the final
    prediction map) passes its own adapter conv, is resized to the patch
    grid, and the concatenation runs through a four-conv trunk ending in a
    1-channel logit map. The final conv is zero-initialized so a fresh
    discriminator is exactly uninformative (all patch probabilities 0.5).
    """

    def __init__(self, feature_channels: tuple[int, int, int], patch_grid: int,
                 map_channels: int = 1, adapter_channels: int = 64,
                 trunk_channels: tuple[int, ...] = (256, 128, 64, 1)):
        super().__init__()
        if patch_grid < 1:
            raise ValueError("patch_grid must be >= 1")
        self.patch_grid = patch_grid
        in_channels = (*feature_channels, map_channels)
        self.adapters = nn.ModuleList(
            nn.Conv2d(c, adapter_channels, 3, padding=1) for c in in_channels
        )
        trunk = []
        width = adapter_channels * len(in_channels)
        for i, out in enumerate(trunk_channels):
            trunk.append(nn.Conv2d(width, out, 3, padding=1))
            if i < len(trunk_channels) - 1:
                trunk.append(nn.LeakyReLU(0.2))
            width = out
        self.trunk = nn.Sequential(*trunk)
        last = self.trunk[-1]
        nn.init.zeros_(last.weight)
        nn.init.zeros_(last.bias)

    def forward(self, v3, v4, v5, pred_map) -> torch.Tensor:
        grid = (self.patch_grid, self.patch_grid)
        zs = []
        for adapter, x in zip(self.adapters, (v3, v4, v5, pred_map)):
            if x.shape[1] != adapter.in_channels:
                raise ValueError(
                    f"discriminator input has {x.shape[1]} channels, "
                    f"adapter expects {adapter.in_channels}")
            z = F.leaky_relu(adapter(x), 0.2)
            if z.shape[-2:] != grid:
                z = F.interpolate(z, size=grid, mode="bilinear", align_corners=False)
            zs.append(z)
        return self.trunk(torch.cat(zs, dim=1))


def discriminate(branch_reps, disc: PatchDiscriminator) -> torch.Tensor:
    """Apply a discriminator to the (v3, v4, v5, map) tuple of one branch."""
    if len(branch_reps) != 4:
        raise ValueError(f"expected 4 representations (v3, v4, v5, map), got {len(branch_reps)}")
    return disc(*branch_reps)
