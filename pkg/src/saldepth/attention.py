"""Attention blocks and feature-refinement modules used by both decoders.

All three attention variants share one mechanism (a single-head non-local
block over flattened spatial positions); they differ only in where the query
comes from: the feature itself, the refined top-level feature, or the
concatenated initial prediction maps.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


def _upsample(x, size):
    return F.interpolate(x, size=size, mode="bilinear", align_corners=False)


class AttentionBlock(nn.Module):
    """Non-local attention with 1x1 projections and a residual output.

    Queries may come from a map with a different channel count and spatial
    grid than the key/value map; the query is bilinearly resized to the
    key grid first so the attention matrix is square over positions.
    """

    def __init__(self, kv_channels: int, query_channels: int | None = None,
                 embed_dim: int | None = None):
        super().__init__()
        if query_channels is None:
            query_channels = kv_channels
        if embed_dim is None:
            embed_dim = max(4, kv_channels // 2)
        self.kv_channels = kv_channels
        self.query_channels = query_channels
        self.embed_dim = embed_dim
        self.theta = nn.Conv2d(query_channels, embed_dim, 1)
        self.phi = nn.Conv2d(kv_channels, embed_dim, 1)
        self.g = nn.Conv2d(kv_channels, embed_dim, 1)
        self.w_z = nn.Conv2d(embed_dim, kv_channels, 1)

    def _check(self, query_map, kv_map):
        if kv_map.dim() != 4 or query_map.dim() != 4:
            raise ValueError("attention inputs must be [B, C, H, W]")
        if kv_map.shape[1] != self.kv_channels:
            raise ValueError(
                f"key/value channels {kv_map.shape[1]} != block's {self.kv_channels}")
        if query_map.shape[1] != self.query_channels:
            raise ValueError(
                f"query channels {query_map.shape[1]} != block's {self.query_channels}")

    def attention_matrix(self, query_map, kv_map):
        """Row-stochastic [B, N, N] attention over key positions."""
        self._check(query_map, kv_map)
        h, w = kv_map.shape[-2:]
        if query_map.shape[-2:] != (h, w):
            query_map = _upsample(query_map, (h, w))
        q = self.theta(query_map).flatten(2).transpose(1, 2)   # [B, N, E]
        k = self.phi(kv_map).flatten(2)                        # [B, E, N]
        return torch.softmax(q @ k, dim=-1)

    def forward(self, query_map, kv_map):
        attn = self.attention_matrix(query_map, kv_map)
        b, _, h, w = kv_map.shape
        v = self.g(kv_map).flatten(2).transpose(1, 2)          # [B, N, E]
        out = (attn @ v).transpose(1, 2).reshape(b, self.embed_dim, h, w)
        return self.w_z(out) + kv_map


def self_attention(f, block: AttentionBlock):
    """Weighted-sum refinement with the feature itself as the query."""
    return block(f, f)


def feature_guided_attention(u5, f_tilde, block: AttentionBlock):
    """Lower-level refinement queried by the refined top-level feature."""
    return block(u5, f_tilde)


def prediction_guided_attention(a, u, block: AttentionBlock, detach_query: bool = False):
    """Cross-task refinement queried by the concatenated initial maps.

    With detach_query the query acts as a constant: no gradient reaches the
    initial maps through the attention path.
    """
    if detach_query:
        a = a.detach()
    return block(a, u)


class LevelFusion(nn.Module):
    """Upsample the higher-level output and merge it into the lower level."""

    def __init__(self, higher_channels: int, lower_channels: int):
        super().__init__()
        self.conv = nn.Conv2d(higher_channels + lower_channels, lower_channels,
                              3, padding=1)

    def forward(self, u_higher, f_lower):
        hh, hw = u_higher.shape[-2:]
        lh, lw = f_lower.shape[-2:]
        if (lh, lw) != (2 * hh, 2 * hw):
            raise ValueError(
                f"expected lower level at 2x the higher level, got {lh}x{lw} vs {hh}x{hw}")
        up = _upsample(u_higher, (lh, lw))
        return self.conv(torch.cat([up, f_lower], dim=1))


class FeatureAggregation(nn.Module):
    """Multi-rate average-pool pyramid that enlarges the receptive field.

    Four branches: a same-resolution branch plus average pools at factors
    2/4/8, each passed through a 3x3 conv, pooled branches upsampled back,
    and the branch mean returned. Pool factors larger than the map are
    skipped, so the block also works on very small feature grids.
    """

    POOL_FACTORS = (2, 4, 8)

    def __init__(self, channels: int):
        super().__init__()
        self.convs = nn.ModuleList(
            nn.Conv2d(channels, channels, 3, padding=1)
            for _ in range(1 + len(self.POOL_FACTORS))
        )

    def forward(self, f):
        h, w = f.shape[-2:]
        factors = [k for k in self.POOL_FACTORS if k <= min(h, w)]
        for k in factors:
            if h % k or w % k:
                raise ValueError(f"spatial size {h}x{w} not divisible by pool factor {k}")
        branches = [self.convs[0](f)]
        for i, k in enumerate(factors, start=1):
            y = self.convs[i](F.avg_pool2d(f, k))
            branches.append(_upsample(y, (h, w)))
        return torch.stack(branches).mean(dim=0)


def fam(f, module: FeatureAggregation):
    return module(f)
