"""Stage-1 initial decoders and stage-2 cross-refinement decoders.

Stage 1 refines the three branch-specific encoder levels top-down and sums
per-level prediction logits into an initial map. Stage 2 re-queries the
stage-1 features with the concatenated initial saliency+depth maps and sums
fresh per-level heads into the final map.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .attention import AttentionBlock, FeatureAggregation, LevelFusion


@dataclass
class PredictionSet:
    """Initial maps (F, R) and final maps (P, Q) for one image batch."""

    F: torch.Tensor
    R: torch.Tensor | None = None
    P: torch.Tensor | None = None
    Q: torch.Tensor | None = None


def _head_logits(heads, features, out_size):
    logits = 0.0
    for head, feat in zip(heads, features):
        level_logit = head(feat)
        if level_logit.shape[-2:] != out_size:
            level_logit = F.interpolate(level_logit, size=out_size,
                                        mode="bilinear", align_corners=False)
        logits = logits + level_logit
    return logits


class InitialDecoder(nn.Module):
    """One branch of stage 1: refine levels 3..5, emit the initial map.

    With attention disabled the decoder degrades to plain top-down fusion
    (the "B" baseline); otherwise the top level is self-attended and lower
    levels are queried by it, each followed by the aggregation pyramid.
    """

    def __init__(self, channels: tuple[int, int, int], use_attention: bool = True,
                 use_fam: bool = True):
        super().__init__()
        c3, c4, c5 = channels
        self.use_attention = use_attention
        self.use_fam = use_fam
        self.fuse4 = LevelFusion(c5, c4)
        self.fuse3 = LevelFusion(c4, c3)
        if use_attention:
            self.attn5 = AttentionBlock(c5)
            self.attn4 = AttentionBlock(c4, query_channels=c5)
            self.attn3 = AttentionBlock(c3, query_channels=c5)
        if use_fam:
            self.fam5 = FeatureAggregation(c5)
            self.fam4 = FeatureAggregation(c4)
            self.fam3 = FeatureAggregation(c3)
        self.heads = nn.ModuleList([nn.Conv2d(c, 1, 1) for c in (c3, c4, c5)])

    def forward(self, f3, f4, f5, out_size: tuple[int, int]):
        u5 = f5
        if self.use_attention:
            u5 = self.attn5(u5, u5)
        if self.use_fam:
            u5 = self.fam5(u5)

        u4 = self.fuse4(u5, f4)
        if self.use_attention:
            u4 = self.attn4(u5, u4)
        if self.use_fam:
            u4 = self.fam4(u4)

        u3 = self.fuse3(u4, f3)
        if self.use_attention:
            u3 = self.attn3(u5, u3)
        if self.use_fam:
            u3 = self.fam3(u3)

        logits = _head_logits(self.heads, (u3, u4, u5), out_size)
        return torch.sigmoid(logits), (u3, u4, u5)


class FinalDecoder(nn.Module):
    """One branch of stage 2: prediction-guided refinement plus fresh heads."""

    QUERY_CHANNELS = 2  # concat of the initial saliency and depth maps

    def __init__(self, channels: tuple[int, int, int], detach_query: bool = False):
        super().__init__()
        self.detach_query = detach_query
        self.attn = nn.ModuleList(
            AttentionBlock(c, query_channels=self.QUERY_CHANNELS) for c in channels
        )
        self.heads = nn.ModuleList([nn.Conv2d(c, 1, 1) for c in channels])

    def forward(self, query, u3, u4, u5, out_size: tuple[int, int]):
        if query.shape[1] != self.QUERY_CHANNELS:
            raise ValueError(f"query must have {self.QUERY_CHANNELS} channels")
        if self.detach_query:
            query = query.detach()
        v = tuple(attn(query, u) for attn, u in zip(self.attn, (u3, u4, u5)))
        logits = _head_logits(self.heads, v, out_size)
        return torch.sigmoid(logits), v


def decode_initial(pyramid, branch_decoder: InitialDecoder, branch: str, out_size):
    """Run stage 1 on one branch of a feature pyramid."""
    levels = pyramid.saliency_levels() if branch == "saliency" else pyramid.depth_levels()
    return branch_decoder(*levels, out_size=out_size)


def build_refinement_query(initial_saliency, initial_depth) -> torch.Tensor:
    """Concatenate the two initial maps into the stage-2 attention query."""
    return torch.cat([initial_saliency, initial_depth], dim=1)
