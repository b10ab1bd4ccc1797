from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .config import TrainingConfig
from .decoders import FinalDecoder, InitialDecoder, PredictionSet, build_refinement_query
from .encoder import TwoBranchEncoder


@dataclass
class ModelOutput:
    """Everything one forward pass emits for a batch of RGB images."""

    preds: PredictionSet
    u_sal: tuple | None = None
    u_dep: tuple | None = None
    v_sal: tuple | None = None
    v_dep: tuple | None = None


class SaliencyDepthNet(nn.Module):
    """Two-branch prediction model; consumes RGB only.

    The depth branch and the stage-2 cross-refinement exist only for the
    ablation levels that include them, so parameter counts nest strictly
    across B < B+M < B+M+A < FULL (discriminators live outside this module).
    """

    def __init__(self, config: TrainingConfig):
        super().__init__()
        self.config = config
        abl = config.ablation
        self.encoder = TwoBranchEncoder(
            config.encoder_config(), include_depth_branch=abl.use_depth_branch)
        ch345 = config.encoder_config().channels_per_level[2:]
        self.initial_sal = InitialDecoder(ch345, use_attention=abl.use_attention,
                                          use_fam=abl.use_attention)
        if abl.use_depth_branch:
            self.initial_dep = InitialDecoder(ch345, use_attention=abl.use_attention,
                                              use_fam=abl.use_attention)
        if abl.use_stage2:
            self.final_sal = FinalDecoder(ch345, detach_query=config.detach_refinement_query)
            self.final_dep = FinalDecoder(ch345, detach_query=config.detach_refinement_query)

    def forward(self, rgb: torch.Tensor) -> ModelOutput:
        abl = self.config.ablation
        out_size = rgb.shape[-2:]
        pyramid = self.encoder(rgb)
        f_map, u_sal = self.initial_sal(*pyramid.saliency_levels(), out_size=out_size)
        if not abl.use_depth_branch:
            return ModelOutput(preds=PredictionSet(F=f_map), u_sal=u_sal)

        r_map, u_dep = self.initial_dep(*pyramid.depth_levels(), out_size=out_size)
        query = build_refinement_query(f_map, r_map)
        p_map, v_sal = self.final_sal(query, *u_sal, out_size=out_size)
        q_map, v_dep = self.final_dep(query, *u_dep, out_size=out_size)
        return ModelOutput(
            preds=PredictionSet(F=f_map, R=r_map, P=p_map, Q=q_map),
            u_sal=u_sal, u_dep=u_dep, v_sal=v_sal, v_dep=v_dep,
        )

    def predict_map(self, rgb: torch.Tensor) -> torch.Tensor:
        """The saliency map used at inference: P when stage 2 exists, else F."""
        out = self.forward(rgb)
        return out.preds.P if out.preds.P is not None else out.preds.F

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())
