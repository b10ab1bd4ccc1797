"""Semi-supervised RGB-D salient object detection.

A saliency branch supervised by an RGB dataset and a depth branch supervised
by RGB-D depth maps share an encoder, exchange information through a
prediction-guided cross-refinement stage, and are aligned across sources by
twin patch discriminators. Inference consumes RGB only.
"""

from .config import (Ablation, Backbone, Domain, EncoderConfig, LossWeights,
                     ToyDatasetSpec, TrainingConfig)
from .data import (DomainBatch, ImageSample, PairSampler, generate_toy_dataset,
                   load_dataset, make_pair_sampler)
from .decoders import PredictionSet
from .encoder import FeaturePyramid, TwoBranchEncoder
from .metrics import (EvalResult, e_measure, evaluate_dataset, f_measure, mae,
                      s_measure)
from .model import SaliencyDepthNet
from .trainer import TrainState, infer, load_train_state, train

__all__ = [
    "Ablation", "Backbone", "Domain", "EncoderConfig", "LossWeights",
    "ToyDatasetSpec", "TrainingConfig",
    "DomainBatch", "ImageSample", "PairSampler", "generate_toy_dataset",
    "load_dataset", "make_pair_sampler",
    "PredictionSet", "FeaturePyramid", "TwoBranchEncoder",
    "EvalResult", "e_measure", "evaluate_dataset", "f_measure", "mae", "s_measure",
    "SaliencyDepthNet", "TrainState", "infer", "load_train_state", "train",
]

__version__ = "0.1.0"
