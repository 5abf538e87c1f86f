"""Bayesian neural networks whose weights are generated by a shared
hypernetwork conditioned on learned per-unit latent codes, plus a
mean-field VI baseline and the experiment tooling around them."""

from . import adapt, cli, data, dist, graph, infer, meta, net
from .adapt import FewShotProtocol, SurgeryMask, few_shot_eval, illate
from .data import Batch, PermutationTask
from .dist import DiagGaussian, RngStream
from .infer import MfBnn, TrainConfig, train_em, train_joint, train_mf
from .meta import (Architecture, HyperNet, MetaPriorModel, UnitCodes,
                   generate_weights, load_checkpoint, save_checkpoint)

__version__ = "0.1.0"

__all__ = [
    "Architecture", "Batch", "DiagGaussian", "FewShotProtocol", "HyperNet",
    "MetaPriorModel", "MfBnn", "PermutationTask", "RngStream", "SurgeryMask",
    "TrainConfig", "UnitCodes", "adapt", "cli", "data", "dist",
    "few_shot_eval", "generate_weights", "graph", "illate", "infer",
    "load_checkpoint", "meta", "net", "save_checkpoint", "train_em",
    "train_joint", "train_mf",
]
