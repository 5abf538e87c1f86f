"""Target-network forward pass and predictive mixtures.

The network itself owns no parameters: it consumes externally supplied
weights (hypernetwork-generated or drawn from a mean-field posterior) and
turns them into outputs and likelihood terms.
"""

from dataclasses import dataclass

import numpy as np

from . import graph
from .dist import gauss_loglik, categorical_loglik
from .meta import Architecture, GeneratedWeights

_ACT = {"tanh": graph.tanh, "relu": graph.relu}


def forward(arch: Architecture, weights: GeneratedWeights, x) -> graph.Node:
    """MLP forward pass; hidden layers use arch.activation, output is affine."""
    if len(weights) != arch.n_layers:
        raise graph.ShapeError(
            f"got {len(weights)} weight layers for {arch.n_layers}-layer net")
    act = _ACT[arch.activation]
    h = graph.as_node(x)
    if h.value.ndim != 2 or h.shape[1] != arch.layer_sizes[0]:
        raise graph.ShapeError(
            f"input shape {h.shape} incompatible with V0={arch.layer_sizes[0]}")
    for l, (w, b) in enumerate(weights):
        h = graph.add(graph.matmul(h, graph.transpose(w)), b)
        if l < len(weights) - 1:
            h = act(h)
    return h


def batch_loglik(arch: Architecture, weights: GeneratedWeights, batch,
                 likelihood: str, obs_sigma: float = 1.0) -> graph.Node:
    """Summed log-likelihood of one batch under one concrete weight draw."""
    out = forward(arch, weights, batch.x)
    if likelihood == "gaussian":
        return gauss_loglik(batch.y, out, obs_sigma)
    if likelihood == "categorical":
        return categorical_loglik(batch.y, out)
    raise ValueError(f"unknown likelihood {likelihood!r}")


@dataclass
class Predictive:
    """Mixture summary over sampled weight draws.

    Regression: `mean` and `std` per point, with the fixed observation noise
    folded into `std`. Classification: `probs` averaged over draws.
    """

    mean: np.ndarray = None
    std: np.ndarray = None
    probs: np.ndarray = None
    sample_means: np.ndarray = None  # (S, n, out); raw per-draw outputs


def _softmax(logits):
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(axis=1, keepdims=True)


def predictive(arch: Architecture, weight_sampler, x, n_samples: int,
               likelihood: str, obs_sigma: float = 1.0) -> Predictive:
    """Predictive mixture over `n_samples` weight draws.

    `weight_sampler(s)` must return the s-th GeneratedWeights draw.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    x = np.asarray(x, dtype=np.float64)
    outs = np.stack([forward(arch, weight_sampler(s), x).value
                     for s in range(n_samples)])
    if likelihood == "gaussian":
        mean = outs.mean(axis=0)
        var_means = outs.var(axis=0)
        return Predictive(mean=mean, std=np.sqrt(var_means + obs_sigma ** 2),
                          sample_means=outs)
    if likelihood == "categorical":
        probs = np.stack([_softmax(o) for o in outs]).mean(axis=0)
        return Predictive(probs=probs, sample_means=outs)
    raise ValueError(f"unknown likelihood {likelihood!r}")


def accuracy(probs: np.ndarray, labels) -> float:
    return float((probs.argmax(axis=1) == np.asarray(labels)).mean())


def regression_nll(pred: Predictive, y, obs_sigma: float) -> float:
    """Average negative log-likelihood of y under the sample mixture."""
    outs = pred.sample_means  # (S, n, out)
    y = np.asarray(y, dtype=np.float64)
    ll = (-0.5 * np.log(2 * np.pi * obs_sigma ** 2)
          - 0.5 * ((y[None] - outs) / obs_sigma) ** 2).sum(axis=2)
    # log of the S-component mixture, stabilized
    m = ll.max(axis=0)
    mix = m + np.log(np.exp(ll - m).mean(axis=0))
    return float(-mix.mean())


def classification_nll(pred: Predictive, labels) -> float:
    labels = np.asarray(labels)
    p = pred.probs[np.arange(labels.shape[0]), labels]
    return float(-np.log(np.maximum(p, 1e-300)).mean())
