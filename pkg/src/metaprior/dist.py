"""Gaussian building blocks: reparametrized sampling, analytic diagonal KL,
and the scalar likelihood terms shared by every trainer.

Randomness goes through `RngStream`, a counter-based scheme in which each
draw is addressed by (seed, stream-id, draw-index), so any individual sample
can be reproduced exactly on any platform.
"""

import numpy as np

from . import graph
from .graph import Node, DomainError

_LOG_2PI = float(np.log(2.0 * np.pi))


def softplus_inv(s):
    """Inverse of log(1+e^x); input must be positive."""
    s = np.asarray(s, dtype=np.float64)
    if np.any(s <= 0):
        raise DomainError("softplus_inv needs positive input")
    return np.where(s > 30.0, s, np.log(np.expm1(np.minimum(s, 30.0))))


class RngStream:
    """Counter-based PRNG stream.

    Every draw instantiates a Philox generator keyed by
    (seed, stream_id, draw_index), so identical addresses give identical
    values regardless of platform or call history. Streams are single-owner;
    `substream` is the only sharing mechanism.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.draw_index = 0

    def _next_gen(self):
        ss = np.random.SeedSequence(entropy=(self.seed, self.stream_id, self.draw_index))
        self.draw_index += 1
        return np.random.Generator(np.random.Philox(ss))

    def normal(self, shape=()):
        return self._next_gen().standard_normal(shape)

    def uniform(self, low=0.0, high=1.0, shape=()):
        return self._next_gen().uniform(low, high, shape)

    def integers(self, low, high=None, size=None):
        return self._next_gen().integers(low, high, size=size)

    def permutation(self, n: int):
        return self._next_gen().permutation(n)

    def substream(self, stream_id: int) -> "RngStream":
        """A fresh stream under the same seed; ids must be unique per owner."""
        return RngStream(self.seed, stream_id)


def stream_key(*parts) -> int:
    """Stable small integer from a tuple of ints, for addressing substreams."""
    key = 0
    for p in parts:
        key = (key * 1000003 + int(p) + 1) % (2 ** 62)
    return key


class DiagGaussian:
    """Diagonal Gaussian with sigma = softplus(rho), so sigma > 0 always.

    mean and rho are graph leaves; `trainable=False` freezes them (used for
    priors and for one-hot point-mass codes).
    """

    def __init__(self, mean: Node, rho: Node):
        if mean.shape != rho.shape:
            raise graph.ShapeError(f"mean shape {mean.shape} != rho shape {rho.shape}")
        self.mean = mean
        self.rho = rho

    @classmethod
    def from_moments(cls, mean, sigma, trainable=True) -> "DiagGaussian":
        mean = np.asarray(mean, dtype=np.float64)
        sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64), mean.shape)
        rho = softplus_inv(sigma)
        return cls(graph.leaf(mean, requires_grad=trainable),
                   graph.leaf(rho, requires_grad=trainable))

    @classmethod
    def standard(cls, shape) -> "DiagGaussian":
        """Frozen N(0, I) of the given shape."""
        return cls.from_moments(np.zeros(shape), np.ones(shape), trainable=False)

    @property
    def shape(self):
        return self.mean.shape

    def sigma_node(self) -> Node:
        return graph.softplus(self.rho)

    def sigma_value(self) -> np.ndarray:
        return graph.softplus(self.rho).value

    @property
    def trainable(self) -> bool:
        return self.mean.requires_grad

    def leaves(self):
        return [self.mean, self.rho] if self.trainable else []

    def copy(self) -> "DiagGaussian":
        return DiagGaussian(
            graph.leaf(self.mean.value, requires_grad=self.mean.requires_grad),
            graph.leaf(self.rho.value, requires_grad=self.rho.requires_grad))


def rsample(q: DiagGaussian, rng: RngStream) -> Node:
    """Reparametrized draw mean + sigma * eps; gradients flow to mean and rho."""
    eps = rng.normal(q.shape)
    return graph.add(q.mean, graph.mul(q.sigma_node(), graph.const(eps)))


def kl_diag_gauss(q: DiagGaussian, p: DiagGaussian) -> Node:
    """Sum of elementwise KL(q||p); differentiable w.r.t. q's leaves.

    p is treated as fixed (its current values are baked into the tape).
    """
    if q.shape != p.shape:
        raise graph.ShapeError(f"KL shapes differ: {q.shape} vs {p.shape}")
    sq = q.sigma_node()
    sp = p.sigma_value()
    mp = p.mean.value
    inv_two_var = graph.const(1.0 / (2.0 * sp * sp))
    terms = graph.add(
        graph.sub(graph.const(np.log(sp)), graph.log(sq)),
        graph.mul(graph.add(graph.square(sq), graph.square(graph.sub(q.mean, graph.const(mp)))),
                  inv_two_var))
    return graph.tsum(graph.sub(terms, graph.const(0.5)))


def gauss_loglik(y, mean: Node, sigma: float) -> Node:
    """Sum over all entries of log N(y | mean, sigma^2); sigma fixed."""
    if sigma <= 0:
        raise DomainError(f"observation sigma must be positive, got {sigma}")
    y = np.asarray(y, dtype=np.float64)
    if y.shape != mean.shape:
        raise graph.ShapeError(f"y shape {y.shape} != mean shape {mean.shape}")
    n = y.size
    resid = graph.sub(graph.const(y), mean)
    quad = graph.mul(graph.tsum(graph.square(resid)), graph.const(0.5 / (sigma * sigma)))
    norm = 0.5 * n * (_LOG_2PI + 2.0 * np.log(sigma))
    return graph.sub(graph.const(-norm), quad)


def categorical_loglik(labels, logits: Node) -> Node:
    """Sum over rows of log softmax probability of the true class."""
    labels = np.asarray(labels)
    if labels.ndim != 1 or logits.value.ndim != 2 or labels.shape[0] != logits.shape[0]:
        raise graph.ShapeError(
            f"labels shape {labels.shape} incompatible with logits {logits.shape}")
    n_classes = logits.shape[1]
    if labels.min() < 0 or labels.max() >= n_classes:
        raise IndexError(f"label outside [0, {n_classes})")
    onehot = np.zeros(logits.shape)
    onehot[np.arange(labels.shape[0]), labels] = 1.0
    picked = graph.tsum(graph.mul(logits, graph.const(onehot)))
    return graph.sub(picked, graph.tsum(graph.logsumexp(logits, axis=1)))
