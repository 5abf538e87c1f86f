"""Trainers: stochastic VI for the hypernetwork model (joint and two-stage
EM-style variants) and the mean-field BNN baseline.

All trainers maximize a minibatch estimate of the evidence lower bound. The
likelihood term is rescaled by n/batch_size to the full-dataset scale and
the KL term enters with a `kl_scale` multiplier that defaults to
batch_size/n, which together make each step's objective an unbiased
estimate of the full ELBO.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import graph, net
from .dist import DiagGaussian, RngStream, rsample, kl_diag_gauss, stream_key
from .meta import (Architecture, GeneratedWeights, MetaPriorModel,
                   generate_weights)


@dataclass
class TrainConfig:
    M: int = 1                      # outer code samples per step
    S: int = 1                      # weight samples per code sample
    batch_size: int = None          # None: full batch
    steps: int = 1000
    lr: float = 1e-3
    kl_scale: float = None          # None: batch_size / n
    seed: int = 0
    mode: str = "joint"             # joint | em
    em_inner_steps: tuple = (10, 10)  # (phi_steps, xi_steps) per block
    kl_warmup: bool = False         # linear 0->1 over the first 10% of steps
    rho_lr_scale: float = 1.0       # step-size multiplier for code sigmas
    trace_every: int = 25

    def __post_init__(self):
        if self.M < 1 or self.S < 1:
            raise ValueError("M and S must be >= 1")
        if self.mode not in ("joint", "em"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class TraceRecord:
    step: int
    elbo: float
    loglik: float
    kl: float
    seconds: float


class TrainingDivergedError(RuntimeError):
    def __init__(self, message, step=None, elbo=None, loglik=None, kl=None):
        super().__init__(f"{message} (step={step}, elbo={elbo}, "
                         f"loglik={loglik}, kl={kl})")
        self.step = step
        self.elbo = elbo
        self.loglik = loglik
        self.kl = kl


class MfBnn:
    """Mean-field VI baseline: one diagonal Gaussian per weight and bias.

    The prior is N(0, lambda) per weight ("iso"), or the fan-scaled variant
    N(0, 1/V_l) per layer ("neal").
    """

    def __init__(self, arch: Architecture, posteriors=None, prior_kind="iso",
                 prior_variance=1.0, likelihood="categorical", obs_sigma=1.0,
                 seed=0, sigma_init=0.05):
        if prior_kind not in ("iso", "neal"):
            raise ValueError(f"unknown prior kind {prior_kind!r}")
        if likelihood not in ("gaussian", "categorical"):
            raise ValueError(f"unknown likelihood {likelihood!r}")
        self.arch = arch
        self.prior_kind = prior_kind
        self.prior_variance = float(prior_variance)
        self.likelihood = likelihood
        self.obs_sigma = float(obs_sigma)
        if posteriors is None:
            rng = RngStream(seed, stream_id=23)
            posteriors = []
            sizes = arch.layer_sizes
            for l in range(1, len(sizes)):
                fan_in = sizes[l - 1]
                w_mu = rng.normal((sizes[l], fan_in)) / np.sqrt(fan_in)
                qw = DiagGaussian.from_moments(w_mu, sigma_init * np.ones_like(w_mu))
                qb = DiagGaussian.from_moments(np.zeros(sizes[l]),
                                               sigma_init * np.ones(sizes[l]))
                posteriors.append((qw, qb))
        self.posteriors = posteriors

    def layer_prior_variance(self, l: int) -> float:
        if self.prior_kind == "neal":
            return 1.0 / self.arch.layer_sizes[l]
        return self.prior_variance

    def sample_weights(self, rng: RngStream, mode="sample") -> GeneratedWeights:
        layers = []
        for qw, qb in self.posteriors:
            if mode == "sample":
                layers.append((rsample(qw, rng), rsample(qb, rng)))
            else:
                layers.append((qw.mean, qb.mean))
        return GeneratedWeights(layers)

    def kl(self) -> graph.Node:
        total = None
        for l, (qw, qb) in enumerate(self.posteriors, start=1):
            sd = np.sqrt(self.layer_prior_variance(l))
            for q in (qw, qb):
                prior = DiagGaussian.from_moments(np.zeros(q.shape),
                                                  sd * np.ones(q.shape),
                                                  trainable=False)
                term = kl_diag_gauss(q, prior)
                total = term if total is None else graph.add(total, term)
        return total

    def leaves(self):
        out = []
        for qw, qb in self.posteriors:
            out.extend(qw.leaves())
            out.extend(qb.leaves())
        return out

    def copy(self) -> "MfBnn":
        return MfBnn(self.arch,
                     posteriors=[(qw.copy(), qb.copy()) for qw, qb in self.posteriors],
                     prior_kind=self.prior_kind, prior_variance=self.prior_variance,
                     likelihood=self.likelihood, obs_sigma=self.obs_sigma)

    def weight_sampler(self, seed: int, mode="sample"):
        def draw(s):
            return self.sample_weights(RngStream(seed, stream_key(57, s)), mode=mode)
        return draw


# ---------------------------------------------------------------------------
# ELBO estimators

def _scaled_terms(ll_mean, kl_raw, batch_n, n_total, kl_scale, anneal=1.0):
    scale = n_total / batch_n
    kl_scale = (batch_n / n_total) if kl_scale is None else kl_scale
    ll_term = graph.mul(ll_mean, graph.const(scale))
    kl_term = graph.mul(kl_raw, graph.const(scale))
    elbo = graph.sub(ll_term, graph.mul(kl_term, graph.const(kl_scale * anneal)))
    return elbo, ll_term, kl_term


def _elbo_terms_metaprior(model, batch, cfg, rng, n_total, anneal=1.0):
    total_ll = None
    for _m in range(cfg.M):
        z, zs = model.sample_codes(rng)
        for _s in range(cfg.S):
            w = generate_weights(model.arch, z, model.hyper, rng,
                                 mode="sample", global_code=zs)
            ll = net.batch_loglik(model.arch, w, batch,
                                  model.likelihood, model.obs_sigma)
            total_ll = ll if total_ll is None else graph.add(total_ll, ll)
    ll_mean = graph.mul(total_ll, graph.const(1.0 / (cfg.M * cfg.S)))
    return _scaled_terms(ll_mean, model.kl(), batch.n, n_total,
                         cfg.kl_scale, anneal)


def elbo_metaprior(model: MetaPriorModel, batch, cfg: TrainConfig,
                   rng: RngStream, n_total=None) -> graph.Node:
    """Stochastic ELBO estimate with M code draws and S weight draws each,
    at full-dataset scale; differentiable w.r.t. codes and hypernet."""
    n_total = batch.n if n_total is None else n_total
    return _elbo_terms_metaprior(model, batch, cfg, rng, n_total)[0]


def _elbo_terms_mf(mfbnn, batch, cfg, rng, n_total, anneal=1.0):
    total_ll = None
    for _s in range(cfg.S):
        w = mfbnn.sample_weights(rng)
        ll = net.batch_loglik(mfbnn.arch, w, batch,
                              mfbnn.likelihood, mfbnn.obs_sigma)
        total_ll = ll if total_ll is None else graph.add(total_ll, ll)
    ll_mean = graph.mul(total_ll, graph.const(1.0 / cfg.S))
    return _scaled_terms(ll_mean, mfbnn.kl(), batch.n, n_total,
                         cfg.kl_scale, anneal)


def elbo_mf(mfbnn: MfBnn, batch, cfg: TrainConfig, rng: RngStream,
            n_total=None) -> graph.Node:
    n_total = batch.n if n_total is None else n_total
    return _elbo_terms_mf(mfbnn, batch, cfg, rng, n_total)[0]


# ---------------------------------------------------------------------------
# training loops

def _em_schedule(cfg, phi_leaves, xi_leaves):
    phi_steps, xi_steps = cfg.em_inner_steps
    if phi_steps < 0 or xi_steps < 0 or phi_steps + xi_steps == 0:
        raise ValueError(f"bad em_inner_steps {cfg.em_inner_steps}")
    groups = [(lv, k) for lv, k in ((phi_leaves, phi_steps), (xi_leaves, xi_steps))
              if lv and k > 0]
    if not groups:
        raise ValueError("no trainable parameters for the requested EM blocks")
    blocks = []
    done = 0
    while done < cfg.steps:
        for leaves, k in groups:
            k = min(k, cfg.steps - done)
            if k <= 0:
                break
            blocks.append((leaves, k))
            done += k
    return blocks


def _run(elbo_terms_fn, schedule, all_leaves, data, cfg):
    """Shared Adam ascent loop; `schedule` is a list of (leaves, n_steps)."""
    rng = RngStream(cfg.seed, stream_id=1)
    n = data.n
    batch_size = cfg.batch_size if cfg.batch_size else n
    batch_size = min(batch_size, n)
    warm_steps = max(1, int(0.1 * cfg.steps))

    optimizers = {}
    trace = []
    t0 = time.perf_counter()
    step = 0
    initial_elbo = None
    for leaves, n_steps in schedule:
        key = id(leaves[0]) if leaves else None
        if key not in optimizers:
            optimizers[key] = graph.Adam(leaves, lr=cfg.lr)
        opt = optimizers[key]
        for _ in range(n_steps):
            if batch_size < n:
                idx = rng.permutation(n)[:batch_size]
                batch = data.take(idx)
            else:
                batch = data
            anneal = min(1.0, (step + 1) / warm_steps) if cfg.kl_warmup else 1.0
            try:
                elbo, ll_term, kl_term = elbo_terms_fn(batch, cfg, rng, n, anneal)
            except graph.DomainError as err:
                # parameters blew past the representable range; report as
                # divergence rather than a bare numeric error
                raise TrainingDivergedError(f"numeric domain error: {err}",
                                            step=step) from err
            e, ll, kl = float(elbo.value), float(ll_term.value), float(kl_term.value)
            if not np.isfinite(e):
                raise TrainingDivergedError("non-finite ELBO", step=step,
                                            elbo=e, loglik=ll, kl=kl)
            if initial_elbo is None:
                initial_elbo = e
            if (step > 0.2 * cfg.steps
                    and e < initial_elbo - 10.0 * max(1.0, abs(initial_elbo))):
                raise TrainingDivergedError("ELBO collapsed past 10x the initial value",
                                            step=step, elbo=e, loglik=ll, kl=kl)
            graph.zero_grads(all_leaves)
            graph.backward(graph.neg(elbo))
            opt.step()
            if step % cfg.trace_every == 0 or step == cfg.steps - 1:
                trace.append(TraceRecord(step, e, ll, kl,
                                         time.perf_counter() - t0))
            step += 1
    return trace


def _tag_rho_scale(model, cfg):
    dists = list(model.codes.layers)
    if model.global_state.enabled:
        dists.append(model.global_state.code)
    for q in dists:
        q.rho.lr_scale = cfg.rho_lr_scale


def train_joint(model: MetaPriorModel, data, cfg: TrainConfig):
    """Adam ascent of the ELBO w.r.t. codes and hypernet jointly."""
    if data.n < 1:
        raise ValueError("empty dataset")
    _tag_rho_scale(model, cfg)
    leaves = model.phi_leaves() + model.xi_leaves()

    def terms(batch, cfg_, rng, n_total, anneal):
        return _elbo_terms_metaprior(model, batch, cfg_, rng, n_total, anneal)

    trace = _run(terms, [(leaves, cfg.steps)], leaves, data, cfg)
    return model, trace


def train_em(model: MetaPriorModel, data, cfg: TrainConfig):
    """Alternating blocks: update codes with the hypernet frozen, then the
    hypernet with codes frozen."""
    if cfg.mode != "em":
        raise ValueError("cfg.mode must be 'em'")
    if data.n < 1:
        raise ValueError("empty dataset")
    _tag_rho_scale(model, cfg)
    phi, xi = model.phi_leaves(), model.xi_leaves()

    def terms(batch, cfg_, rng, n_total, anneal):
        return _elbo_terms_metaprior(model, batch, cfg_, rng, n_total, anneal)

    trace = _run(terms, _em_schedule(cfg, phi, xi), phi + xi, data, cfg)
    return model, trace


def train_mf(mfbnn: MfBnn, data, cfg: TrainConfig):
    """Stochastic VI for the mean-field baseline with analytic weight KL."""
    if data.n < 1:
        raise ValueError("empty dataset")
    leaves = mfbnn.leaves()

    def terms(batch, cfg_, rng, n_total, anneal):
        return _elbo_terms_mf(mfbnn, batch, cfg_, rng, n_total, anneal)

    trace = _run(terms, [(leaves, cfg.steps)], leaves, data, cfg)
    return mfbnn, trace


# ---------------------------------------------------------------------------
# evaluation helpers shared by the CLI and the adaptation grids

def evaluate(model, batch, n_samples: int = 100, seed: int = 0) -> dict:
    """Predictive-mixture metrics on a batch; works for both model families."""
    sampler = model.weight_sampler(seed)
    pred = net.predictive(model.arch, sampler, batch.x, n_samples,
                          model.likelihood, model.obs_sigma)
    out = {}
    if model.likelihood == "categorical":
        out["accuracy"] = net.accuracy(pred.probs, batch.y)
        out["nll"] = net.classification_nll(pred, batch.y)
    else:
        out["rmse"] = float(np.sqrt(((pred.mean - batch.y) ** 2).mean()))
        out["nll"] = net.regression_nll(pred, batch.y, model.obs_sigma)
    return out
