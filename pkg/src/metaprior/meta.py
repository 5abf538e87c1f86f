"""Unit codes, the shared hypernetwork, and generation of network weights.

Each unit of the target network carries a code: either a frozen one-hot
basis vector or a trainable diagonal-Gaussian embedding. A weight linking
two units is produced by running the concatenation of their codes (plus an
optional global state code) through one shared hypernetwork, so all weights
touching a unit co-vary with that unit's code.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import graph
from .dist import (DiagGaussian, RngStream, rsample, kl_diag_gauss,
                   softplus_inv, stream_key)

CHECKPOINT_VERSION = 1

ACTIVATIONS = ("tanh", "relu")


class MissingCodeError(ValueError):
    """A required unit code is absent or has the wrong shape."""


@dataclass
class Architecture:
    """Layer sizes [V0..VL] of the target MLP plus its hidden activation."""

    layer_sizes: list
    activation: str = "tanh"

    def __post_init__(self):
        sizes = [int(v) for v in self.layer_sizes]
        if len(sizes) < 2 or any(v <= 0 for v in sizes):
            raise ValueError(f"need >= 2 positive layer sizes, got {self.layer_sizes}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        self.layer_sizes = sizes

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def n_units(self) -> int:
        return sum(self.layer_sizes)

    def unit_offset(self, layer: int) -> int:
        return sum(self.layer_sizes[:layer])


def default_output_scale(arch: Architecture):
    """Per-layer 1/sqrt(fan-in), keeping generated pre-activations O(1)."""
    return [1.0 / np.sqrt(arch.layer_sizes[l - 1]) for l in range(1, len(arch.layer_sizes))]


@dataclass
class UnitCode:
    """Read-only view of one unit's meta-representation."""

    layer: int
    index: int
    kind: str
    mean: np.ndarray
    sigma: np.ndarray


class UnitCodes:
    """Codes for every unit of a target network, stored per layer.

    `kind` is "latent" (trainable Gaussian embeddings) or "onehot" (frozen
    orthogonal basis vectors with D equal to the total unit count).
    """

    def __init__(self, arch: Architecture, kind: str, dim: int, layers):
        self.arch = arch
        self.kind = kind
        self.dim = dim
        self.layers = layers  # list of DiagGaussian, shapes (V_l, dim)

    @classmethod
    def latent(cls, arch: Architecture, dim: int, rng: RngStream,
               mean_scale: float = 0.1, sigma_init: float = 0.05) -> "UnitCodes":
        layers = [DiagGaussian.from_moments(mean_scale * rng.normal((v, dim)),
                                            sigma_init * np.ones((v, dim)))
                  for v in arch.layer_sizes]
        return cls(arch, "latent", dim, layers)

    @classmethod
    def onehot(cls, arch: Architecture) -> "UnitCodes":
        dim = arch.n_units
        layers = []
        for l, v in enumerate(arch.layer_sizes):
            means = np.zeros((v, dim))
            off = arch.unit_offset(l)
            means[np.arange(v), off + np.arange(v)] = 1.0
            # frozen point mass; rho kept far negative so sigma ~ 0
            layers.append(DiagGaussian(graph.leaf(means, requires_grad=False),
                                       graph.leaf(-40.0 * np.ones((v, dim)),
                                                  requires_grad=False)))
        return cls(arch, "onehot", dim, layers)

    def sample(self, rng: RngStream):
        """Per-layer code draws as graph Nodes; one-hot codes are their means."""
        if self.kind == "onehot":
            return [q.mean for q in self.layers]
        return [rsample(q, rng) for q in self.layers]

    def means(self):
        return [q.mean for q in self.layers]

    def kl(self) -> graph.Node:
        """KL against the standard-normal prior; zero for frozen one-hot codes."""
        if self.kind == "onehot":
            return graph.const(0.0)
        total = None
        for q in self.layers:
            term = kl_diag_gauss(q, DiagGaussian.standard(q.shape))
            total = term if total is None else graph.add(total, term)
        return total

    def leaves(self, layer_indices=None):
        if layer_indices is None:
            layer_indices = range(len(self.layers))
        out = []
        for l in layer_indices:
            out.extend(self.layers[l].leaves())
        return out

    def unit(self, layer: int, index: int) -> UnitCode:
        if not (0 <= layer < len(self.layers)):
            raise MissingCodeError(f"no layer {layer}")
        q = self.layers[layer]
        if not (0 <= index < q.shape[0]):
            raise MissingCodeError(f"no unit ({layer}, {index})")
        return UnitCode(layer, index, self.kind,
                        q.mean.value[index].copy(), q.sigma_value()[index].copy())

    def copy(self) -> "UnitCodes":
        return UnitCodes(self.arch, self.kind, self.dim,
                         [q.copy() for q in self.layers])


@dataclass
class GlobalState:
    """Optional global code appended to every weight code."""

    enabled: bool = False
    code: DiagGaussian = None

    @classmethod
    def create(cls, dim: int, rng: RngStream,
               mean_scale: float = 0.1, sigma_init: float = 0.05) -> "GlobalState":
        if dim <= 0:
            return cls(enabled=False, code=None)
        return cls(enabled=True,
                   code=DiagGaussian.from_moments(mean_scale * rng.normal((1, dim)),
                                                  sigma_init * np.ones((1, dim))))

    @property
    def dim(self) -> int:
        return self.code.shape[1] if self.enabled else 0

    def sample(self, rng: RngStream):
        return rsample(self.code, rng) if self.enabled else None

    def mean(self):
        return self.code.mean if self.enabled else None

    def kl(self) -> graph.Node:
        if not self.enabled:
            return graph.const(0.0)
        return kl_diag_gauss(self.code, DiagGaussian.standard(self.code.shape))

    def leaves(self):
        return self.code.leaves() if self.enabled else []

    def copy(self) -> "GlobalState":
        return GlobalState(self.enabled, self.code.copy() if self.enabled else None)


class HyperNet:
    """The shared weight generator g.

    A small fully connected net mapping a weight code to either (mu, raw
    sigma) per weight (gaussian head) or directly to a weight value with
    auxiliary noise appended to the input (implicit head). One instance
    serves the whole target network; per-target-layer output scales keep
    pre-activations O(1) under growing fan-in.
    """

    def __init__(self, unit_dim: int, hidden_sizes, head: str, output_scale,
                 rng: RngStream, global_dim: int = 0, noise_dim: int = 1,
                 sigma_raw_init: float = -1.05):
        if head not in ("gaussian", "implicit"):
            raise ValueError(f"unknown head {head!r}")
        self.unit_dim = int(unit_dim)
        self.global_dim = int(global_dim)
        self.noise_dim = int(noise_dim) if head == "implicit" else 0
        self.head = head
        self.hidden_sizes = [int(h) for h in hidden_sizes]
        self.output_scale = [float(s) for s in output_scale]
        if any(s <= 0 for s in self.output_scale):
            raise ValueError("output scales must be positive")
        self.sigma_raw_init = float(sigma_raw_init)

        in_dim = 2 * self.unit_dim + self.global_dim + self.noise_dim
        out_dim = 2 if head == "gaussian" else 1
        dims = [in_dim] + self.hidden_sizes + [out_dim]
        self.params = []
        for k in range(len(dims) - 1):
            w = rng.normal((dims[k], dims[k + 1])) / np.sqrt(dims[k])
            b = np.zeros(dims[k + 1])
            if k == len(dims) - 2 and head == "gaussian":
                b[1] = self.sigma_raw_init  # initial per-weight sigma ~ softplus(raw)
            self.params.append((graph.leaf(w), graph.leaf(b)))

    @property
    def in_dim(self) -> int:
        return self.params[0][0].shape[0]

    def leaves(self):
        out = []
        for w, b in self.params:
            out.extend([w, b])
        return out

    def apply(self, codes: graph.Node) -> graph.Node:
        """Batched evaluation on explicit code rows (noise already appended
        for the implicit head)."""
        w0, b0 = self.params[0]
        return self._finish(graph.add(graph.matmul(codes, w0), b0))

    def _finish(self, pre_first: graph.Node) -> graph.Node:
        x = pre_first
        for w, b in self.params[1:]:
            x = graph.add(graph.matmul(graph.tanh(x), w), b)
        return x

    def copy(self) -> "HyperNet":
        new = object.__new__(HyperNet)
        new.unit_dim = self.unit_dim
        new.global_dim = self.global_dim
        new.noise_dim = self.noise_dim
        new.head = self.head
        new.hidden_sizes = list(self.hidden_sizes)
        new.output_scale = list(self.output_scale)
        new.sigma_raw_init = self.sigma_raw_init
        new.params = [(graph.leaf(w.value), graph.leaf(b.value)) for w, b in self.params]
        return new


@dataclass
class GeneratedWeights:
    """One concrete set of target-network weights, as graph Nodes.

    layers[i] holds (W, b) for target layer i+1, W of shape
    (V_{i+1}, V_i) and b of shape (V_{i+1},).
    """

    layers: list

    def __iter__(self):
        return iter(self.layers)

    def __len__(self):
        return len(self.layers)


def weight_code(z_i: graph.Node, z_j=None, z_s=None) -> graph.Node:
    """Concatenated code [z_i, z_j(, z_s)] for one weight; a bias uses zeros
    as the second code (pass z_j=None)."""
    if z_i.value.ndim != 1:
        raise graph.ShapeError(f"expected 1-D code, got shape {z_i.shape}")
    if z_j is None:
        z_j = graph.const(np.zeros(z_i.shape))
    if z_j.value.ndim != 1 or z_j.shape != z_i.shape:
        raise graph.ShapeError(f"code dims differ: {z_i.shape} vs {z_j.shape}")
    parts = [z_i, z_j]
    if z_s is not None:
        zs = z_s
        if zs.value.ndim == 2:
            zs = graph.reshape(zs, (zs.shape[1],))
        parts.append(zs)
    return graph.concat(parts, axis=0)


def generate_weights(arch: Architecture, codes, hyper: HyperNet, rng: RngStream,
                     mode: str = "sample", global_code=None) -> GeneratedWeights:
    """Generate every weight and bias of the target network from unit codes.

    `codes` is a list of per-layer Nodes of shape (V_l, D), typically drawn
    by UnitCodes.sample. All weights and biases of one target layer are
    produced by a single batched hypernetwork evaluation over
    V_l * (V_{l-1} + 1) code rows; the bias rows use a zero second code.
    With mode="mean" all generator noise is clamped to zero.
    """
    if mode not in ("mean", "sample"):
        raise ValueError(f"unknown mode {mode!r}")
    sizes = arch.layer_sizes
    if len(codes) != len(sizes):
        raise MissingCodeError(f"need codes for {len(sizes)} layers, got {len(codes)}")
    d = hyper.unit_dim
    for l, (z, v) in enumerate(zip(codes, sizes)):
        if z.value.ndim != 2 or z.shape[0] != v or z.shape[1] != d:
            u = 0 if z.value.ndim != 2 else min(z.shape[0], v)
            raise MissingCodeError(
                f"layer {l}: expected codes of shape ({v}, {d}), got {z.shape} "
                f"(first bad unit ({l}, {u}))")
    if (global_code is None) != (hyper.global_dim == 0):
        raise MissingCodeError("global code presence must match hypernet global_dim")
    if len(hyper.output_scale) != arch.n_layers:
        raise ValueError("output_scale length must equal the number of target layers")

    w0, b0 = hyper.params[0]
    w0_i = graph.slice_axis(w0, 0, 0, d)
    w0_j = graph.slice_axis(w0, 0, d, 2 * d)
    col = 2 * d
    if hyper.global_dim:
        w0_s = graph.slice_axis(w0, 0, col, col + hyper.global_dim)
        col += hyper.global_dim
        global_first = graph.matmul(global_code, w0_s)  # (1, h)
    if hyper.noise_dim:
        w0_e = graph.slice_axis(w0, 0, col, col + hyper.noise_dim)

    out_layers = []
    for l in range(1, len(sizes)):
        v_out, v_in = sizes[l], sizes[l - 1]
        n_w = v_out * v_in
        rows = n_w + v_out
        # first hypernet layer, decomposed: code @ W0 splits into the two
        # unit-code blocks, so the big (rows x code_dim) matrix never exists;
        # b0 (and any global-state contribution) folds into the small block
        a = graph.add(graph.matmul(codes[l], w0_i), b0)  # (v_out, h)
        if hyper.global_dim:
            a = graph.add(a, global_first)
        b_blk = graph.matmul(codes[l - 1], w0_j)         # (v_in, h)
        pre_w = graph.add(graph.repeat_rows(a, v_in), graph.tile_rows(b_blk, v_out))
        pre = graph.concat([pre_w, a], axis=0)  # bias rows: zero second code
        if hyper.noise_dim:
            eps_in = (rng.normal((rows, hyper.noise_dim)) if mode == "sample"
                      else np.zeros((rows, hyper.noise_dim)))
            pre = graph.add(pre, graph.matmul(graph.const(eps_in), w0_e))
        out = hyper._finish(pre)

        if hyper.head == "gaussian":
            mu = graph.slice_axis(out, 1, 0, 1)
            if mode == "sample":
                sig = graph.softplus(graph.slice_axis(out, 1, 1, 2))
                eps_w = graph.const(rng.normal((rows, 1)))
                flat = graph.add(mu, graph.mul(sig, eps_w))
            else:
                flat = mu
        else:
            flat = out
        flat = graph.mul(flat, graph.const(hyper.output_scale[l - 1]))
        w_node = graph.reshape(graph.slice_axis(flat, 0, 0, n_w), (v_out, v_in))
        b_node = graph.reshape(graph.slice_axis(flat, 0, n_w, rows), (v_out,))
        out_layers.append((w_node, b_node))
    return GeneratedWeights(out_layers)


class MetaPriorModel:
    """A target architecture bound to unit codes and a shared hypernetwork."""

    def __init__(self, arch: Architecture, codes: UnitCodes, hyper: HyperNet,
                 global_state: GlobalState, likelihood: str, obs_sigma: float = 1.0):
        if likelihood not in ("gaussian", "categorical"):
            raise ValueError(f"unknown likelihood {likelihood!r}")
        self.arch = arch
        self.codes = codes
        self.hyper = hyper
        self.global_state = global_state
        self.likelihood = likelihood
        self.obs_sigma = float(obs_sigma)

    @classmethod
    def create(cls, arch: Architecture, kind: str = "latent", dim: int = 2,
               hyper_hidden=(32,), head: str = "gaussian", seed: int = 0,
               likelihood: str = "gaussian", obs_sigma: float = 1.0,
               global_dim: int = 0, output_scale=None,
               sigma_raw_init: float = -1.05) -> "MetaPriorModel":
        rng = RngStream(seed, stream_id=17)
        if kind == "latent":
            codes = UnitCodes.latent(arch, dim, rng)
        elif kind == "onehot":
            codes = UnitCodes.onehot(arch)
        else:
            raise ValueError(f"unknown code kind {kind!r}")
        gs = GlobalState.create(global_dim, rng)
        if output_scale is None:
            output_scale = default_output_scale(arch)
        hyper = HyperNet(codes.dim, hyper_hidden, head, output_scale, rng,
                         global_dim=gs.dim, sigma_raw_init=sigma_raw_init)
        return cls(arch, codes, hyper, gs, likelihood, obs_sigma)

    def sample_codes(self, rng: RngStream):
        return self.codes.sample(rng), self.global_state.sample(rng)

    def mean_codes(self):
        return self.codes.means(), self.global_state.mean()

    def sample_weights(self, rng: RngStream, mode: str = "sample") -> GeneratedWeights:
        z, zs = self.sample_codes(rng)
        return generate_weights(self.arch, z, self.hyper, rng, mode=mode, global_code=zs)

    def weight_sampler(self, seed: int, mode: str = "sample"):
        """Per-draw callable for predictive mixtures; draw s is addressed by
        its own substream so draws are order-independent."""
        def draw(s):
            return self.sample_weights(RngStream(seed, stream_key(91, s)), mode=mode)
        return draw

    def kl(self) -> graph.Node:
        return graph.add(self.codes.kl(), self.global_state.kl())

    def phi_leaves(self, layer_indices=None):
        return self.codes.leaves(layer_indices) + self.global_state.leaves()

    def xi_leaves(self):
        return self.hyper.leaves()

    def copy(self) -> "MetaPriorModel":
        return MetaPriorModel(self.arch, self.codes.copy(), self.hyper.copy(),
                              self.global_state.copy(), self.likelihood, self.obs_sigma)

    def with_codes(self, codes: UnitCodes, global_state=None) -> "MetaPriorModel":
        """Same hypernetwork, different codes (task adaptation)."""
        gs = global_state if global_state is not None else self.global_state
        return MetaPriorModel(self.arch, codes, self.hyper, gs,
                              self.likelihood, self.obs_sigma)


# ---------------------------------------------------------------------------
# checkpoint I/O

def _gauss_to_json(q: DiagGaussian):
    return {"mean": q.mean.value.tolist(), "rho": q.rho.value.tolist(),
            "trainable": q.trainable}


def _gauss_from_json(d) -> DiagGaussian:
    trainable = bool(d.get("trainable", True))
    return DiagGaussian(graph.leaf(d["mean"], requires_grad=trainable),
                        graph.leaf(d["rho"], requires_grad=trainable))


def save_checkpoint(path, model, seed: int = 0, extra=None) -> None:
    """Write a self-describing JSON checkpoint for a MetaPrior or MF model."""
    from .infer import MfBnn

    doc = {"format_version": CHECKPOINT_VERSION, "seed": int(seed)}
    if isinstance(model, MetaPriorModel):
        doc["family"] = "metaprior"
        doc["arch"] = {"layer_sizes": model.arch.layer_sizes,
                       "activation": model.arch.activation}
        doc["likelihood"] = model.likelihood
        doc["obs_sigma"] = model.obs_sigma
        doc["codes"] = {"kind": model.codes.kind, "dim": model.codes.dim,
                        "layers": [_gauss_to_json(q) for q in model.codes.layers]}
        gs = model.global_state
        doc["global_state"] = _gauss_to_json(gs.code) if gs.enabled else None
        h = model.hyper
        doc["hypernet"] = {
            "unit_dim": h.unit_dim, "global_dim": h.global_dim,
            "noise_dim": h.noise_dim, "head": h.head,
            "hidden_sizes": h.hidden_sizes, "output_scale": h.output_scale,
            "sigma_raw_init": h.sigma_raw_init,
            "params": [{"w": w.value.tolist(), "b": b.value.tolist()}
                       for w, b in h.params],
        }
    elif isinstance(model, MfBnn):
        doc["family"] = "mf"
        doc["arch"] = {"layer_sizes": model.arch.layer_sizes,
                       "activation": model.arch.activation}
        doc["likelihood"] = model.likelihood
        doc["obs_sigma"] = model.obs_sigma
        doc["prior"] = {"kind": model.prior_kind, "variance": model.prior_variance}
        doc["posteriors"] = [{"w": _gauss_to_json(qw), "b": _gauss_to_json(qb)}
                             for qw, qb in model.posteriors]
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    if extra:
        doc["extra"] = extra
    with open(path, "w") as f:
        json.dump(doc, f)


def load_checkpoint(path):
    """Read a checkpoint; returns (model, metadata dict)."""
    from .infer import MfBnn

    with open(path) as f:
        doc = json.load(f)
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('format_version')}")
    arch = Architecture(doc["arch"]["layer_sizes"], doc["arch"]["activation"])
    if doc["family"] == "metaprior":
        c = doc["codes"]
        codes = UnitCodes(arch, c["kind"], int(c["dim"]),
                          [_gauss_from_json(q) for q in c["layers"]])
        gs_doc = doc["global_state"]
        gs = (GlobalState(True, _gauss_from_json(gs_doc)) if gs_doc
              else GlobalState(False, None))
        h = doc["hypernet"]
        hyper = object.__new__(HyperNet)
        hyper.unit_dim = int(h["unit_dim"])
        hyper.global_dim = int(h["global_dim"])
        hyper.noise_dim = int(h["noise_dim"])
        hyper.head = h["head"]
        hyper.hidden_sizes = [int(x) for x in h["hidden_sizes"]]
        hyper.output_scale = [float(x) for x in h["output_scale"]]
        hyper.sigma_raw_init = float(h["sigma_raw_init"])
        hyper.params = [(graph.leaf(p["w"]), graph.leaf(p["b"])) for p in h["params"]]
        model = MetaPriorModel(arch, codes, hyper, gs,
                               doc["likelihood"], doc["obs_sigma"])
    elif doc["family"] == "mf":
        posts = [(_gauss_from_json(p["w"]), _gauss_from_json(p["b"]))
                 for p in doc["posteriors"]]
        model = MfBnn(arch, posteriors=posts,
                      prior_kind=doc["prior"]["kind"],
                      prior_variance=doc["prior"]["variance"],
                      likelihood=doc["likelihood"], obs_sigma=doc["obs_sigma"])
    else:
        raise ValueError(f"unknown checkpoint family {doc['family']!r}")
    meta = {k: doc.get(k) for k in ("seed", "family", "extra")}
    return model, meta
