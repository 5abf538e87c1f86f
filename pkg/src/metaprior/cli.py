"""Experiment runner.

Verbs: run, draw-functions, weight-correlations, dump-embeddings, few-shot,
surgery. Configuration is a flat JSON file plus --key value overrides
(overrides win, unknown keys are rejected). Every run writes its resolved
config, a training trace, metrics, a checkpoint, and experiment-specific
plot-data files into the output directory. Exit codes: 0 success, 2 config
error, 1 training divergence.
"""

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from . import graph, net
from .adapt import (ALL_CODES, FewShotProtocol, SurgeryMask, few_shot_eval,
                    grid_to_csv)
from .data import (Batch, PermutationTask, find_mnist, gen_cubic, gen_digits,
                   gen_half_moons, load_mnist, train_test_split)
from .dist import RngStream, stream_key
from .infer import (MfBnn, TrainConfig, TrainingDivergedError, elbo_metaprior,
                    elbo_mf, evaluate, train_em, train_joint, train_mf)
from .meta import (Architecture, MetaPriorModel, generate_weights,
                   load_checkpoint, save_checkpoint)

DATA_DIR_ENV = "METAPRIOR_DATA_DIR"


def _fmt(v) -> str:
    """Shortest round-trip decimal form for CSV cells."""
    return repr(float(v))


class ConfigError(ValueError):
    """Bad experiment configuration; maps to exit code 2."""


_COMMON_DEFAULTS = {
    "model": "metaprior-lv",    # metaprior-lv | metaprior-oh | mf | mf-neal
    "seed": 0,
    "out_dir": None,
    "data_dir": None,           # None: $METAPRIOR_DATA_DIR
    "data_seed": 0,
    "hidden_units": 100,
    "activation": None,         # None: experiment default
    "code_dim": None,           # None: experiment default
    "hyper_hidden": [32],
    "head": "gaussian",
    "global_dim": 0,
    "prior_variance": 1.0,      # mean-field iso prior
    "steps": None,
    "lr": None,
    "batch_size": None,
    "M": 1,
    "S": 1,
    "kl_scale": None,
    "mode": "joint",
    "phi_steps": 10,
    "xi_steps": 10,
    "kl_warmup": False,
    "trace_every": 25,
    "eval_samples": 100,
}

_EXPERIMENT_DEFAULTS = {
    "cubic": {
        "n_train": 20, "x_lo": -4.0, "x_hi": 4.0, "noise_var": 3.0,
        "obs_noise_var": None,  # None: same as noise_var
        "grid_lo": -6.0, "grid_hi": 6.0, "grid_n": 121,
        "activation": "tanh", "code_dim": 2, "steps": 15000, "lr": 3e-3,
    },
    "halfmoon": {
        "n_data": 2500, "noise_sd": 0.1,
        "activation": "tanh", "code_dim": 2, "steps": 6000, "lr": 3e-3,
        "batch_size": 128,
    },
    "mnist": {
        "dataset": "auto",      # auto | mnist | digits
        "n_train": 10000, "n_test": 2000, "mnist_full": False, "deform": 2.0,
        "activation": "relu", "code_dim": 10, "steps": 5000, "lr": 3e-3,
        "batch_size": 128,
    },
    "fewshot": {
        "dataset": "auto",
        "n_train": 10000, "n_test": 2000, "mnist_full": False, "deform": 2.0,
        "activation": "relu", "code_dim": 10, "steps": 5000, "lr": 3e-3,
        "batch_size": 128,
        "base_checkpoint": None,
        "task_seed": 100, "permute_input": True, "permute_classes": True,
        "shots": [20, 200, 2000], "budgets": [50, 200, 800],
        "mask": "all", "adapt_lr": 1e-2, "adapt_batch_size": 256,
        "eval_size": 2000, "grid_eval_samples": 30,
    },
    "surgery": {
        "dataset": "auto",
        "n_train": 10000, "n_test": 2000, "mnist_full": False, "deform": 2.0,
        "activation": "relu", "code_dim": 10, "steps": 5000, "lr": 3e-3,
        "batch_size": 128,
        "base_checkpoint": None,
        "task_seed": 100, "permute_input": False, "permute_classes": True,
        "shots": [50, 200, 2000], "budgets": [100, 400, 1500],
        "mask": "output", "adapt_lr": 1e-2, "adapt_batch_size": 256,
        "eval_size": 2000, "grid_eval_samples": 30,
    },
}

MODELS = ("metaprior-lv", "metaprior-oh", "mf", "mf-neal")


def resolve_config(experiment, file_config=None, overrides=None) -> dict:
    if experiment not in _EXPERIMENT_DEFAULTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    cfg = dict(_COMMON_DEFAULTS)
    cfg.update(_EXPERIMENT_DEFAULTS[experiment])
    cfg["experiment"] = experiment
    for source, name in ((file_config, "config file"), (overrides, "override")):
        if not source:
            continue
        for key, value in source.items():
            if key == "experiment":
                continue
            if key not in cfg:
                raise ConfigError(f"unknown {name} key {key!r}")
            cfg[key] = value
    if cfg["model"] not in MODELS:
        raise ConfigError(f"unknown model {cfg['model']!r}")
    if cfg["out_dir"] is None:
        cfg["out_dir"] = f"runs/{experiment}-{cfg['model']}-seed{cfg['seed']}"
    if cfg["data_dir"] is None:
        cfg["data_dir"] = os.environ.get(DATA_DIR_ENV, "")
    return cfg


def _parse_override_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_overrides(tokens) -> dict:
    """--key value pairs following the named options."""
    out = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--") or i + 1 >= len(tokens):
            raise ConfigError(f"expected --key value pairs, got {tokens[i:]}")
        out[tok[2:].replace("-", "_")] = _parse_override_value(tokens[i + 1])
        i += 2
    return out


# ---------------------------------------------------------------------------
# data and model assembly

def _load_classification_data(cfg):
    """MNIST from IDX files when available, otherwise the digit stand-in."""
    dataset = cfg["dataset"]
    files = find_mnist(cfg["data_dir"])
    if dataset == "auto":
        dataset = "mnist" if files else "digits"
    if dataset == "mnist":
        if not files:
            raise ConfigError(
                f"MNIST IDX files not found under data_dir={cfg['data_dir']!r}; "
                f"set {DATA_DIR_ENV} or use dataset=digits")
        train = load_mnist(files["train_images"], files["train_labels"])
        test = load_mnist(files["test_images"], files["test_labels"])
        if not cfg["mnist_full"]:
            train = train.take(np.arange(min(cfg["n_train"], train.n)))
    else:
        train = gen_digits(cfg["n_train"], seed=cfg["data_seed"],
                           deform=cfg["deform"])
        test = gen_digits(cfg["n_test"], seed=cfg["data_seed"] + 1,
                          deform=cfg["deform"])
    return train, test, dataset


def _build_model(cfg, arch, likelihood, obs_sigma):
    name = cfg["model"]
    if name in ("metaprior-lv", "metaprior-oh"):
        return MetaPriorModel.create(
            arch, kind=("latent" if name == "metaprior-lv" else "onehot"),
            dim=cfg["code_dim"], hyper_hidden=cfg["hyper_hidden"],
            head=cfg["head"], seed=cfg["seed"], likelihood=likelihood,
            obs_sigma=obs_sigma, global_dim=cfg["global_dim"])
    return MfBnn(arch, prior_kind=("neal" if name == "mf-neal" else "iso"),
                 prior_variance=cfg["prior_variance"], likelihood=likelihood,
                 obs_sigma=obs_sigma, seed=cfg["seed"])


def _train_config(cfg) -> TrainConfig:
    return TrainConfig(M=cfg["M"], S=cfg["S"], batch_size=cfg["batch_size"],
                       steps=cfg["steps"], lr=cfg["lr"],
                       kl_scale=cfg["kl_scale"], seed=cfg["seed"],
                       mode=cfg["mode"],
                       em_inner_steps=(cfg["phi_steps"], cfg["xi_steps"]),
                       kl_warmup=cfg["kl_warmup"],
                       trace_every=cfg["trace_every"])


def _train(model, data, cfg):
    tc = _train_config(cfg)
    if isinstance(model, MfBnn):
        return train_mf(model, data, tc)
    if cfg["mode"] == "em":
        return train_em(model, data, tc)
    return train_joint(model, data, tc)


def _final_elbo(model, data, cfg) -> float:
    tc = _train_config(cfg)
    rng = RngStream(cfg["seed"], stream_id=999)
    probe = data if data.n <= 2048 else data.take(np.arange(2048))
    if isinstance(model, MfBnn):
        node = elbo_mf(model, probe, tc, rng, n_total=data.n)
    else:
        node = elbo_metaprior(model, probe, tc, rng, n_total=data.n)
    return float(node.value)


def _write_trace(trace, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "elbo", "loglik", "kl", "seconds"])
        for r in trace:
            w.writerow([r.step, _fmt(r.elbo), _fmt(r.loglik), _fmt(r.kl),
                        _fmt(r.seconds)])


def _write_metrics(path, cfg, values):
    doc = {"experiment": cfg["experiment"], "model": cfg["model"],
           "seed": cfg["seed"]}
    doc.update(values)
    with open(path, "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True)


def _mask_from_label(label) -> SurgeryMask:
    if label == "all":
        return ALL_CODES
    parts = set(str(label).split("+"))
    bad = parts - {"input", "hidden", "output"}
    if bad:
        raise ConfigError(f"unknown mask parts {sorted(bad)}")
    return SurgeryMask("input" in parts, "hidden" in parts, "output" in parts)


# ---------------------------------------------------------------------------
# experiments

def _run_cubic(cfg, out_dir):
    t0 = time.perf_counter()
    obs_var = cfg["obs_noise_var"]
    obs_sigma = float(np.sqrt(cfg["noise_var"] if obs_var is None else obs_var))
    data = gen_cubic(cfg["n_train"], (cfg["x_lo"], cfg["x_hi"]),
                     cfg["noise_var"], seed=cfg["data_seed"])
    arch = Architecture([1, cfg["hidden_units"], 1], cfg["activation"])
    model = _build_model(cfg, arch, "gaussian", obs_sigma)
    model, trace = _train(model, data, cfg)

    sampler = model.weight_sampler(stream_key(cfg["seed"], 2))
    grid = np.linspace(cfg["grid_lo"], cfg["grid_hi"], cfg["grid_n"])[:, None]
    pred = net.predictive(arch, sampler, grid, cfg["eval_samples"],
                          "gaussian", obs_sigma)
    with open(os.path.join(out_dir, "fit.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["x", "pred_mean", "pred_std"])
        for i in range(grid.shape[0]):
            w.writerow([_fmt(grid[i, 0]), _fmt(pred.mean[i, 0]),
                        _fmt(pred.std[i, 0])])

    xs = np.linspace(cfg["x_lo"], cfg["x_hi"], 101)[:, None]
    pred_in = net.predictive(arch, sampler, xs, cfg["eval_samples"],
                             "gaussian", obs_sigma)
    rmse = float(np.sqrt(((pred_in.mean - xs ** 3) ** 2).mean()))
    test = gen_cubic(200, (cfg["x_lo"], cfg["x_hi"]), cfg["noise_var"],
                     seed=cfg["data_seed"] + 1)
    nll = net.regression_nll(
        net.predictive(arch, sampler, test.x, cfg["eval_samples"],
                       "gaussian", obs_sigma),
        test.y, obs_sigma)
    return model, trace, data, {
        "test_rmse": rmse, "test_nll": nll,
        "elbo_final": trace[-1].elbo if trace else _final_elbo(model, data, cfg),
        "wall_seconds": time.perf_counter() - t0,
    }


def _run_classification(cfg, out_dir, train_batch, test_batch):
    t0 = time.perf_counter()
    arch = Architecture([train_batch.x.shape[1], cfg["hidden_units"],
                         int(test_batch.y.max()) + 1], cfg["activation"])
    model = _build_model(cfg, arch, "categorical", 1.0)
    model, trace = _train(model, train_batch, cfg)
    metrics = evaluate(model, test_batch, cfg["eval_samples"],
                       seed=stream_key(cfg["seed"], 3))
    return model, trace, {
        "test_accuracy": metrics["accuracy"], "test_nll": metrics["nll"],
        "elbo_final": trace[-1].elbo if trace else _final_elbo(model, train_batch, cfg),
        "wall_seconds": time.perf_counter() - t0,
    }


def _run_halfmoon(cfg, out_dir):
    data = gen_half_moons(cfg["n_data"], cfg["noise_sd"], seed=cfg["data_seed"])
    train, test = train_test_split(data, 0.8, seed=cfg["data_seed"])
    model, trace, metrics = _run_classification(cfg, out_dir, train, test)
    return model, trace, train, metrics


def _run_mnist(cfg, out_dir):
    train, test, dataset = _load_classification_data(cfg)
    cfg["dataset"] = dataset
    model, trace, metrics = _run_classification(cfg, out_dir, train, test)
    return model, trace, train, metrics


def _run_adaptation_grid(cfg, out_dir):
    t0 = time.perf_counter()
    train, test, dataset = _load_classification_data(cfg)
    cfg["dataset"] = dataset
    if cfg["base_checkpoint"]:
        model, _ = load_checkpoint(cfg["base_checkpoint"])
        trace = []
    else:
        arch = Architecture([train.x.shape[1], cfg["hidden_units"],
                             int(test.y.max()) + 1], cfg["activation"])
        model = _build_model(cfg, arch, "categorical", 1.0)
        model, trace = _train(model, train, cfg)
    n_classes = model.arch.layer_sizes[-1]
    task = PermutationTask.random(model.arch.layer_sizes[0], n_classes,
                                  cfg["task_seed"],
                                  permute_input=cfg["permute_input"],
                                  permute_classes=cfg["permute_classes"])
    protocol = FewShotProtocol(cfg["shots"], cfg["budgets"])
    mask = _mask_from_label(cfg["mask"])
    adapt_cfg = TrainConfig(M=cfg["M"], S=cfg["S"],
                            batch_size=cfg["adapt_batch_size"],
                            steps=0, lr=cfg["adapt_lr"], seed=cfg["seed"])
    rows = few_shot_eval(model, test, task, protocol, mask, adapt_cfg,
                         eval_size=cfg["eval_size"],
                         eval_samples=cfg["grid_eval_samples"])
    grid_to_csv(rows, os.path.join(out_dir, "grid.csv"))
    clean = evaluate(model, test, cfg["grid_eval_samples"],
                     seed=stream_key(cfg["seed"], 3))
    metrics = {
        "test_accuracy": clean["accuracy"], "test_nll": clean["nll"],
        "elbo_final": trace[-1].elbo if trace else None,
        "wall_seconds": time.perf_counter() - t0,
    }
    return model, trace, train, metrics


def run_experiment(cfg) -> dict:
    """Execute one configured experiment; returns the metrics dict."""
    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w") as f:
        json.dump(cfg, f, indent=1, sort_keys=True)

    experiment = cfg["experiment"]
    if experiment == "cubic":
        model, trace, train_data, metrics = _run_cubic(cfg, out_dir)
    elif experiment == "halfmoon":
        model, trace, train_data, metrics = _run_halfmoon(cfg, out_dir)
    elif experiment == "mnist":
        model, trace, train_data, metrics = _run_mnist(cfg, out_dir)
    elif experiment in ("fewshot", "surgery"):
        model, trace, train_data, metrics = _run_adaptation_grid(cfg, out_dir)
    else:
        raise ConfigError(f"unknown experiment {experiment!r}")

    # re-echo the config: dataset resolution happens during the run
    with open(os.path.join(out_dir, "config.json"), "w") as f:
        json.dump(cfg, f, indent=1, sort_keys=True)
    _write_trace(trace, os.path.join(out_dir, "trace.csv"))
    save_checkpoint(os.path.join(out_dir, "checkpoint.json"), model,
                    seed=cfg["seed"])
    _write_metrics(os.path.join(out_dir, "metrics.json"), cfg, metrics)
    return metrics


# ---------------------------------------------------------------------------
# figure-data verbs

def draw_functions(checkpoint_path, out_path, offsets, unit="random",
                   direction="random", grid=(-6.0, 6.0, 121), seed=0,
                   mf_draws=None, mf_weights=40):
    """Function draws on a 1-D-input model.

    Hypernetwork checkpoints: all codes clamped to their posterior means
    except one hidden unit, whose mean is shifted by offset * direction;
    weights are generated in mean mode, one curve per offset. Mean-field
    checkpoints: each curve resamples `mf_weights` randomly chosen weights
    from the prior, the rest staying at their posterior means.
    """
    model, _ = load_checkpoint(checkpoint_path)
    if model.arch.layer_sizes[0] != 1:
        raise ConfigError("draw-functions needs a model with 1-D input")
    xs = np.linspace(grid[0], grid[1], int(grid[2]))[:, None]
    rng = RngStream(seed, stream_id=11)
    rows = []
    if isinstance(model, MetaPriorModel):
        hidden = model.arch.layer_sizes[1]
        if unit == "random":
            u = int(rng.integers(0, hidden))
        else:
            u = int(unit)
            if not (0 <= u < hidden):
                raise ConfigError(f"unit {u} outside hidden layer of size {hidden}")
        d = model.codes.dim
        if direction == "random":
            vec = rng.normal(d)
            vec = vec / np.linalg.norm(vec)
        elif str(direction).startswith("basis"):
            k = int(str(direction)[5:] or 0)
            if not (0 <= k < d):
                raise ConfigError(f"basis axis {k} outside code dim {d}")
            vec = np.zeros(d)
            vec[k] = 1.0
        else:
            raise ConfigError(f"unknown direction {direction!r}")
        for off in offsets:
            means = [graph.const(q.mean.value) for q in model.codes.layers]
            shifted = means[1].value.copy()
            shifted[u] += off * vec
            means[1] = graph.const(shifted)
            zs = model.global_state.mean()
            w = generate_weights(model.arch, means, model.hyper,
                                 RngStream(seed, stream_id=12), mode="mean",
                                 global_code=zs)
            ys = net.forward(model.arch, w, xs).value
            rows.extend((off, xs[i, 0], ys[i, 0]) for i in range(xs.shape[0]))
    else:
        n_curves = mf_draws if mf_draws is not None else len(list(offsets))
        coords = []
        for l, (qw, _qb) in enumerate(model.posteriors):
            for i in range(qw.shape[0]):
                for j in range(qw.shape[1]):
                    coords.append((l, i, j))
        for curve in range(n_curves):
            crng = RngStream(seed, stream_key(13, curve))
            layers = [[qw.mean.value.copy(), qb.mean.value.copy()]
                      for qw, qb in model.posteriors]
            pick = crng.permutation(len(coords))[:mf_weights]
            for idx in pick:
                l, i, j = coords[idx]
                sd = np.sqrt(model.layer_prior_variance(l + 1))
                layers[l][0][i, j] = sd * crng.normal()
            w = [(graph.const(wl), graph.const(bl)) for wl, bl in layers]
            ys = net.forward(model.arch, w, xs).value
            rows.extend((float(curve), xs[i, 0], ys[i, 0])
                        for i in range(xs.shape[0]))
    with open(out_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["offset", "x", "y"])
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return rows


def sample_weight_correlations(checkpoint_path, out_path, layer=1, unit=0,
                               n_samples=1000, seed=0):
    """Ancestral-sampling scatter for one unit.

    All codes are clamped to their means; the chosen unit's code is drawn
    from its posterior; weights are then sampled from the generator. Each
    row records the code offset from its mean plus the unit's incoming-row
    and outgoing-column weights.
    """
    model, _ = load_checkpoint(checkpoint_path)
    if not isinstance(model, MetaPriorModel):
        raise ConfigError("weight-correlations needs a hypernetwork checkpoint")
    sizes = model.arch.layer_sizes
    if not (0 <= layer < len(sizes)) or not (0 <= unit < sizes[layer]):
        raise ConfigError(f"no unit ({layer}, {unit})")
    q = model.codes.layers[layer]
    mu = q.mean.value[unit]
    sd = q.sigma_value()[unit]
    zs = model.global_state.mean()
    rows = []
    for s in range(n_samples):
        rng = RngStream(seed, stream_key(19, s))
        z_u = mu + sd * rng.normal(mu.shape)
        means = [graph.const(ql.mean.value) for ql in model.codes.layers]
        shifted = means[layer].value.copy()
        shifted[unit] = z_u
        means[layer] = graph.const(shifted)
        w = generate_weights(model.arch, means, model.hyper, rng,
                             mode="sample", global_code=zs)
        incoming = (w.layers[layer - 1][0].value[unit, :] if layer >= 1
                    else np.zeros(0))
        outgoing = (w.layers[layer][0].value[:, unit] if layer < len(sizes) - 1
                    else np.zeros(0))
        rows.append(np.concatenate([z_u - mu, incoming, outgoing]))
    d = mu.shape[0]
    n_in = rows[0].shape[0] - d - (sizes[layer + 1] if layer < len(sizes) - 1 else 0)
    header = ([f"offset_{k}" for k in range(d)]
              + [f"in_{k}" for k in range(n_in)]
              + [f"out_{k}" for k in range(rows[0].shape[0] - d - n_in)])
    with open(out_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return np.stack(rows), header


def dump_embeddings(checkpoint_path, out_path):
    """Per-unit code means and sigmas plus a PCA 2-D projection."""
    model, _ = load_checkpoint(checkpoint_path)
    if not isinstance(model, MetaPriorModel):
        raise ConfigError("dump-embeddings needs a hypernetwork checkpoint")
    means = np.concatenate([q.mean.value for q in model.codes.layers])
    sigmas = np.concatenate([q.sigma_value() for q in model.codes.layers])
    centered = means - means.mean(axis=0)
    _u, _s, vt = np.linalg.svd(centered, full_matrices=False)
    proj = centered @ vt[:2].T if vt.shape[0] >= 2 else np.zeros((means.shape[0], 2))
    d = model.codes.dim
    with open(out_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["layer", "index"] + [f"mean_{k}" for k in range(d)]
                   + [f"sigma_{k}" for k in range(d)] + ["pca_x", "pca_y"])
        row = 0
        for l, v in enumerate(model.arch.layer_sizes):
            for u in range(v):
                w.writerow([l, u] + [_fmt(x) for x in means[row]]
                           + [_fmt(x) for x in sigmas[row]]
                           + [_fmt(proj[row, 0]), _fmt(proj[row, 1])])
                row += 1
    return means, sigmas, proj


# ---------------------------------------------------------------------------
# argument parsing

def _build_parser():
    p = argparse.ArgumentParser(prog="metaprior",
                                description="hypernetwork-BNN experiment runner")
    sub = p.add_subparsers(dest="verb", required=True)

    for verb, exp in (("run", None), ("few-shot", "fewshot"),
                      ("surgery", "surgery")):
        rp = sub.add_parser(verb)
        if exp is None:
            rp.add_argument("experiment",
                            choices=sorted(_EXPERIMENT_DEFAULTS))
        rp.add_argument("--config", default=None, help="flat JSON config file")
        rp.add_argument("--out", default=None, help="output directory")
        rp.set_defaults(fixed_experiment=exp)

    dp = sub.add_parser("draw-functions")
    dp.add_argument("--checkpoint", required=True)
    dp.add_argument("--out", required=True)
    dp.add_argument("--offsets", default="-3,-2,-1,0,1,2,3")
    dp.add_argument("--unit", default="random")
    dp.add_argument("--direction", default="random")
    dp.add_argument("--grid", default="-6,6,121")
    dp.add_argument("--seed", type=int, default=0)
    dp.add_argument("--mf-draws", type=int, default=None)
    dp.add_argument("--mf-weights", type=int, default=40)

    wp = sub.add_parser("weight-correlations")
    wp.add_argument("--checkpoint", required=True)
    wp.add_argument("--out", required=True)
    wp.add_argument("--layer", type=int, default=1)
    wp.add_argument("--unit", type=int, default=0)
    wp.add_argument("--samples", type=int, default=1000)
    wp.add_argument("--seed", type=int, default=0)

    ep = sub.add_parser("dump-embeddings")
    ep.add_argument("--checkpoint", required=True)
    ep.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    parser = _build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        if args.verb in ("run", "few-shot", "surgery"):
            experiment = args.fixed_experiment or args.experiment
            file_cfg = None
            if args.config:
                with open(args.config) as f:
                    file_cfg = json.load(f)
                experiment = file_cfg.get("experiment", experiment)
            overrides = parse_overrides(extra)
            if args.out is not None:
                overrides["out_dir"] = args.out
            cfg = resolve_config(experiment, file_cfg, overrides)
            metrics = run_experiment(cfg)
            print(json.dumps(metrics, sort_keys=True))
        elif args.verb == "draw-functions":
            if extra:
                raise ConfigError(f"unexpected arguments {extra}")
            offsets = [float(v) for v in str(args.offsets).split(",")]
            lo, hi, n = (float(v) for v in str(args.grid).split(","))
            draw_functions(args.checkpoint, args.out, offsets, unit=args.unit,
                           direction=args.direction, grid=(lo, hi, int(n)),
                           seed=args.seed, mf_draws=args.mf_draws,
                           mf_weights=args.mf_weights)
        elif args.verb == "weight-correlations":
            if extra:
                raise ConfigError(f"unexpected arguments {extra}")
            sample_weight_correlations(args.checkpoint, args.out,
                                       layer=args.layer, unit=args.unit,
                                       n_samples=args.samples, seed=args.seed)
        elif args.verb == "dump-embeddings":
            if extra:
                raise ConfigError(f"unexpected arguments {extra}")
            dump_embeddings(args.checkpoint, args.out)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except TrainingDivergedError as e:
        print(f"training diverged: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
