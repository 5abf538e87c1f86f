"""Task adaptation: illation (posterior inference over unit codes with the
hypernetwork frozen), structured surgery (illation restricted to input,
hidden, or output units), and few-shot evaluation grids.

Adaptation never mutates the base model: each attempt copies the codes,
runs Adam on the masked subset only, and returns a new model sharing the
(read-only) hypernetwork.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import graph
from .dist import RngStream, stream_key
from .infer import (MfBnn, TrainConfig, _elbo_terms_metaprior, _elbo_terms_mf,
                    _run, evaluate)
from .meta import MetaPriorModel
from .data import Batch, PermutationTask, apply_permutation


@dataclass
class SurgeryMask:
    """Which code groups illation may update."""

    update_input: bool = True
    update_hidden: bool = True
    update_output: bool = True

    def __post_init__(self):
        if not (self.update_input or self.update_hidden or self.update_output):
            raise ValueError("mask must select at least one code group")

    def layer_indices(self, n_code_layers: int):
        out = []
        if self.update_input:
            out.append(0)
        if self.update_hidden:
            out.extend(range(1, n_code_layers - 1))
        if self.update_output:
            out.append(n_code_layers - 1)
        return out

    def label(self) -> str:
        parts = [name for flag, name in ((self.update_input, "input"),
                                         (self.update_hidden, "hidden"),
                                         (self.update_output, "output")) if flag]
        return "+".join(parts)


ALL_CODES = SurgeryMask(True, True, True)
INPUT_ONLY = SurgeryMask(True, False, False)
OUTPUT_ONLY = SurgeryMask(False, False, True)


@dataclass
class FewShotProtocol:
    """Adaptation schedule: revealed-example counts crossed with step budgets."""

    shot_counts: list
    inference_budgets: list
    reset_each_attempt: bool = True

    def __post_init__(self):
        shots = [int(s) for s in self.shot_counts]
        if shots != sorted(shots) or any(s < 0 for s in shots):
            raise ValueError("shot_counts must be ascending and non-negative")
        self.shot_counts = shots
        self.inference_budgets = [int(b) for b in self.inference_budgets]
        if any(b < 0 for b in self.inference_budgets):
            raise ValueError("budgets must be non-negative")


def illate(model: MetaPriorModel, task_data: Batch, mask: SurgeryMask,
           budget: int, cfg: TrainConfig):
    """Infer task-specific codes on `task_data` with the hypernetwork frozen.

    Returns (adapted model, trace). The adapted model shares the base
    hypernetwork object; the base model's codes are untouched.
    """
    if task_data.n < 1:
        raise ValueError("empty adaptation data")
    if model.codes.kind != "latent":
        raise ValueError("illation needs trainable latent codes")
    adapted = model.with_codes(model.codes.copy(), model.global_state.copy())
    from .infer import _tag_rho_scale
    _tag_rho_scale(adapted, cfg)
    layer_idx = mask.layer_indices(len(adapted.codes.layers))
    leaves = adapted.codes.leaves(layer_idx) + adapted.global_state.leaves()

    def terms(batch, cfg_, rng, n_total, anneal):
        return _elbo_terms_metaprior(adapted, batch, cfg_, rng, n_total, anneal)

    run_cfg = TrainConfig(M=cfg.M, S=cfg.S, batch_size=cfg.batch_size,
                          steps=budget, lr=cfg.lr, kl_scale=cfg.kl_scale,
                          seed=cfg.seed, trace_every=cfg.trace_every)
    trace = _run(terms, [(leaves, budget)], leaves, task_data, run_cfg)
    return adapted, trace


def fine_tune_mf_baseline(mfbnn: MfBnn, task_data: Batch, budget: int,
                          cfg: TrainConfig) -> MfBnn:
    """Continue VI on task data over all weight posteriors, on a copy."""
    adapted = mfbnn.copy()
    leaves = adapted.leaves()

    def terms(batch, cfg_, rng, n_total, anneal):
        return _elbo_terms_mf(adapted, batch, cfg_, rng, n_total, anneal)

    run_cfg = TrainConfig(S=cfg.S, batch_size=cfg.batch_size, steps=budget,
                          lr=cfg.lr, kl_scale=cfg.kl_scale, seed=cfg.seed,
                          trace_every=cfg.trace_every)
    _run(terms, [(leaves, budget)], leaves, task_data, run_cfg)
    return adapted


def _adapt(model, shots_batch, mask, budget, cfg):
    if isinstance(model, MetaPriorModel):
        adapted, _ = illate(model, shots_batch, mask, budget, cfg)
        return adapted
    return fine_tune_mf_baseline(model, shots_batch, budget, cfg)


def few_shot_eval(model, base_data: Batch, task_transform: PermutationTask,
                  protocol: FewShotProtocol, mask: SurgeryMask,
                  cfg: TrainConfig, eval_size: int = None,
                  eval_samples: int = 30):
    """Full (shots x budget) adaptation grid.

    The transformed copy of `base_data` supplies both the revealed
    adaptation examples (its head) and the transformed held-out evaluation
    split (its tail, past the largest shot count). Clean accuracy is
    measured on the untransformed tail: through the adapted model for the
    mean-field baseline (whose weights were fine-tuned), through the base
    model for the hypernetwork model (whose base codes are never mutated).
    Every cell restarts from the base parameters and owns an RNG substream
    keyed by (shots, budget), so cells are order-independent.
    """
    task_data = apply_permutation(base_data, task_transform)
    max_shots = max(protocol.shot_counts)
    if max_shots > base_data.n - 1:
        raise ValueError("largest shot count leaves no held-out data")
    eval_lo = max_shots
    eval_hi = base_data.n if eval_size is None else min(base_data.n,
                                                        eval_lo + eval_size)
    eval_idx = np.arange(eval_lo, eval_hi)
    task_eval = task_data.take(eval_idx)
    clean_eval = base_data.take(eval_idx)

    rows = []
    carry = None  # only used when reset_each_attempt is False
    for shots in protocol.shot_counts:
        for budget in protocol.inference_budgets:
            cell_cfg = TrainConfig(
                M=cfg.M, S=cfg.S, batch_size=cfg.batch_size, steps=budget,
                lr=cfg.lr, kl_scale=cfg.kl_scale,
                seed=stream_key(cfg.seed, shots, budget),
                trace_every=max(1, budget))
            start = model if (protocol.reset_each_attempt or carry is None) else carry
            if shots == 0 or budget == 0:
                adapted = start
            else:
                adapted = _adapt(start, task_data.take(np.arange(shots)),
                                 mask, budget, cell_cfg)
            if not protocol.reset_each_attempt:
                carry = adapted
            # constant eval stream: un-adapted cells reproduce the base
            # accuracy exactly, and cell order cannot leak into results
            eval_seed = stream_key(cfg.seed, 7)
            permuted = evaluate(adapted, task_eval, eval_samples, eval_seed)
            clean_model = model if isinstance(model, MetaPriorModel) else adapted
            clean = evaluate(clean_model, clean_eval, eval_samples, eval_seed)
            rows.append({
                "mask": mask.label(),
                "shots": shots,
                "budget": budget,
                "permuted_acc": permuted["accuracy"],
                "clean_acc": clean["accuracy"],
                "seed": cfg.seed,
            })
    return rows


GRID_COLUMNS = ("mask", "shots", "budget", "permuted_acc", "clean_acc", "seed")


def grid_to_csv(rows, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=GRID_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
