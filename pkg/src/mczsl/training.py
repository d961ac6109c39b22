"""Deterministic mini-batch training.

The loop is single-driver: seeded shuffling, per-sample forward passes for
both sub-nets, fresh exogenous intervention attentions per sample, reverse-mode
gradients of the combined loss, and an RMSProp update with momentum and
decoupled weight decay. (seed, dataset, hyperparams) fully determine the final
weights; intervention draws come from their own child stream so they can be
varied independently of initialization and shuffling.
"""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import attr_visual, autodiff as ad, visual_attr
from .attr_visual import AttrVisualParams
from .data import Dataset
from .errors import ConfigError, NumericError
from .losses import (
    LossReport,
    LossWeights,
    SubnetLossValues,
    acec_loss,
    ar_loss,
    causal_loss,
    distill_loss,
    seen_class_distribution,
    total_loss,
)
from .numeric import make_rng, sample_uniform, softmax, spawn_rngs
from .tensor_io import read_tensor, write_tensor
from .visual_attr import VisualAttrParams

INTERVENTION_KINDS = ("random", "uniform", "reversed", "random_plus_reversed")
PARAM_NAMES = ("w1", "w2", "w3", "w4", "w_att")

CHECKPOINT_META = "metadata.json"


@dataclass(frozen=True)
class Hyperparams:
    learning_rate: float = 1e-4
    batch_size: int = 50
    epochs: int = 10
    momentum: float = 0.9
    weight_decay: float = 1e-4
    rms_decay: float = 0.99
    rms_epsilon: float = 1e-8
    loss_weights: LossWeights = field(default_factory=LossWeights)
    intervention: str = "random"
    seed: int = 0
    # None derives the intervention stream from `seed`; set to vary it alone
    intervention_seed: int | None = None

    def __post_init__(self):
        checks = [
            (self.learning_rate >= 0, "learning_rate >= 0"),
            (self.batch_size >= 1, "batch_size >= 1"),
            (self.epochs >= 0, "epochs >= 0"),
            (0 <= self.momentum < 1, "momentum in [0, 1)"),
            (self.weight_decay >= 0, "weight_decay >= 0"),
            (0 < self.rms_decay < 1, "rms_decay in (0, 1)"),
            (self.rms_epsilon > 0, "rms_epsilon > 0"),
            (self.intervention in INTERVENTION_KINDS,
             f"intervention in {INTERVENTION_KINDS}"),
        ]
        for ok, rule in checks:
            if not ok:
                raise ConfigError(f"hyperparams violate {rule}")


@dataclass
class ModelState:
    avca: AttrVisualParams
    vaca: VisualAttrParams
    grads: dict[str, np.ndarray]
    sq_avg: dict[str, np.ndarray]
    momentum_buf: dict[str, np.ndarray]

    def params(self) -> dict[str, np.ndarray]:
        return {
            "w1": self.avca.w1,
            "w2": self.avca.w2,
            "w3": self.vaca.w3,
            "w4": self.vaca.w4,
            "w_att": self.vaca.w_att,
        }


@dataclass
class TrainLog:
    epoch_reports: list[LossReport] = field(default_factory=list)
    train_accuracy: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)


def init_state(attr_dim: int, feature_dim: int, rng: np.random.Generator) -> ModelState:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init, fan_in = first dimension."""
    def init(rows, cols):
        bound = 1.0 / np.sqrt(rows)
        return rng.uniform(-bound, bound, size=(rows, cols))

    avca = AttrVisualParams(w1=init(attr_dim, feature_dim), w2=init(attr_dim, feature_dim))
    vaca = VisualAttrParams(
        w3=init(feature_dim, attr_dim),
        w4=init(feature_dim, attr_dim),
        w_att=init(feature_dim, attr_dim),
    )
    zeros = lambda arr: {k: np.zeros_like(v) for k, v in arr.items()}
    params = {
        "w1": avca.w1, "w2": avca.w2,
        "w3": vaca.w3, "w4": vaca.w4, "w_att": vaca.w_att,
    }
    return ModelState(avca=avca, vaca=vaca, grads=zeros(params),
                      sq_avg=zeros(params), momentum_buf=zeros(params))


def state_for_dataset(dataset: Dataset, rng: np.random.Generator) -> ModelState:
    return init_state(dataset.attributes.shape[1], dataset.feature_dim, rng)


def make_intervention_attention(
    kind: str,
    rows: int,
    cols: int,
    observed: np.ndarray | None,
    rng: np.random.Generator | None,
    alternation_index: int = 0,
) -> np.ndarray:
    """Exogenous attention used under intervention; always gradient-free.

    random: Uniform(0,1) entries, softmax-normalized along the attention axis.
    uniform: every weight 1/cols.
    reversed: softmax(-log(observed + eps)) per row, inverting the observed ranking.
    random_plus_reversed: alternates random/reversed on even/odd alternation_index
    (the training loop passes its batch counter).
    """
    if kind == "random_plus_reversed":
        kind = "random" if alternation_index % 2 == 0 else "reversed"
    if kind == "random":
        if rng is None:
            raise ValueError("random intervention requires an RNG stream")
        return softmax(sample_uniform(rng, rows, cols, 0.0, 1.0), axis=-1)
    if kind == "uniform":
        return np.full((rows, cols), 1.0 / cols)
    if kind == "reversed":
        if observed is None:
            raise ValueError("reversed intervention requires the observed attention")
        observed = np.asarray(observed, dtype=np.float64)
        if observed.shape != (rows, cols):
            raise ValueError(f"observed attention shape {observed.shape} != ({rows}, {cols})")
        attr_visual.check_normalized_rows(observed)
        return softmax(-np.log(observed + 1e-12), axis=-1)
    raise ValueError(f"unknown intervention kind {kind!r}; expected one of {INTERVENTION_KINDS}")


InterventionFn = Callable[[int, np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


def batch_loss_and_grads(
    batch_indices,
    dataset: Dataset,
    params: dict[str, np.ndarray],
    weights: LossWeights,
    intervention_fn: InterventionFn,
) -> tuple[LossReport, dict[str, np.ndarray]]:
    """Batch-mean loss report and batch-mean gradients for the five matrices.

    intervention_fn(position, observed_beta, observed_gamma) supplies the
    gradient-free (beta_bar, gamma_bar) pair for each sample.
    """
    if len(batch_indices) == 0:
        raise ValueError("batch must be nonempty")
    leaves = {name: ad.Tensor(params[name], requires_grad=True) for name in PARAM_NAMES}
    avca_p = AttrVisualParams(leaves["w1"], leaves["w2"])
    vaca_p = VisualAttrParams(leaves["w3"], leaves["w4"], leaves["w_att"])
    Z, A, split = dataset.class_semantics, dataset.attributes, dataset.split
    n = len(batch_indices)
    w = weights
    sums = {"acec1": 0.0, "ar1": 0.0, "causal1": 0.0,
            "acec2": 0.0, "ar2": 0.0, "causal2": 0.0, "distill": 0.0}

    for pos, i in enumerate(batch_indices):
        V = dataset.features[i]
        label = int(dataset.labels[i])
        z_true = Z[label]
        f1 = attr_visual.forward(V, A, Z, avca_p)
        f2 = visual_attr.forward(V, A, Z, vaca_p)
        beta_bar, gamma_bar = intervention_fn(pos, f1.attention.data, f2.attention.data)
        psi1_bar, _ = attr_visual.intervened(V, A, Z, avca_p, beta_bar)
        psi2_bar, _ = visual_attr.intervened(V, A, Z, vaca_p, gamma_bar)

        acec1 = acec_loss(f1.attr_scores, label, Z, split, w.lambda_cal)
        acec2 = acec_loss(f2.attr_scores, label, Z, split, w.lambda_cal)
        ar1 = ar_loss(f1.attr_scores, z_true)
        ar2 = ar_loss(f2.attr_scores, z_true)
        causal1 = causal_loss(f1.attr_scores, psi1_bar, label, Z, split)
        causal2 = causal_loss(f2.attr_scores, psi2_bar, label, Z, split)
        dist = distill_loss(
            seen_class_distribution(f1.logits, split),
            seen_class_distribution(f2.logits, split),
        )
        sample_total = (
            acec1 + acec2
            + (ar1 + ar2) * w.lambda_ar
            + (causal1 + causal2) * w.lambda_causal
            + dist * w.lambda_distill
        )
        if not np.isfinite(sample_total.data):
            raise NumericError(f"non-finite loss at sample index {i}")
        sample_total.backward(seed=1.0 / n)

        sums["acec1"] += acec1.item(); sums["acec2"] += acec2.item()
        sums["ar1"] += ar1.item(); sums["ar2"] += ar2.item()
        sums["causal1"] += causal1.item(); sums["causal2"] += causal2.item()
        sums["distill"] += dist.item()

    grads = {name: (leaves[name].grad if leaves[name].grad is not None
                    else np.zeros_like(params[name]))
             for name in PARAM_NAMES}
    report = total_loss(
        SubnetLossValues(sums["acec1"] / n, sums["ar1"] / n, sums["causal1"] / n),
        SubnetLossValues(sums["acec2"] / n, sums["ar2"] / n, sums["causal2"] / n),
        sums["distill"] / n,
        weights,
    )
    return report, grads


def rmsprop_update(state: ModelState, hp: Hyperparams) -> None:
    """RMSProp with momentum; weight decay is decoupled (parameters shrink
    toward zero before the gradient step, so the gradient check stays clean)."""
    lr = hp.learning_rate
    for name, p in state.params().items():
        g = state.grads[name]
        sq = state.sq_avg[name]
        buf = state.momentum_buf[name]
        sq *= hp.rms_decay
        sq += (1.0 - hp.rms_decay) * g * g
        buf *= hp.momentum
        buf += g / (np.sqrt(sq) + hp.rms_epsilon)
        if hp.weight_decay != 0.0:
            p -= lr * hp.weight_decay * p
        p -= lr * buf


def train_step(
    batch_indices,
    dataset: Dataset,
    state: ModelState,
    hp: Hyperparams,
    intervention_rng: np.random.Generator,
    batch_counter: int = 0,
) -> LossReport:
    """One optimizer step on a batch; returns the pre-update loss report.

    Draws one fresh intervention per sample per sub-net, in batch order
    (attribute-side first, then region-side)."""
    if len(batch_indices) == 0:
        raise ValueError("batch must be nonempty")
    K = dataset.num_attributes
    R = dataset.num_regions

    def draw(pos, beta, gamma):
        beta_bar = make_intervention_attention(
            hp.intervention, K, R, beta, intervention_rng, batch_counter)
        gamma_bar = make_intervention_attention(
            hp.intervention, R, K, gamma, intervention_rng, batch_counter)
        return beta_bar, gamma_bar

    report, grads = batch_loss_and_grads(
        batch_indices, dataset, state.params(), hp.loss_weights, draw)
    state.grads = grads
    rmsprop_update(state, hp)
    return report


def _train_accuracy(dataset: Dataset, state: ModelState, alpha=(0.8, 0.2)) -> float:
    """Fraction of training samples whose fused embedding ranks the true seen
    class first (seen candidates only; diagnostics, not the test protocol)."""
    seen = dataset.split.seen_classes
    z_seen = dataset.class_semantics[seen]
    correct = 0
    for i in dataset.split.train_idx:
        V = dataset.features[i]
        psi = attr_visual.forward(V, dataset.attributes, dataset.class_semantics,
                                  state.avca).attr_scores.data
        psi2 = visual_attr.forward(V, dataset.attributes, dataset.class_semantics,
                                   state.vaca).attr_scores.data
        scores = z_seen @ (alpha[0] * psi + alpha[1] * psi2)
        if seen[int(np.argmax(scores))] == int(dataset.labels[i]):
            correct += 1
    return correct / max(1, len(dataset.split.train_idx))


def train(dataset: Dataset, hp: Hyperparams) -> tuple[ModelState, TrainLog]:
    """Full training run: seeded init, per-epoch seeded shuffles, batches of
    hp.batch_size (short final batch kept)."""
    init_rng, shuffle_rng, derived_interv = spawn_rngs(hp.seed, 3)
    interv_rng = (derived_interv if hp.intervention_seed is None
                  else make_rng(hp.intervention_seed))
    state = state_for_dataset(dataset, init_rng)
    log = TrainLog()
    train_idx = np.asarray(dataset.split.train_idx, dtype=np.intp)
    if hp.epochs > 0 and train_idx.size == 0:
        raise ValueError("dataset has no training samples")
    batch_counter = 0
    for _ in range(hp.epochs):
        t0 = time.perf_counter()
        order = train_idx[shuffle_rng.permutation(len(train_idx))]
        batch_reports: list[tuple[int, LossReport]] = []
        for start in range(0, len(order), hp.batch_size):
            batch = order[start:start + hp.batch_size]
            rep = train_step(batch, dataset, state, hp, interv_rng, batch_counter)
            batch_counter += 1
            batch_reports.append((len(batch), rep))
        total_n = sum(nb for nb, _ in batch_reports)

        def wmean(get):
            return sum(nb * get(r) for nb, r in batch_reports) / total_n

        log.epoch_reports.append(LossReport(
            acec=wmean(lambda r: r.acec),
            ar=wmean(lambda r: r.ar),
            causal=wmean(lambda r: r.causal),
            distill=wmean(lambda r: r.distill),
            total=wmean(lambda r: r.total),
            weights=hp.loss_weights,
        ))
        log.train_accuracy.append(_train_accuracy(dataset, state))
        log.epoch_seconds.append(time.perf_counter() - t0)
    return state, log


def _report_dict(r: LossReport) -> dict:
    return {"acec": r.acec, "ar": r.ar, "causal": r.causal,
            "distill": r.distill, "total": r.total}


def save_checkpoint(
    state: ModelState, hp: Hyperparams, directory: str | Path,
    epoch: int, loss_history: list[LossReport] | None = None,
) -> None:
    """Weights as MSDT tensors plus deterministic JSON metadata (no wall-clock,
    so identical runs produce byte-identical checkpoints)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, p in state.params().items():
        write_tensor(directory / f"{name}.msdt", p)
    meta = {
        "epoch": epoch,
        "seed": hp.seed,
        "hyperparams": asdict(hp),
        "loss_history": [_report_dict(r) for r in (loss_history or [])],
    }
    (directory / CHECKPOINT_META).write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_checkpoint(directory: str | Path) -> tuple[ModelState, dict]:
    directory = Path(directory)
    meta_path = directory / CHECKPOINT_META
    if not meta_path.exists():
        raise FileNotFoundError(f"checkpoint metadata not found: {meta_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    arrays = {name: read_tensor(directory / f"{name}.msdt") for name in PARAM_NAMES}
    state = ModelState(
        avca=AttrVisualParams(w1=arrays["w1"], w2=arrays["w2"]),
        vaca=VisualAttrParams(w3=arrays["w3"], w4=arrays["w4"], w_att=arrays["w_att"]),
        grads={k: np.zeros_like(v) for k, v in arrays.items()},
        sq_avg={k: np.zeros_like(v) for k, v in arrays.items()},
        momentum_buf={k: np.zeros_like(v) for k, v in arrays.items()},
    )
    return state, meta
