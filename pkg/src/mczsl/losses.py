"""Loss terms and their weighted combination.

All per-sample terms return scalar autodiff Tensors so gradients flow through
them; batch averaging is the caller's job. The combined report works on plain
floats after batch reduction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .data import Split
from .errors import NumericError, ShapeError

# floor inside KL logarithms; avoids -inf on confident distributions
KL_FLOOR = 1e-12


@dataclass(frozen=True)
class LossWeights:
    lambda_cal: float = 0.05
    lambda_ar: float = 0.03
    lambda_causal: float = 0.3
    lambda_distill: float = 0.001

    def __post_init__(self):
        for name in ("lambda_cal", "lambda_ar", "lambda_causal", "lambda_distill"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class LossReport:
    acec: float
    ar: float
    causal: float
    distill: float
    total: float
    weights: LossWeights


def class_logits(f, Z) -> ad.Tensor:
    f = ad.as_tensor(f)
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or f.data.ndim != 1 or Z.shape[1] != f.data.shape[0]:
        raise ShapeError(f"prototypes {Z.shape} incompatible with embedding {f.data.shape}")
    return ad.matmul(ad.constant(Z), f)


def _seen_cross_entropy(f, label: int, Z, split: Split) -> ad.Tensor:
    logits = class_logits(f, Z)
    seen_logits = ad.take(logits, split.seen_classes)
    pos = split.seen_classes.index(label)
    return ad.logsumexp(seen_logits) - ad.tsum(ad.take(seen_logits, [pos]))


def acec_loss(f, label: int, Z, split: Split, lambda_cal: float) -> ad.Tensor:
    """Cross-entropy over seen classes plus the self-calibration term.

    The calibration term is the summed negative log-probability of each unseen
    class under a softmax over ALL classes whose logits are shifted by +1 for
    unseen classes and -1 for seen ones; it pushes mass onto unseen classes
    during training.
    """
    if label not in set(split.seen_classes):
        raise ValueError(f"label {label} is not a seen class")
    term1 = _seen_cross_entropy(f, label, Z, split)
    if lambda_cal == 0.0 or not split.unseen_classes:
        return term1
    logits = class_logits(f, Z)
    indicator = np.full(np.asarray(Z).shape[0], -1.0)
    indicator[split.unseen_classes] = 1.0
    shifted = ad.add(logits, ad.constant(indicator))
    lse_all = ad.logsumexp(shifted)
    unseen_sum = ad.tsum(ad.take(shifted, split.unseen_classes))
    n_unseen = float(len(split.unseen_classes))
    return ad.add(term1, ad.mul(ad.sub(ad.mul(lse_all, n_unseen), unseen_sum), lambda_cal))


def ar_loss(f, z_true) -> ad.Tensor:
    """Squared Euclidean distance between the embedding and its class prototype."""
    f = ad.as_tensor(f)
    z = np.asarray(z_true, dtype=np.float64)
    if f.data.shape != z.shape:
        raise ShapeError(f"embedding {f.data.shape} vs prototype {z.shape}")
    diff = ad.sub(f, ad.constant(z))
    return ad.tsum(ad.mul(diff, diff))


def causal_loss(f, f_bar, label: int, Z, split: Split) -> ad.Tensor:
    """Seen-class cross-entropy of both the observed and the intervened
    embeddings; supervises how much the learned attention helps the prediction.
    Gradients flow through both branches (the intervention itself is constant)."""
    if label not in set(split.seen_classes):
        raise ValueError(f"label {label} is not a seen class")
    return ad.add(
        _seen_cross_entropy(f, label, Z, split),
        _seen_cross_entropy(f_bar, label, Z, split),
    )


def seen_class_distribution(logits, split: Split) -> ad.Tensor:
    """Softmax over the seen-class entries of a logit vector."""
    return ad.softmax(ad.take(ad.as_tensor(logits), split.seen_classes), axis=-1)


def _kl(p: ad.Tensor, q: ad.Tensor) -> ad.Tensor:
    log_ratio = ad.sub(ad.log(ad.floor_at(p, KL_FLOOR)), ad.log(ad.floor_at(q, KL_FLOOR)))
    return ad.tsum(ad.mul(p, log_ratio))


def distill_loss(p1, p2) -> ad.Tensor:
    """Symmetrized KL (Jensen-Shannon style) plus squared distance between two
    class posteriors. Zero iff the posteriors agree."""
    p1, p2 = ad.as_tensor(p1), ad.as_tensor(p2)
    for name, p in (("p1", p1), ("p2", p2)):
        d = p.data
        if d.ndim != 1 or np.any(d < 0) or abs(d.sum() - 1.0) > 1e-6:
            raise ValueError(f"{name} is not a probability distribution")
    if p1.data.shape != p2.data.shape:
        raise ShapeError(f"distributions differ in length: {p1.data.shape} vs {p2.data.shape}")
    jsd = ad.mul(ad.add(_kl(p1, p2), _kl(p2, p1)), 0.5)
    diff = ad.sub(p1, p2)
    return ad.add(jsd, ad.tsum(ad.mul(diff, diff)))


@dataclass(frozen=True)
class SubnetLossValues:
    acec: float
    ar: float
    causal: float


def total_loss(
    avca: SubnetLossValues, vaca: SubnetLossValues, distill: float, weights: LossWeights
) -> LossReport:
    """Combine the two sub-nets' terms (summed 1:1) with the shared distillation
    term: total = acec + l_ar*ar + l_causal*causal + l_distill*distill."""
    acec = avca.acec + vaca.acec
    ar = avca.ar + vaca.ar
    causal = avca.causal + vaca.causal
    total = (
        acec
        + weights.lambda_ar * ar
        + weights.lambda_causal * causal
        + weights.lambda_distill * distill
    )
    if not np.isfinite(total):
        raise NumericError("total loss is non-finite")
    return LossReport(acec=acec, ar=ar, causal=causal, distill=distill, total=total,
                      weights=weights)
