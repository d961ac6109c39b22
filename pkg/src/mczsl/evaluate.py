"""Fused zero-shot prediction and the CZSL/GZSL evaluation protocol.

Predictions fuse the two sub-nets' attribute scores with fixed coefficients
and add a +1/-1 unseen/seen calibration offset to every candidate logit.
Accuracies are per-class means (each class weighs equally regardless of its
sample count); the GZSL summary is the harmonic mean H = 2SU/(S+U).
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import attr_visual, visual_attr
from .data import Dataset, Sample, Split
from .errors import ShapeError
from .training import ModelState

SETTINGS = ("czsl", "gzsl")


@dataclass(frozen=True)
class FusionConfig:
    alpha1: float = 0.8
    alpha2: float = 0.2
    setting: str = "gzsl"

    def __post_init__(self):
        if self.alpha1 < 0 or self.alpha2 < 0 or self.alpha1 + self.alpha2 <= 0:
            raise ValueError("fusion coefficients must be nonnegative with positive sum")
        if self.setting not in SETTINGS:
            raise ValueError(f"setting must be one of {SETTINGS}")


@dataclass
class EvalReport:
    setting: str
    czsl_acc: float | None = None
    gzsl_u: float | None = None
    gzsl_s: float | None = None
    gzsl_h: float | None = None
    per_class_acc: dict[int, float] = field(default_factory=dict)
    confusion_counts: dict[tuple[int, int], int] = field(default_factory=dict)


def harmonic_mean(s: float, u: float) -> float:
    return 0.0 if s + u == 0 else 2.0 * s * u / (s + u)


def candidate_classes(split: Split, setting: str) -> list[int]:
    """Ascending candidate list: unseen classes under CZSL, all classes under GZSL."""
    if setting == "czsl":
        return sorted(split.unseen_classes)
    return sorted(split.seen_classes + split.unseen_classes)


def fused_score(
    psi, psi_attr, Z, split: Split, cfg: FusionConfig, indicator: float = 1.0
) -> np.ndarray:
    """Scores over candidate_classes(split, cfg.setting):
    (alpha1*psi + alpha2*psi_attr) . z_c + indicator for unseen c, - indicator
    for seen c. The protocol fixes indicator at 1."""
    psi = np.asarray(psi, dtype=np.float64)
    psi_attr = np.asarray(psi_attr, dtype=np.float64)
    Z = np.asarray(Z, dtype=np.float64)
    if psi.shape != psi_attr.shape or Z.ndim != 2 or Z.shape[1] != psi.shape[0]:
        raise ShapeError(
            f"fusion shapes inconsistent: psi {psi.shape}, psi_attr {psi_attr.shape}, Z {Z.shape}"
        )
    fused = cfg.alpha1 * psi + cfg.alpha2 * psi_attr
    unseen = set(split.unseen_classes)
    cands = candidate_classes(split, cfg.setting)
    offsets = np.array([indicator if c in unseen else -indicator for c in cands])
    return Z[cands] @ fused + offsets


def predict(sample: Sample, state: ModelState, dataset: Dataset, cfg: FusionConfig) -> int:
    """Highest fused score wins; exact ties go to the lowest class index."""
    psi = attr_visual.forward(
        sample.regions, dataset.attributes, dataset.class_semantics, state.avca
    ).attr_scores.data
    psi2 = visual_attr.forward(
        sample.regions, dataset.attributes, dataset.class_semantics, state.vaca
    ).attr_scores.data
    scores = fused_score(psi, psi2, dataset.class_semantics, dataset.split, cfg)
    cands = candidate_classes(dataset.split, cfg.setting)
    return cands[int(np.argmax(scores))]


def per_class_accuracy(pairs: list[tuple[int, int]]) -> dict[int, float]:
    """(true, predicted) pairs -> accuracy per class that has samples."""
    totals: dict[int, int] = {}
    correct: dict[int, int] = {}
    for true, pred in pairs:
        totals[true] = totals.get(true, 0) + 1
        correct[true] = correct.get(true, 0) + (1 if pred == true else 0)
    return {c: correct[c] / totals[c] for c in totals}


def _mean(values) -> float:
    values = list(values)
    return sum(values) / len(values)


def _predict_many(indices, dataset, state, cfg, threads: int) -> list[tuple[int, int]]:
    def one(i: int) -> tuple[int, int]:
        return int(dataset.labels[i]), predict(dataset.sample(i), state, dataset, cfg)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, indices))
    return [one(i) for i in indices]


def evaluate(
    dataset: Dataset, state: ModelState, cfg: FusionConfig, threads: int = 1
) -> EvalReport:
    """CZSL: per-class mean top-1 over unseen test samples, unseen candidates
    only. GZSL: U and S are per-class means over unseen/seen test samples with
    all classes as candidates, summarized by H."""
    split = dataset.split
    report = EvalReport(setting=cfg.setting)
    if cfg.setting == "czsl":
        if not split.test_unseen_idx:
            raise ValueError("CZSL evaluation requires a nonempty unseen test split")
        pairs = _predict_many(split.test_unseen_idx, dataset, state, cfg, threads)
        acc = per_class_accuracy(pairs)
        report.czsl_acc = _mean(acc.values())
        report.per_class_acc = acc
    else:
        if not split.test_unseen_idx or not split.test_seen_idx:
            raise ValueError("GZSL evaluation requires nonempty seen and unseen test splits")
        unseen_pairs = _predict_many(split.test_unseen_idx, dataset, state, cfg, threads)
        seen_pairs = _predict_many(split.test_seen_idx, dataset, state, cfg, threads)
        unseen_acc = per_class_accuracy(unseen_pairs)
        seen_acc = per_class_accuracy(seen_pairs)
        report.gzsl_u = _mean(unseen_acc.values())
        report.gzsl_s = _mean(seen_acc.values())
        report.gzsl_h = harmonic_mean(report.gzsl_s, report.gzsl_u)
        report.per_class_acc = {**seen_acc, **unseen_acc}
        pairs = unseen_pairs + seen_pairs
    for true, pred in pairs:
        key = (true, pred)
        report.confusion_counts[key] = report.confusion_counts.get(key, 0) + 1
    return report


def report_to_dict(report: EvalReport) -> dict:
    return {
        "setting": report.setting,
        "czsl_acc": report.czsl_acc,
        "gzsl_u": report.gzsl_u,
        "gzsl_s": report.gzsl_s,
        "gzsl_h": report.gzsl_h,
        "per_class_acc": {str(c): a for c, a in sorted(report.per_class_acc.items())},
        "confusion_counts": {
            f"{t},{p}": n for (t, p), n in sorted(report.confusion_counts.items())
        },
    }


def write_report_json(reports: dict[str, EvalReport], path: str | Path) -> None:
    payload = {name: report_to_dict(r) for name, r in sorted(reports.items())}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def per_class_csv(report: EvalReport, class_names: list[str] | None = None) -> str:
    lines = ["class,name,accuracy"]
    for c, a in sorted(report.per_class_acc.items()):
        name = class_names[c] if class_names and c < len(class_names) else f"class_{c}"
        lines.append(f"{c},{name},{a:.6f}")
    return "\n".join(lines) + "\n"
