"""Command-line entry point.

Subcommands: gen-synth, train, eval, intervene-compare, export-attention.
Every run is reproducible from its flags and seed. Exit codes: 0 ok,
2 bad configuration, 3 I/O or file-format failure, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import attr_visual, visual_attr
from .data import SynthConfig, generate_synthetic, load_dataset, save_dataset
from .errors import ConfigError, FormatError, NumericError
from .evaluate import (
    EvalReport,
    FusionConfig,
    evaluate,
    per_class_csv,
    write_report_json,
)
from .losses import LossWeights
from .training import (
    INTERVENTION_KINDS,
    Hyperparams,
    load_checkpoint,
    save_checkpoint,
    train,
)

# loss weights {cal, ar, causal, distill} and fusion coefficients per preset;
# "synthetic" reuses the cub weights with a learning rate sized for the small
# planted-structure datasets
PRESETS: dict[str, dict] = {
    "cub": {"lambda_cal": 0.05, "lambda_ar": 0.03, "lambda_causal": 0.3,
            "lambda_distill": 0.001, "alpha1": 0.8, "alpha2": 0.2},
    "sun": {"lambda_cal": 0.0001, "lambda_ar": 0.01, "lambda_causal": 0.0005,
            "lambda_distill": 0.05, "alpha1": 0.7, "alpha2": 0.3},
    "awa2": {"lambda_cal": 0.4, "lambda_ar": 0.06, "lambda_causal": 0.1,
             "lambda_distill": 0.01, "alpha1": 0.8, "alpha2": 0.2},
    "synthetic": {"lambda_cal": 0.05, "lambda_ar": 0.03, "lambda_causal": 0.3,
                  "lambda_distill": 0.001, "alpha1": 0.8, "alpha2": 0.2,
                  "learning_rate": 0.003, "epochs": 30},
}

_CONFIG_CASTS = {
    "learning_rate": float, "batch_size": int, "epochs": int, "momentum": float,
    "weight_decay": float, "rms_decay": float, "rms_epsilon": float,
    "lambda_cal": float, "lambda_ar": float, "lambda_causal": float,
    "lambda_distill": float, "intervention": str, "seed": int,
    "intervention_seed": int, "alpha1": float, "alpha2": float, "setting": str,
    "classes": int, "attributes": int, "regions": int, "feature_dim": int,
    "attr_dim": int, "samples_per_class": int, "unseen_fraction": float,
    "noise": float, "data": str, "out": str, "checkpoint": str, "preset": str,
    "threads": int, "samples": str, "top_n": int,
}


def parse_config_file(path: str | Path) -> dict:
    """key=value lines; blank lines and # comments allowed; unknown keys rejected."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    values: dict = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_CASTS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _CONFIG_CASTS[key](value)
        except ValueError as e:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from e
    return values


def _resolve(args: argparse.Namespace) -> dict:
    """Preset < config file < explicit flags."""
    merged: dict = {}
    preset = getattr(args, "preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
        merged.update(PRESETS[preset])
    if getattr(args, "config", None):
        merged.update(parse_config_file(args.config))
    for key in _CONFIG_CASTS:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    return merged


def _hyperparams(cfg: dict) -> Hyperparams:
    weights = LossWeights(
        lambda_cal=cfg.get("lambda_cal", 0.05),
        lambda_ar=cfg.get("lambda_ar", 0.03),
        lambda_causal=cfg.get("lambda_causal", 0.3),
        lambda_distill=cfg.get("lambda_distill", 0.001),
    )
    hp = Hyperparams(
        learning_rate=cfg.get("learning_rate", 1e-4),
        batch_size=cfg.get("batch_size", 50),
        epochs=cfg.get("epochs", 10),
        momentum=cfg.get("momentum", 0.9),
        weight_decay=cfg.get("weight_decay", 1e-4),
        rms_decay=cfg.get("rms_decay", 0.99),
        rms_epsilon=cfg.get("rms_epsilon", 1e-8),
        loss_weights=weights,
        intervention=cfg.get("intervention", "random"),
        seed=cfg.get("seed", 0),
        intervention_seed=cfg.get("intervention_seed"),
    )
    if hp.learning_rate <= 0:
        raise ConfigError("learning_rate must be positive for training runs")
    return hp


def _fusion(cfg: dict, setting: str) -> FusionConfig:
    return FusionConfig(
        alpha1=cfg.get("alpha1", 0.8), alpha2=cfg.get("alpha2", 0.2), setting=setting
    )


def cmd_gen_synth(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    synth = SynthConfig(
        classes=cfg.get("classes", 10),
        attributes=cfg.get("attributes", 12),
        regions=cfg.get("regions", 9),
        feature_dim=cfg.get("feature_dim", 16),
        attr_dim=cfg.get("attr_dim", 16),
        samples_per_class=cfg.get("samples_per_class", 20),
        unseen_fraction=cfg.get("unseen_fraction", 0.3),
        noise=cfg.get("noise", 0.05),
    )
    ds = generate_synthetic(synth, seed=cfg.get("seed", 0))
    save_dataset(ds, args.out)
    print(
        f"wrote {ds.name}: {ds.num_samples} samples, {ds.num_classes} classes "
        f"({len(ds.split.seen_classes)} seen / {len(ds.split.unseen_classes)} unseen), "
        f"{ds.num_attributes} attributes, {ds.num_regions}x{ds.feature_dim} regions -> {args.out}"
    )
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    dataset = load_dataset(args.data)
    hp = _hyperparams(cfg)
    state, log = train(dataset, hp)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(state, hp, out / "checkpoint", epoch=hp.epochs,
                    loss_history=log.epoch_reports)
    entries = [
        {
            "epoch": e,
            "acec": r.acec, "ar": r.ar, "causal": r.causal,
            "distill": r.distill, "total": r.total,
            "train_accuracy": log.train_accuracy[e],
            "seconds": log.epoch_seconds[e],
        }
        for e, r in enumerate(log.epoch_reports)
    ]
    (out / "train_log.json").write_text(
        json.dumps(entries, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if entries:
        last = entries[-1]
        print(f"trained {hp.epochs} epochs: total={last['total']:.4f} "
              f"train_acc={last['train_accuracy']:.3f} -> {out / 'checkpoint'}")
    else:
        print(f"trained 0 epochs (initialized weights only) -> {out / 'checkpoint'}")
    return 0


def _load_for_eval(args: argparse.Namespace):
    dataset = load_dataset(args.data)
    state, _ = load_checkpoint(args.checkpoint)
    return dataset, state


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    dataset, state = _load_for_eval(args)
    setting = cfg.get("setting", "both")
    if setting not in ("czsl", "gzsl", "both"):
        raise ConfigError(f"setting must be czsl, gzsl, or both, got {setting!r}")
    wanted = ["czsl", "gzsl"] if setting == "both" else [setting]
    threads = cfg.get("threads", 1)
    reports: dict[str, EvalReport] = {}
    for s in wanted:
        rep = evaluate(dataset, state, _fusion(cfg, s), threads=threads)
        reports[s] = rep
        if s == "czsl":
            print(f"CZSL: acc={rep.czsl_acc:.4f}")
        else:
            print(f"GZSL: U={rep.gzsl_u:.4f} S={rep.gzsl_s:.4f} H={rep.gzsl_h:.4f}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report_json(reports, out / "eval_report.json")
    if args.csv:
        for s, rep in reports.items():
            (out / f"per_class_{s}.csv").write_text(
                per_class_csv(rep, dataset.class_names), encoding="utf-8")
    return 0


def cmd_intervene_compare(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    dataset = load_dataset(args.data)
    hp = _hyperparams(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    threads = cfg.get("threads", 1)
    rows = []
    for kind in INTERVENTION_KINDS:
        run_dir = out / f"intervene_{kind}"
        ckpt = run_dir / "checkpoint"
        if args.eval_only:
            state, _ = load_checkpoint(ckpt)
        else:
            kind_hp = replace(hp, intervention=kind)
            state, log = train(dataset, kind_hp)
            run_dir.mkdir(parents=True, exist_ok=True)
            save_checkpoint(state, kind_hp, ckpt, epoch=kind_hp.epochs,
                            loss_history=log.epoch_reports)
        czsl = evaluate(dataset, state, _fusion(cfg, "czsl"), threads=threads)
        gzsl = evaluate(dataset, state, _fusion(cfg, "gzsl"), threads=threads)
        rows.append((kind, czsl.czsl_acc, gzsl.gzsl_u, gzsl.gzsl_s, gzsl.gzsl_h))
    lines = ["kind,czsl_acc,gzsl_u,gzsl_s,gzsl_h"]
    lines += [f"{k},{a:.6f},{u:.6f},{s:.6f},{h:.6f}" for k, a, u, s, h in rows]
    (out / "intervene_table.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"{'kind':24s} {'acc':>8s} {'U':>8s} {'S':>8s} {'H':>8s}")
    for k, a, u, s, h in rows:
        print(f"{k:24s} {a:8.4f} {u:8.4f} {s:8.4f} {h:8.4f}")
    return 0


def cmd_export_attention(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    dataset, state = _load_for_eval(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        indices = [int(tok) for tok in str(cfg.get("samples", args.samples)).split(",") if tok]
    except ValueError as e:
        raise ConfigError(f"--samples must be comma-separated integers: {args.samples!r}") from e
    if not indices:
        raise ConfigError("--samples selected no sample indices")
    top_n = cfg.get("top_n", 10)
    names = dataset.attribute_names or [f"attr_{k}" for k in range(dataset.num_attributes)]
    for i in indices:
        if not 0 <= i < dataset.num_samples:
            raise ConfigError(f"sample index {i} outside [0, {dataset.num_samples})")
        V = dataset.features[i]
        f1 = attr_visual.forward(V, dataset.attributes, dataset.class_semantics, state.avca)
        f2 = visual_attr.forward(V, dataset.attributes, dataset.class_semantics, state.vaca)
        attr_visual.export_attention(f1.attention.data, names,
                                     out / f"sample_{i}_region_attention")
        visual_attr.export_attention(f2.attention.data, names,
                                     out / f"sample_{i}_attribute_attention")
        scores = f1.attr_scores.data
        ranked = np.argsort(-scores, kind="stable")[: min(top_n, len(scores))]
        lines = [f"{k}\t{names[k]}\t{scores[k]:.6f}" for k in ranked]
        (out / f"sample_{i}_top_attributes.txt").write_text(
            "\n".join(lines) + "\n", encoding="utf-8")
    print(f"exported attention maps for {len(indices)} sample(s) -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mczsl",
        description="Mutual causal-attention zero-shot learner on region features",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int)

    g = sub.add_parser("gen-synth", help="write a synthetic dataset directory")
    add_common(g)
    g.add_argument("--out", required=True)
    for flag, typ in (("classes", int), ("attributes", int), ("regions", int),
                      ("feature-dim", int), ("attr-dim", int),
                      ("samples-per-class", int), ("unseen-fraction", float),
                      ("noise", float)):
        g.add_argument(f"--{flag}", type=typ, dest=flag.replace("-", "_"))
    g.set_defaults(func=cmd_gen_synth)

    t = sub.add_parser("train", help="train on a dataset directory")
    add_common(t)
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--preset", choices=sorted(PRESETS))
    for flag, typ in (("learning-rate", float), ("batch-size", int), ("epochs", int),
                      ("momentum", float), ("weight-decay", float),
                      ("rms-decay", float), ("rms-epsilon", float),
                      ("lambda-cal", float), ("lambda-ar", float),
                      ("lambda-causal", float), ("lambda-distill", float),
                      ("intervention-seed", int)):
        t.add_argument(f"--{flag}", type=typ, dest=flag.replace("-", "_"))
    t.add_argument("--intervention", choices=INTERVENTION_KINDS)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    add_common(e)
    e.add_argument("--data", required=True)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--preset", choices=sorted(PRESETS))
    e.add_argument("--setting", choices=("czsl", "gzsl", "both"))
    e.add_argument("--alpha1", type=float)
    e.add_argument("--alpha2", type=float)
    e.add_argument("--threads", type=int)
    e.add_argument("--csv", action="store_true", help="also write per-class CSVs")
    e.set_defaults(func=cmd_eval)

    ic = sub.add_parser("intervene-compare",
                        help="train+evaluate under every intervention kind")
    add_common(ic)
    ic.add_argument("--data", required=True)
    ic.add_argument("--out", required=True)
    ic.add_argument("--preset", choices=sorted(PRESETS))
    for flag, typ in (("learning-rate", float), ("batch-size", int), ("epochs", int),
                      ("lambda-cal", float), ("lambda-ar", float),
                      ("lambda-causal", float), ("lambda-distill", float),
                      ("alpha1", float), ("alpha2", float), ("threads", int)):
        ic.add_argument(f"--{flag}", type=typ, dest=flag.replace("-", "_"))
    ic.add_argument("--eval-only", action="store_true",
                    help="reuse checkpoints from a previous compare run")
    ic.set_defaults(func=cmd_intervene_compare)

    x = sub.add_parser("export-attention", help="export attention maps for samples")
    add_common(x)
    x.add_argument("--data", required=True)
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--out", required=True)
    x.add_argument("--samples", required=True, help="comma-separated sample indices")
    x.add_argument("--top-n", type=int, dest="top_n")
    x.set_defaults(func=cmd_export_attention)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on bad flags already; normalize other codes
        return 2 if e.code not in (0,) else 0
    try:
        return args.func(args)
    except FormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (FileNotFoundError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
