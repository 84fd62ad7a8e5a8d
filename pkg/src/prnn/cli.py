"""Experiment runner CLI: dataset generation, training, evaluation and the
four-variant ablation sweep.

Exit codes: 0 success, 2 config/input error, 3 shape/compatibility error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import VARIANTS, ExperimentConfig
from .metrics import evaluate
from .optim import ParameterStore
from .synthdata import build_dataset, load_manifest, load_split
from .tensor import DimensionError, ValidationError
from .tensorio import load_params
from .training import NumericError, train_variant

EXIT_CONFIG = 2
EXIT_SHAPE = 3
EXIT_NUMERIC = 4


def _load_config(path, seed=None, variant=None) -> ExperimentConfig:
    if path is None:
        cfg = ExperimentConfig()
    else:
        cfg = ExperimentConfig.from_json(Path(path).read_text())
    changes = {}
    if seed is not None:
        changes["seed"] = seed
    if variant is not None:
        changes["variant"] = variant
    if changes:
        cfg = ExperimentConfig.from_dict({**json.loads(cfg.to_json()), **changes})
    return cfg


def _write_metrics(path, variant, seed, test_metrics, logs):
    stage_losses = {"pretrain": [], "learn": [], "refine_Q": []}
    for stage, log in logs.items():
        if stage in ("pretrain", "vanilla"):
            stage_losses["pretrain"] = [e["losses"]["train"] for e in log]
        elif stage == "learn":
            stage_losses["learn"] = [e["losses"]["train"] for e in log]
        elif stage == "refine":
            stage_losses["refine_Q"] = [e["Q"] for e in log]
    payload = {
        "variant": variant,
        "seed": seed,
        "mean_accuracy": test_metrics["mean_accuracy"],
        "per_class_accuracy": test_metrics["per_class_accuracy"],
        "confusion": test_metrics["confusion"],
        "stage_losses": stage_losses,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))
    return payload


def _write_curves(path, logs):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["stage", "iteration", "loss_or_Q", "val_accuracy"])
        for stage in ("vanilla", "pretrain", "learn", "refine"):
            for e in logs.get(stage, []):
                value = e["Q"] if stage == "refine" else e["losses"]["train"]
                w.writerow([stage, e["iteration"], repr(value), repr(e["val_accuracy"])])


def _write_traces(path, blocks):
    """Gnuplot-style data: per-frame class confidences, one block per sequence."""
    with open(path, "w") as f:
        for header, probs in blocks:
            f.write(f"# {header}\n")
            for t in range(probs.shape[0]):
                row = " ".join(repr(v) for v in probs[t])
                f.write(f"{t} {row}\n")
            f.write("\n")


def cmd_gen_data(args) -> int:
    cfg = _load_config(args.config)
    ds = cfg.dataset
    if args.seed is not None:
        ds = replace(ds, base_seed=args.seed)
    manifest = build_dataset(ds, args.out)
    print(manifest)
    return 0


def _run_training(cfg: ExperimentConfig, manifest_path, out_dir):
    manifest = load_manifest(manifest_path)
    train_raw = load_split(manifest, manifest_path, "train", with_skeleton=True)
    val_raw = load_split(manifest, manifest_path, "val", with_skeleton=True)
    test_raw = load_split(manifest, manifest_path, "test", with_skeleton=False)
    snap, bridging, logs = train_variant(cfg, train_raw, val_raw, out_dir=out_dir)
    store = ParameterStore()
    store.load_snapshot(snap)
    test_metrics = evaluate(store, test_raw, cfg.hyper.K, cfg.encoder, cfg.lstm)
    return snap, logs, test_metrics


def cmd_train(args) -> int:
    cfg = _load_config(args.config, seed=args.seed, variant=args.variant)
    if not Path(args.manifest).exists():
        print(f"manifest not found: {args.manifest}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json())
    snap, logs, test_metrics = _run_training(cfg, args.manifest, out)
    _write_metrics(out / "metrics.json", cfg.variant, cfg.seed, test_metrics, logs)
    _write_curves(out / "curves.csv", logs)
    print(f"{cfg.variant} seed={cfg.seed} mean_accuracy={test_metrics['mean_accuracy']:.4f}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args.config)
    if not Path(args.manifest).exists():
        print(f"manifest not found: {args.manifest}", file=sys.stderr)
        return EXIT_CONFIG
    if not Path(args.checkpoint).is_dir():
        print(f"checkpoint not found: {args.checkpoint}", file=sys.stderr)
        return EXIT_CONFIG
    manifest = load_manifest(args.manifest)
    data = load_split(manifest, args.manifest, args.split, with_skeleton=False)
    store = ParameterStore()
    store.load_snapshot(load_params(args.checkpoint))
    metrics = evaluate(store, data, manifest["K"], cfg.encoder, cfg.lstm,
                       want_traces=args.traces is not None)
    traces = metrics.pop("traces", None)
    out_path = Path(args.out)
    if out_path.suffix != ".json":
        out_path.mkdir(parents=True, exist_ok=True)
        out_path = out_path / "metrics.json"
    out_path.write_text(json.dumps(metrics, indent=2, sort_keys=True))
    if traces is not None:
        blocks = [(f"sequence {i} label {d[2]}", p)
                  for i, (d, p) in enumerate(zip(data, traces))]
        _write_traces(args.traces, blocks)
    print(f"mean_accuracy={metrics['mean_accuracy']:.4f}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_config(args.config)
    seeds = [int(s) for s in args.seeds.split(",") if s]
    if not seeds:
        print("no seeds given", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = args.manifest
    if manifest_path is None:
        manifest_path = build_dataset(cfg.dataset, out / "data")
    results = {}
    trace_blocks = []
    for variant in VARIANTS:
        for seed in seeds:
            vcfg = _load_config(args.config, seed=seed, variant=variant)
            run_dir = out / f"{variant}_seed{seed}"
            snap, logs, test_metrics = _run_training(vcfg, manifest_path, run_dir)
            _write_metrics(run_dir / "metrics.json", variant, seed, test_metrics, logs)
            _write_curves(run_dir / "curves.csv", logs)
            results[(variant, seed)] = test_metrics["mean_accuracy"]
            if seed == seeds[0]:
                store = ParameterStore()
                store.load_snapshot(snap)
                manifest = load_manifest(manifest_path)
                data = load_split(manifest, manifest_path, "test", with_skeleton=False)
                m = evaluate(store, data[:2], vcfg.hyper.K, vcfg.encoder,
                             vcfg.lstm, want_traces=True)
                for i, p in enumerate(m["traces"]):
                    trace_blocks.append(
                        (f"variant {variant} sequence {i} label {data[i][2]}", p))
    with open(out / "results.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["variant", "seed", "mean_accuracy"])
        for variant in VARIANTS:
            for seed in seeds:
                w.writerow([variant, seed, repr(results[(variant, seed)])])
    with open(out / "summary.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["variant", "mean", "stddev"])
        for variant in VARIANTS:
            vals = np.array([results[(variant, s)] for s in seeds])
            w.writerow([variant, repr(float(vals.mean())), repr(float(vals.std()))])
    _write_traces(out / "traces.dat", trace_blocks)
    print(f"wrote {out / 'summary.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="prnn",
                                description="PI-driven sequence classification experiments")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate the synthetic benchmark")
    g.add_argument("--config", default=None)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train", help="train one variant")
    t.add_argument("--config", default=None)
    t.add_argument("--manifest", required=True)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--variant", choices=VARIANTS, default=None)
    t.add_argument("--out", required=True)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint (depth only)")
    e.add_argument("--config", default=None)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--manifest", required=True)
    e.add_argument("--split", default="test", choices=("train", "val", "test"))
    e.add_argument("--out", required=True)
    e.add_argument("--traces", default=None)
    e.set_defaults(fn=cmd_eval)

    a = sub.add_parser("ablate", help="run all four variants over seeds")
    a.add_argument("--config", default=None)
    a.add_argument("--manifest", default=None)
    a.add_argument("--seeds", default="0,1,2,3,4")
    a.add_argument("--out", required=True)
    a.set_defaults(fn=cmd_ablate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValidationError, FileNotFoundError, json.JSONDecodeError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DimensionError as e:
        print(f"shape error: {e}", file=sys.stderr)
        return EXIT_SHAPE
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
