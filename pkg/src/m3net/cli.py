"""Command-line entry points: dataset generation, training, evaluation,
prediction, merge benchmarking, and baseline comparison.

Exit codes: 0 success, 1 validation error, 2 I/O error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

from .autodiff import NumericError
from .netgraph import DatasetError, ValidationError, load_dataset, load_experiment

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_NUMERIC = 3


def _cmd_gen(args) -> int:
    from .simgen import GenConfig, gen_dataset

    cfg = GenConfig.from_json(args.config) if args.config else GenConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.count is not None:
        cfg.n_experiments = args.count
    manifest = gen_dataset(cfg, args.out)
    print(f"wrote {manifest['n_experiments']} experiments "
          f"({manifest['n_flows']} flows) to {args.out}")
    return EXIT_OK


def _split(experiments, val_frac: float):
    n_val = max(1, int(round(len(experiments) * val_frac)))
    if n_val >= len(experiments):
        raise ValidationError("dataset too small to hold out a validation split")
    return experiments[:-n_val], experiments[-n_val:]


def _cmd_train(args) -> int:
    from .model import ModelConfig
    from .trainer import TrainConfig, train

    cfg = TrainConfig.from_json(args.config) if args.config else TrainConfig()
    if args.model_config:
        with open(args.model_config, encoding="utf-8") as fh:
            mcfg = ModelConfig(**json.load(fh))
    else:
        mcfg = ModelConfig()
    experiments = load_dataset(args.data)
    if not experiments:
        raise ValidationError(f"no experiments found in {args.data}")
    train_exps, val_exps = _split(experiments, args.val_frac)
    res = train(train_exps, val_exps, cfg, mcfg, out_dir=args.out)
    last = res.log[-1]
    print(f"trained {cfg.epochs} epochs; best epoch {res.best_epoch}; "
          f"final train loss {last['train_loss']:.6g}; artifacts in {args.out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    from .harness import evaluate
    from .trainer import load_run_checkpoint

    params, mcfg, stats, jitter_scale, _ = load_run_checkpoint(args.checkpoint)
    experiments = load_dataset(args.data)
    if not experiments:
        raise ValidationError(f"no experiments found in {args.data}")
    report = evaluate(params, mcfg, stats, jitter_scale, experiments,
                      meta={"checkpoint": args.checkpoint, "data": args.data})
    with open(args.report, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
    print(f"delay MAPE {report['delay_mape']:.2f}%  "
          f"jitter acc {report['jitter_acc']:.2f}%  "
          f"drop acc {report['drop_acc']:.2f}%  -> {args.report}")
    return EXIT_OK


def _cmd_predict(args) -> int:
    from .featurizer import featurize
    from .model import hierarchical_values, predict
    from .trainer import load_run_checkpoint

    params, mcfg, stats, jitter_scale, _ = load_run_checkpoint(args.checkpoint)
    e = load_experiment(args.experiment)
    fm = featurize(e, stats)
    pred = predict(params, mcfg, fm)
    jitter = hierarchical_values(pred.zero_prob_jitter, pred.jitter_bin,
                                 jitter_scale)
    drop = hierarchical_values(pred.zero_prob_drop, pred.drop_bin, 1.0)
    doc = {
        "experiment_id": e.id,
        "flows": [
            {
                "id": f.id,
                "delay_s": float(pred.delay[i]),
                "jitter_s": float(jitter[i]),
                "drop_frac": float(drop[i]),
                "nonzero_prob_jitter": float(pred.zero_prob_jitter[i]),
                "nonzero_prob_drop": float(pred.zero_prob_drop[i]),
            }
            for i, f in enumerate(e.flows)
        ],
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
    print(f"wrote predictions for {len(e.flows)} flows to {args.out}")
    return EXIT_OK


def _write_csv(path: str, fieldnames: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)


def _cmd_bench_merge(args) -> int:
    from .trainer import epoch_timing

    merge_counts = [int(x) for x in args.merge.split(",")]
    if any(m < 1 for m in merge_counts):
        raise ValidationError("merge counts must be >= 1")
    experiments = load_dataset(args.data)
    if not experiments:
        raise ValidationError(f"no experiments found in {args.data}")
    rows = epoch_timing(experiments, merge_counts, seed=args.seed,
                        n_epochs=args.epochs)
    _write_csv(args.out,
               ["merge_count", "seconds_per_epoch", "avg_samples_per_batch"],
               rows)
    for r in rows:
        print(f"merge={r['merge_count']:<3d} {r['seconds_per_epoch']:.3f}s/epoch"
              f"  {r['avg_samples_per_batch']:.1f} samples/batch")
    return EXIT_OK


def _cmd_compare(args) -> int:
    from .harness import compare_baselines

    modes = args.modes.split(",")
    experiments = load_dataset(args.data)
    if len(experiments) < 3:
        raise ValidationError("compare needs at least 3 experiments")
    n = len(experiments)
    n_test = max(1, n // 6)
    n_val = max(1, n // 6)
    test = experiments[n - n_test:]
    val = experiments[n - n_test - n_val:n - n_test]
    train = experiments[:n - n_test - n_val]
    rows = compare_baselines(train, val, test, modes, n_runs=args.runs,
                             epochs=args.epochs, base_seed=args.seed)
    _write_csv(args.out, ["mode", "delay_mape", "seconds_per_epoch"], rows)
    for r in rows:
        print(f"{r['mode']:<14s} delay MAPE {r['delay_mape']:.2f}%  "
              f"{r['seconds_per_epoch']:.2f}s/epoch")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="m3net",
        description="Flow-level delay/jitter/drops prediction over simulated "
                    "networks: generate data, train, evaluate, and benchmark.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a labeled synthetic dataset")
    g.add_argument("--config", help="generator config JSON")
    g.add_argument("--out", required=True, help="output dataset directory")
    g.add_argument("--seed", type=int, help="override the config seed")
    g.add_argument("--count", type=int, help="override the experiment count")
    g.set_defaults(func=_cmd_gen)

    t = sub.add_parser("train", help="train a model on a dataset directory")
    t.add_argument("--data", required=True, help="dataset directory")
    t.add_argument("--config", help="training config JSON")
    t.add_argument("--model-config", help="model config JSON")
    t.add_argument("--out", required=True, help="run output directory")
    t.add_argument("--val-frac", type=float, default=0.1,
                   help="fraction of experiments held out for validation")
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--report", required=True, help="output report JSON path")
    e.set_defaults(func=_cmd_eval)

    pr = sub.add_parser("predict", help="predict labels for one experiment file")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--experiment", required=True, help="experiment JSON file")
    pr.add_argument("--out", required=True, help="output prediction JSON path")
    pr.set_defaults(func=_cmd_predict)

    b = sub.add_parser("bench-merge",
                       help="epoch wall time per experiment-merge setting")
    b.add_argument("--data", required=True)
    b.add_argument("--merge", default="1,2,4,8,16",
                   help="comma-separated merge counts")
    b.add_argument("--out", required=True, help="output CSV path")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--epochs", type=int, default=1)
    b.set_defaults(func=_cmd_bench_merge)

    c = sub.add_parser("compare", help="delay MAPE per model mode")
    c.add_argument("--data", required=True)
    c.add_argument("--modes", default="m3net,plain_readout,flat_mlp")
    c.add_argument("--runs", type=int, default=3)
    c.add_argument("--epochs", type=int, default=30)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True, help="output CSV path")
    c.set_defaults(func=_cmd_compare)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DatasetError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
