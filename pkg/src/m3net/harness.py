"""Metrics, evaluation reports, baseline comparison, and scatter exports."""

from __future__ import annotations

import csv
import hashlib
import json
import time

import numpy as np

from .featurizer import FLOW_FEATURES
from .model import ModelConfig, bin_fractions
from .netgraph import Experiment


def mape(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean absolute percentage error, in percent."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if np.any(target <= 0):
        raise ValueError("MAPE requires positive targets")
    return float(100.0 * np.mean(np.abs(pred - target) / target))


def hierarchical_accuracy(nonzero_prob: np.ndarray, bin_probs: np.ndarray,
                          label_frac: np.ndarray, n_bins: int) -> dict:
    """Accuracy of the zero-filter + bin-classifier pipeline.

    A flow counts as correct iff it is routed to the right branch and,
    when nonzero, its predicted bin matches the label's bin. Also reports
    the two branch accuracies separately.
    """
    nonzero_prob = np.asarray(nonzero_prob, dtype=np.float64)
    label_frac = np.asarray(label_frac, dtype=np.float64)
    if not (len(nonzero_prob) == len(bin_probs) == len(label_frac)):
        raise ValueError("misaligned prediction/label lengths")
    label_nonzero = label_frac > 0
    routed_nonzero = nonzero_prob >= 0.5  # ties route to the nonzero branch
    pred_bin = np.argmax(bin_probs, axis=1)
    true_bin = bin_fractions(label_frac, n_bins)
    correct = np.where(label_nonzero,
                       routed_nonzero & (pred_bin == true_bin),
                       ~routed_nonzero)
    zero_acc = float(np.mean(routed_nonzero == label_nonzero))
    bin_acc = (float(np.mean(pred_bin[label_nonzero] == true_bin[label_nonzero]))
               if label_nonzero.any() else 1.0)
    return {
        "combined_acc": float(100.0 * np.mean(correct)),
        "zero_acc": 100.0 * zero_acc,
        "bin_acc": 100.0 * bin_acc,
    }


def _confusion(pred_bin, true_bin, n_bins) -> list[list[int]]:
    m = np.zeros((n_bins, n_bins), dtype=np.int64)
    np.add.at(m, (true_bin, pred_bin), 1)
    return m.tolist()


def dataset_hash(experiments: list[Experiment]) -> str:
    h = hashlib.sha256()
    for e in experiments:
        h.update(f"{e.id}:{len(e.flows)}:{len(e.topology.links)}".encode())
    return h.hexdigest()[:16]


def evaluate(params, mcfg: ModelConfig, stats, jitter_scale: float,
             experiments: list[Experiment], meta: dict | None = None) -> dict:
    """EvalReport over a dataset; pure function of checkpoint + data."""
    from .featurizer import featurize
    from .model import predict
    from .trainer import merge_experiments

    batch = merge_experiments([featurize(e, stats) for e in experiments])
    fm = batch.fm
    pred = predict(params, mcfg, fm)
    jfrac = np.clip(fm.jitter / jitter_scale, 0.0, 1.0)

    jit = hierarchical_accuracy(pred.zero_prob_jitter, pred.jitter_bin,
                                jfrac, mcfg.n_bins)
    drp = hierarchical_accuracy(pred.zero_prob_drop, pred.drop_bin,
                                fm.drop_frac, mcfg.n_bins)
    report = {
        "delay_mape": mape(pred.delay, fm.delay),
        "jitter_zero_acc": jit["zero_acc"],
        "jitter_bin_acc": jit["bin_acc"],
        "jitter_acc": jit["combined_acc"],
        "drop_zero_acc": drp["zero_acc"],
        "drop_bin_acc": drp["bin_acc"],
        "drop_acc": drp["combined_acc"],
        "n_flows": int(fm.num_flows),
        "n_experiments": len(experiments),
        "confusion": {
            "jitter": _confusion(np.argmax(pred.jitter_bin, 1),
                                 bin_fractions(jfrac, mcfg.n_bins), mcfg.n_bins),
            "drop": _confusion(np.argmax(pred.drop_bin, 1),
                               bin_fractions(fm.drop_frac, mcfg.n_bins),
                               mcfg.n_bins),
        },
        "meta": dict(meta or {},
                     model_config=mcfg.asdict(),
                     dataset_hash=dataset_hash(experiments)),
    }
    return report


def compare_baselines(train_exps, val_exps, test_exps, modes, n_runs=3,
                      epochs=30, merge_count=8, base_seed=0,
                      model_kwargs=None, train_kwargs=None) -> list[dict]:
    """Delay MAPE and epoch time per model mode, averaged over seeded runs."""
    from .trainer import TrainConfig, train

    rows = []
    for mode in modes:
        per_run = []
        for run in range(n_runs):
            mcfg = ModelConfig(mode=mode, **(model_kwargs or {}))
            cfg = TrainConfig(epochs=epochs, merge_count=merge_count,
                              seed=base_seed + run, **(train_kwargs or {}))
            t0 = time.perf_counter()
            res = train(train_exps, val_exps, cfg, mcfg)
            secs = (time.perf_counter() - t0) / epochs
            rep = evaluate(res.params, res.mcfg, res.stats, res.jitter_scale,
                           test_exps)
            per_run.append({"seed": cfg.seed, "delay_mape": rep["delay_mape"],
                            "seconds_per_epoch": secs})
        rows.append({
            "mode": mode,
            "delay_mape": float(np.mean([r["delay_mape"] for r in per_run])),
            "seconds_per_epoch": float(np.mean([r["seconds_per_epoch"]
                                                for r in per_run])),
            "runs": per_run,
        })
    return rows


SCATTER_FEATURES = dict(zip(FLOW_FEATURES, range(len(FLOW_FEATURES))))
SCATTER_LABELS = ("delay_s", "jitter_s", "drop_frac")


def scatter_export(experiments: list[Experiment], x_feature: str,
                   y_label: str, out_path: str) -> dict:
    """One CSV row per flow plus Pearson r in the header comment."""
    if x_feature not in SCATTER_FEATURES and x_feature != "packets_generated":
        raise ValueError(f"unknown feature {x_feature!r}")
    if y_label not in SCATTER_LABELS:
        raise ValueError(f"unknown label {y_label!r}")

    xs, ys = [], []
    for e in experiments:
        for f in e.flows:
            if x_feature == "packets_generated":
                x = f.traffic_bps / f.packet_size_bits * 1.0
            else:
                x = f.feature_vector()[SCATTER_FEATURES[x_feature]]
            y = getattr(f.labels, y_label)
            xs.append(x)
            ys.append(y)
    xs = np.array(xs)
    ys = np.array(ys)
    degenerate = bool(xs.std() == 0 or ys.std() == 0)
    r = None if degenerate else float(np.corrcoef(xs, ys)[0, 1])

    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# pearson_r={'undefined' if r is None else r} "
                 f"x={x_feature} y={y_label} n={len(xs)}\n")
        w = csv.writer(fh)
        w.writerow([x_feature, y_label])
        for x, y in zip(xs, ys):
            w.writerow([x, y])
    return {"pearson_r": r, "degenerate": degenerate, "n": len(xs)}
