"""Objective assembly, merged-batch training, AdamW, plateau scheduling."""

from __future__ import annotations

import csv
import dataclasses
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tensor
from .featurizer import FeatureMatrices, FeatureStats, featurize, fit_stats
from .model import ModelConfig, bin_fractions, build_params, forward
from .netgraph import Experiment


@dataclass
class MergedBatch:
    fm: FeatureMatrices
    flow_exp: np.ndarray     # experiment-of-origin tag per flow
    merge_count: int


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    plateau_patience: int = 5
    plateau_factor: float = 0.5
    epochs: int = 100
    merge_count: int = 8
    seed: int = 0
    heads: tuple[str, ...] = ("delay", "jitter", "drop")
    delay_loss: str = "mape"     # "mape" | "mse"
    zero_filter: bool = True     # False: bin heads train on all flows, no zero head

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0 < self.plateau_factor < 1:
            raise ValueError("plateau_factor must be in (0, 1)")

    @classmethod
    def from_json(cls, path: str) -> "TrainConfig":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        cfg = cls(**doc)
        cfg.heads = tuple(cfg.heads)
        return cfg


def merge_experiments(batch: list[FeatureMatrices]) -> MergedBatch:
    """Concatenate featurized experiments, offsetting link indices.

    Running the model on the merged batch is semantically identical to
    running the members separately (indices never cross experiments).
    """
    if not batch:
        raise ValueError("empty merge")
    widths = {fm.flow_features.shape[1] for fm in batch}
    if len(widths) != 1 or {fm.link_features.shape[1] for fm in batch} != {4}:
        raise ValueError("inconsistent feature widths across batch members")
    link_off = 0
    flow_to_links: list[np.ndarray] = []
    tags = []
    for j, fm in enumerate(batch):
        flow_to_links.extend(links + link_off for links in fm.flow_to_links)
        tags.append(np.full(fm.num_flows, j, dtype=np.int64))
        link_off += fm.num_links
    merged = FeatureMatrices(
        flow_features=np.concatenate([fm.flow_features for fm in batch]),
        link_features=np.concatenate([fm.link_features for fm in batch]),
        flow_to_links=flow_to_links,
        capacities=np.concatenate([fm.capacities for fm in batch]),
        delay=np.concatenate([fm.delay for fm in batch]),
        jitter=np.concatenate([fm.jitter for fm in batch]),
        drop_frac=np.concatenate([fm.drop_frac for fm in batch]),
    )
    return MergedBatch(merged, np.concatenate(tags), len(batch))


# -------------------------------------------------------------- losses

def loss_delay(pred: Tensor, target: np.ndarray, kind: str = "mape",
               reduction: str = "sum") -> Tensor:
    target = np.asarray(target, dtype=np.float64)
    if np.any(target <= 0):
        raise ValueError("delay targets must be positive")
    diff = ad.sub(pred, ad.constant(target[:, None]))
    if kind == "mape":
        per_flow = ad.cmul(ad.absval(diff), 1.0 / target[:, None])
    elif kind == "mse":
        per_flow = ad.mul(diff, diff)
    else:
        raise ValueError(f"unknown delay loss {kind!r}")
    return ad.sum_all(per_flow) if reduction == "sum" else ad.mean_all(per_flow)


def loss_binary(logit: Tensor, target01: np.ndarray,
                reduction: str = "sum") -> Tensor:
    """Negative log-likelihood of a sigmoid output, from the logit."""
    y = np.asarray(target01, dtype=np.float64)[:, None]
    per_flow = ad.sub(ad.softplus(logit), ad.cmul(logit, y))
    return ad.sum_all(per_flow) if reduction == "sum" else ad.mean_all(per_flow)


def loss_classification(logits: Tensor, bins: np.ndarray,
                        reduction: str = "sum") -> Tensor:
    """Mean/sum negative log-likelihood over n_bins classes."""
    bins = np.asarray(bins, dtype=np.int64)
    n, k = logits.shape
    if np.any(bins < 0) or np.any(bins >= k):
        raise ValueError("class index out of range")
    onehot = np.zeros((n, k))
    onehot[np.arange(n), bins] = 1.0
    nll = ad.scale(ad.cmul(ad.log_softmax(logits), onehot), -1.0)
    return ad.sum_all(nll) if reduction == "sum" else ad.scale(ad.sum_all(nll), 1.0 / n)


def combined_loss(out: dict[str, Tensor], fm: FeatureMatrices,
                  cfg: TrainConfig, mcfg: ModelConfig,
                  jitter_scale: float) -> Tensor:
    """Sum-reduced joint objective over the enabled heads."""
    terms: list[Tensor] = []
    if "delay" in cfg.heads:
        terms.append(loss_delay(out["delay"], fm.delay, cfg.delay_loss, "sum"))
    for metric, labels, scl in (("jitter", fm.jitter, jitter_scale),
                                ("drop", fm.drop_frac, 1.0)):
        if metric not in cfg.heads:
            continue
        nonzero = labels > 0
        frac = np.clip(labels / scl, 0.0, 1.0)
        if cfg.zero_filter:
            terms.append(loss_binary(out[f"{metric}_zero_logit"],
                                     nonzero.astype(float), "sum"))
            if nonzero.any():
                rows = np.nonzero(nonzero)[0]
                terms.append(loss_classification(
                    ad.gather_rows(out[f"{metric}_bin_logits"], rows),
                    bin_fractions(frac[rows], mcfg.n_bins), "sum"))
        else:
            terms.append(loss_classification(
                out[f"{metric}_bin_logits"],
                bin_fractions(frac, mcfg.n_bins), "sum"))
    total = terms[0]
    for t in terms[1:]:
        total = ad.add(total, t)
    return total


# ------------------------------------------------------------ optimizer

class AdamW:
    """Decoupled-weight-decay adaptive moments."""

    def __init__(self, params: ParamStore, cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.lr = cfg.learning_rate
        self.t = 0
        self.m = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in params.items()}

    def step(self) -> None:
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for k, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[k] = c.beta1 * self.m[k] + (1 - c.beta1) * g
            self.v[k] = c.beta2 * self.v[k] + (1 - c.beta2) * g * g
            update = (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + c.eps)
            p.data -= self.lr * (update + c.weight_decay * p.data)


class PlateauScheduler:
    """Multiply lr by factor when the watched value stalls for patience epochs."""

    def __init__(self, opt: AdamW, patience: int, factor: float):
        self.opt = opt
        self.patience = patience
        self.factor = factor
        self.best = np.inf
        self.stale = 0

    def update(self, value: float) -> None:
        if value < self.best:
            self.best = value
            self.stale = 0
        else:
            self.stale += 1
            if self.stale > self.patience:
                self.opt.lr *= self.factor
                self.stale = 0


# ------------------------------------------------------------- training

def calibrate_scales(mcfg: ModelConfig,
                     experiments: list[Experiment]) -> ModelConfig:
    """Fix the heads' output scales from training labels (median units).

    Leaves explicitly set (non-default) scales alone. Without this the
    softplus heads start many orders of magnitude from the label range
    and relative-error training cannot close the gap.
    """
    delays = np.array([f.labels.delay_s for e in experiments for f in e.flows])
    implied_occ = []
    for e in experiments:
        caps = {l.id: l.capacity_bps for l in e.topology.links}
        for f in e.flows:
            inv = sum(1.0 / caps[lid] for lid in f.path.link_ids)
            implied_occ.append(f.labels.delay_s / inv)
    updates = {}
    if mcfg.occ_scale == 1.0 and implied_occ:
        updates["occ_scale"] = float(np.median(implied_occ))
    if mcfg.delay_scale == 1.0 and len(delays):
        updates["delay_scale"] = float(np.median(delays))
    return dataclasses.replace(mcfg, **updates) if updates else mcfg


def jitter_norm_scale(experiments: list[Experiment]) -> float:
    """99th percentile of nonzero training jitter; 1.0 if all zero."""
    nz = [f.labels.jitter_s for e in experiments for f in e.flows
          if f.labels.jitter_s > 0]
    return float(np.percentile(nz, 99)) if nz else 1.0


@dataclass
class TrainResult:
    params: ParamStore
    stats: FeatureStats
    jitter_scale: float
    mcfg: ModelConfig | None = None   # with calibrated scales
    log: list[dict] = field(default_factory=list)
    best_epoch: int = -1


def _chunks(order: np.ndarray, size: int):
    for i in range(0, len(order), size):
        yield order[i:i + size]


def _val_metrics(params, mcfg, batch: MergedBatch, cfg, jitter_scale):
    from .harness import hierarchical_accuracy, mape
    from .model import predict
    pred = predict(params, mcfg, batch.fm)
    labels = batch.fm
    out = {"val_delay_mape": mape(pred.delay, labels.delay)}
    jfrac = np.clip(labels.jitter / jitter_scale, 0.0, 1.0)
    out["val_jitter_acc"] = hierarchical_accuracy(
        pred.zero_prob_jitter, pred.jitter_bin, jfrac, mcfg.n_bins)["combined_acc"]
    out["val_drop_acc"] = hierarchical_accuracy(
        pred.zero_prob_drop, pred.drop_bin, labels.drop_frac,
        mcfg.n_bins)["combined_acc"]
    return out


def train(train_exps: list[Experiment], val_exps: list[Experiment],
          cfg: TrainConfig, mcfg: ModelConfig,
          out_dir: str | None = None,
          stats: FeatureStats | None = None) -> TrainResult:
    if not train_exps:
        raise ValueError("empty training split")
    if stats is None:
        stats = fit_stats(train_exps)
    mcfg = calibrate_scales(mcfg, train_exps)
    jitter_scale = jitter_norm_scale(train_exps)
    train_fms = [featurize(e, stats) for e in train_exps]
    val_batch = (merge_experiments([featurize(e, stats) for e in val_exps])
                 if val_exps else None)

    params = build_params(mcfg, seed=cfg.seed)
    opt = AdamW(params, cfg)
    sched = PlateauScheduler(opt, cfg.plateau_patience, cfg.plateau_factor)
    rng = np.random.default_rng(cfg.seed)
    result = TrainResult(params=params, stats=stats, jitter_scale=jitter_scale,
                         mcfg=mcfg)
    best_val = np.inf

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        stats.save(os.path.join(out_dir, "stats.json"))

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(len(train_fms))
        total_loss = 0.0
        n_flows = 0
        for chunk in _chunks(order, cfg.merge_count):
            batch = merge_experiments([train_fms[i] for i in chunk])
            params.zero_grad()
            out = forward(params, mcfg, batch.fm)
            loss = combined_loss(out, batch.fm, cfg, mcfg, jitter_scale)
            ad.backward(loss)
            opt.step()
            total_loss += float(loss.data)
            n_flows += batch.fm.num_flows
        row = {"epoch": epoch, "train_loss": total_loss / n_flows, "lr": opt.lr}
        if val_batch is not None:
            row.update(_val_metrics(params, mcfg, val_batch, cfg, jitter_scale))
            watch = row["val_delay_mape"] if "delay" in cfg.heads \
                else -row.get("val_drop_acc", 0.0)
            sched.update(watch)
            if watch < best_val:
                best_val = watch
                result.best_epoch = epoch
                if out_dir:
                    save_run_checkpoint(params, mcfg, stats, jitter_scale, cfg,
                                        epoch, os.path.join(out_dir, "best.ckpt"))
        row["seconds"] = time.perf_counter() - t0
        result.log.append(row)

    if out_dir:
        save_run_checkpoint(params, mcfg, stats, jitter_scale, cfg,
                            cfg.epochs - 1, os.path.join(out_dir, "last.ckpt"))
        write_log_csv(result.log, os.path.join(out_dir, "log.csv"))
    return result


LOG_COLUMNS = ("epoch", "train_loss", "val_delay_mape", "val_jitter_acc",
               "val_drop_acc", "lr", "seconds")


def write_log_csv(log: list[dict], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_COLUMNS, extrasaction="ignore")
        w.writeheader()
        for row in log:
            w.writerow({k: row.get(k, "") for k in LOG_COLUMNS})


def save_run_checkpoint(params, mcfg, stats, jitter_scale, cfg, epoch, path):
    header = {
        "model_config": mcfg.asdict(),
        "stats": stats.to_json(),
        "jitter_scale": jitter_scale,
        "train_config": dataclasses.asdict(cfg),
        "epoch": epoch,
    }
    ad.save_checkpoint(params, path, header)


def load_run_checkpoint(path: str):
    params, header = ad.load_checkpoint(path)
    mcfg = ModelConfig(**header["model_config"])
    stats = FeatureStats.from_json(header["stats"])
    return params, mcfg, stats, float(header["jitter_scale"]), header


def epoch_timing(experiments: list[Experiment], merge_counts: list[int],
                 mcfg: ModelConfig | None = None, seed: int = 0,
                 n_epochs: int = 1) -> list[dict]:
    """Wall-clock seconds per epoch for each merge setting, same data/seed."""
    mcfg = mcfg or ModelConfig()
    stats = fit_stats(experiments)
    jitter_scale = jitter_norm_scale(experiments)
    fms = [featurize(e, stats) for e in experiments]
    rows = []
    for mc in merge_counts:
        cfg = TrainConfig(merge_count=mc, seed=seed, epochs=n_epochs)
        params = build_params(mcfg, seed=seed)
        opt = AdamW(params, cfg)
        rng = np.random.default_rng(seed)
        t0 = time.perf_counter()
        n_batches = 0
        n_samples = 0
        for _ in range(n_epochs):
            for chunk in _chunks(rng.permutation(len(fms)), mc):
                batch = merge_experiments([fms[i] for i in chunk])
                params.zero_grad()
                out = forward(params, mcfg, batch.fm)
                loss = combined_loss(out, batch.fm, cfg, mcfg, jitter_scale)
                ad.backward(loss)
                opt.step()
                n_batches += 1
                n_samples += batch.fm.num_flows
        rows.append({
            "merge_count": mc,
            "seconds_per_epoch": (time.perf_counter() - t0) / n_epochs,
            "avg_samples_per_batch": n_samples / n_batches,
        })
    return rows
