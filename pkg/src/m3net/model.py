"""Flow performance model: embedding, cyclic path/link message passing,
and per-metric readouts.

Three heads share one trunk. Delay is a positive regression built from
per-link occupancy estimates divided by capacity and summed along the
path. Jitter and drops are hierarchical: a binary zero-filter routes a
flow either to an exact 0 or to a bin classifier over fractions at
granularity 1/n_bins. In m3net mode each head's readout is a sparse
top-k mixture of expert MLPs; plain_readout uses one readout MLP;
flat_mlp skips the graph entirely.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tensor
from .featurizer import FeatureMatrices

N_FLOW_FEATURES = 6
N_LINK_FEATURES = 4

MODES = ("m3net", "plain_readout", "flat_mlp")
METRICS = ("delay", "jitter", "drop")


@dataclass
class ModelConfig:
    hidden_dim: int = 16
    iterations: int = 12
    n_experts: int = 4
    top_k: int = 2
    n_bins: int = 10
    mode: str = "m3net"
    # fixed output scales, calibrated from training labels so the heads
    # operate in O(1) units; stored with the checkpoint
    occ_scale: float = 1.0       # bits of queue per unit of softplus output
    delay_scale: float = 1.0     # flat_mlp head, seconds per unit

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if not 1 <= self.top_k <= self.n_experts:
            raise ValueError(f"top_k {self.top_k} outside [1, {self.n_experts}]")

    def asdict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class Prediction:
    delay: np.ndarray            # [F] seconds, > 0
    zero_prob_jitter: np.ndarray  # [F] probability the jitter is nonzero
    zero_prob_drop: np.ndarray
    jitter_bin: np.ndarray       # [F, n_bins] class distribution
    drop_bin: np.ndarray


def bin_fraction(v: float, n_bins: int) -> int:
    """Left-closed bins of width 1/n_bins; 1.0 clamps into the last bin."""
    if v < 0.0 or v > 1.0:
        raise ValueError(f"fraction {v} outside [0, 1]")
    return min(int(v * n_bins), n_bins - 1)


def bin_fractions(v: np.ndarray, n_bins: int) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if np.any(v < 0.0) or np.any(v > 1.0):
        raise ValueError("fractions outside [0, 1]")
    return np.minimum((v * n_bins).astype(np.int64), n_bins - 1)


def _n_experts(cfg: ModelConfig) -> int:
    return cfg.n_experts if cfg.mode == "m3net" else 1


def build_params(cfg: ModelConfig, seed: int) -> ParamStore:
    rng = np.random.default_rng(seed)
    p = ParamStore()
    h = cfg.hidden_dim
    if cfg.mode == "flat_mlp":
        d_in = N_FLOW_FEATURES + N_LINK_FEATURES
        p.add_mlp("flat.delay", rng, d_in, h, 1)
        for m in ("jitter", "drop"):
            p.add_mlp(f"flat.{m}.zero", rng, d_in, h, 1)
            p.add_mlp(f"flat.{m}.bin", rng, d_in, h, cfg.n_bins)
        return p

    p.add_mlp("embed.flow", rng, N_FLOW_FEATURES, h, h)
    p.add_mlp("embed.link", rng, N_LINK_FEATURES, h, h)
    p.add_gru("gru.path", rng, h)
    p.add_gru("gru.link", rng, h)
    ne = _n_experts(cfg)
    for i in range(ne):
        p.add_mlp(f"delay.expert{i}", rng, h, h, 1)
        p.add_mlp(f"jitter.expert{i}", rng, h, h, cfg.n_bins)
        p.add_mlp(f"drop.expert{i}", rng, h, h, cfg.n_bins)
    for m in ("jitter", "drop"):
        p.add_mlp(f"{m}.zero", rng, h, h, 1)
    if cfg.mode == "m3net":
        for m in METRICS:
            p.add_mlp(f"{m}.gate", rng, h, h, ne)
    return p


# ------------------------------------------------------ message passing

def init_states(fm: FeatureMatrices, p: ParamStore) -> tuple[Tensor, Tensor]:
    if fm.flow_features.shape[1] != N_FLOW_FEATURES:
        raise ad.ShapeError(f"expected {N_FLOW_FEATURES} flow features, "
                            f"got {fm.flow_features.shape[1]}")
    if fm.link_features.shape[1] != N_LINK_FEATURES:
        raise ad.ShapeError(f"expected {N_LINK_FEATURES} link features, "
                            f"got {fm.link_features.shape[1]}")
    h_p = ad.mlp_forward(ad.constant(fm.flow_features), p.mlp("embed.flow"))
    h_l = ad.mlp_forward(ad.constant(fm.link_features), p.mlp("embed.link"))
    return h_p, h_l


def _path_structure(fm: FeatureMatrices):
    """Flat (flow, position) -> link index arrays for gather/scatter."""
    lens = np.array([len(x) for x in fm.flow_to_links], dtype=np.int64)
    link_of_pos = (np.concatenate(fm.flow_to_links) if len(lens)
                   else np.zeros(0, dtype=np.int64))
    flow_of_pos = np.repeat(np.arange(len(lens), dtype=np.int64), lens)
    return lens, link_of_pos, flow_of_pos


def message_pass(h_p: Tensor, h_l: Tensor, fm: FeatureMatrices,
                 p: ParamStore, iterations: int) -> tuple[Tensor, Tensor]:
    """T rounds of cyclic updates.

    Path update: the path GRU consumes its links' states sequentially in
    path order, starting from the previous path state; each intermediate
    hidden state is the message that position's link will receive.
    Link update: sum the position messages per link, then one link GRU
    step from the previous link state.
    """
    lens, link_of_pos, flow_of_pos = _path_structure(fm)
    n_flows, n_links = fm.num_flows, fm.num_links
    gru_p = p.gru("gru.path")
    gru_l = p.gru("gru.link")
    max_len = int(lens.max()) if len(lens) else 0
    # per step: flows still on their path, and their link at that position
    offs = np.zeros(n_flows, dtype=np.int64)
    offs[1:] = np.cumsum(lens)[:-1]
    step_flows = [np.nonzero(lens > pos)[0] for pos in range(max_len)]
    step_links = [link_of_pos[offs[f] + pos] for pos, f in enumerate(step_flows)]

    for _ in range(iterations):
        msgs = []
        msg_flows = []
        state = h_p
        for pos in range(max_len):
            active = step_flows[pos]
            h_in = ad.gather_rows(state, active)
            x = ad.gather_rows(h_l, step_links[pos])
            h_out = ad.gru_cell(h_in, x, gru_p)
            state = ad.add(state, ad.scatter_sum(ad.sub(h_out, h_in),
                                                 active, n_flows))
            msgs.append(h_out)
            msg_flows.append(step_links[pos])
        h_p = state
        agg = ad.scatter_sum(ad.concat(msgs, axis=0),
                             np.concatenate(msg_flows), n_links)
        h_l = ad.gru_cell(h_l, agg, gru_l)
    return h_p, h_l


# ------------------------------------------------------------ readouts

def gate(h_p: Tensor, p: ParamStore, metric: str, cfg: ModelConfig) -> Tensor:
    scores = ad.mlp_forward(h_p, p.mlp(f"{metric}.gate"))
    return ad.topk_softmax(scores, cfg.top_k)


def _occupancy_delay(h_l: Tensor, fm: FeatureMatrices,
                     mlp_params, occ_scale: float) -> Tensor:
    """Per-flow delay for one expert: sum of softplus occupancies / capacity."""
    _, link_of_pos, flow_of_pos = _path_structure(fm)
    occ = ad.softplus(ad.mlp_forward(h_l, mlp_params))          # [L, 1]
    per_pos = ad.gather_rows(occ, link_of_pos)                   # [P, 1]
    inv_cap = (occ_scale / fm.capacities[link_of_pos])[:, None]
    return ad.scatter_sum(ad.cmul(per_pos, inv_cap), flow_of_pos, fm.num_flows)


def moe_mix(expert_outputs: list[Tensor], weights: Tensor | None) -> Tensor:
    """Gate-weighted sum of expert outputs (weights None = single expert)."""
    if weights is None:
        if len(expert_outputs) != 1:
            raise ad.ShapeError("dense mix of multiple experts needs a gate")
        return expert_outputs[0]
    if weights.shape[1] != len(expert_outputs):
        raise ad.ShapeError(f"gate width {weights.shape[1]} != "
                            f"{len(expert_outputs)} experts")
    mixed = ad.rowscale(expert_outputs[0], ad.slice_cols(weights, 0, 1))
    for i in range(1, len(expert_outputs)):
        mixed = ad.add(mixed, ad.rowscale(expert_outputs[i],
                                          ad.slice_cols(weights, i, i + 1)))
    return mixed


def _flat_inputs(fm: FeatureMatrices) -> np.ndarray:
    lens, link_of_pos, flow_of_pos = _path_structure(fm)
    sums = np.zeros((fm.num_flows, N_LINK_FEATURES))
    np.add.at(sums, flow_of_pos, fm.link_features[link_of_pos])
    return np.concatenate([fm.flow_features, sums / lens[:, None]], axis=1)


def forward(p: ParamStore, cfg: ModelConfig, fm: FeatureMatrices) -> dict[str, Tensor]:
    """Run the configured mode end to end; returns per-head tensors."""
    out: dict[str, Tensor] = {}
    if cfg.mode == "flat_mlp":
        x = ad.constant(_flat_inputs(fm))
        out["delay"] = ad.scale(
            ad.softplus(ad.mlp_forward(x, p.mlp("flat.delay"))), cfg.delay_scale)
        for m in ("jitter", "drop"):
            out[f"{m}_zero_logit"] = ad.mlp_forward(x, p.mlp(f"flat.{m}.zero"))
            out[f"{m}_bin_logits"] = ad.mlp_forward(x, p.mlp(f"flat.{m}.bin"))
        return out

    h_p, h_l = init_states(fm, p)
    h_p, h_l = message_pass(h_p, h_l, fm, p, cfg.iterations)
    ne = _n_experts(cfg)
    gates = {m: gate(h_p, p, m, cfg) if cfg.mode == "m3net" else None
             for m in METRICS}
    out["delay"] = moe_mix(
        [_occupancy_delay(h_l, fm, p.mlp(f"delay.expert{i}"), cfg.occ_scale)
         for i in range(ne)],
        gates["delay"])
    for m in ("jitter", "drop"):
        out[f"{m}_zero_logit"] = ad.mlp_forward(h_p, p.mlp(f"{m}.zero"))
        out[f"{m}_bin_logits"] = moe_mix(
            [ad.mlp_forward(h_p, p.mlp(f"{m}.expert{i}")) for i in range(ne)],
            gates[m])
        if gates[m] is not None:
            out[f"{m}_gate"] = gates[m]
    return out


def predict(p: ParamStore, cfg: ModelConfig, fm: FeatureMatrices) -> Prediction:
    out = forward(p, cfg, fm)

    def sig(x):
        return 1.0 / (1.0 + np.exp(-x))

    def smax(x):
        e = np.exp(x - x.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)

    return Prediction(
        delay=out["delay"].data[:, 0],
        zero_prob_jitter=sig(out["jitter_zero_logit"].data[:, 0]),
        zero_prob_drop=sig(out["drop_zero_logit"].data[:, 0]),
        jitter_bin=smax(out["jitter_bin_logits"].data),
        drop_bin=smax(out["drop_bin_logits"].data),
    )


def hierarchical_values(zero_prob: np.ndarray, bin_probs: np.ndarray,
                        bin_edges_scale: float) -> np.ndarray:
    """Point predictions from the hierarchical head: 0 when the nonzero
    probability is below 0.5, else the predicted bin's midpoint rescaled."""
    n_bins = bin_probs.shape[1]
    mids = (np.argmax(bin_probs, axis=1) + 0.5) / n_bins * bin_edges_scale
    return np.where(zero_prob < 0.5, 0.0, mids)
