"""Feature extraction: link loads, normalization statistics, matrices."""

import dataclasses

import numpy as np
import pytest

from m3net.featurizer import (
    FLOW_FEATURES,
    LINK_FEATURES,
    FeatureStats,
    compute_link_load,
    featurize,
    fit_stats,
    normalized_link_load,
)
from m3net.netgraph import Experiment, FlowRecord, Labels, Link, Path, Topology


def make_experiment(flow_specs, links, node_count=4):
    """flow_specs: list of (traffic_bps, path link ids)."""
    flows = tuple(
        FlowRecord(id=i, traffic_bps=bps, packets_per_burst=1.0,
                   packet_size_bits=8000.0, p90_interarrival_s=0.001,
                   interpkt_mean_s=0.001, interpkt_var_s2=0.0,
                   path=Path(i, tuple(path)), labels=Labels(1e-3, 0.0, 0.0))
        for i, (bps, path) in enumerate(flow_specs))
    return Experiment(id=0, topology=Topology(node_count, tuple(links)),
                      flows=flows)


CHAIN = (Link(0, 0, 1, 10e6), Link(1, 1, 2, 10e6), Link(2, 2, 3, 20e6))


class TestLinkLoad:
    def test_two_flows_sum_over_capacity(self):
        e = make_experiment([(2e6, [0]), (3e6, [0])], CHAIN)
        assert compute_link_load(e)[0] == pytest.approx(0.5)

    def test_untraversed_link_is_zero(self):
        e = make_experiment([(2e6, [0])], CHAIN)
        assert compute_link_load(e)[2] == 0.0

    def test_multi_visit_counts_per_visit(self):
        # a loop path visiting link 0 twice counts its traffic twice
        loop = (Link(0, 0, 1, 10e6), Link(1, 1, 0, 10e6))
        e = make_experiment([(2e6, [0, 1, 0])], loop, node_count=2)
        assert compute_link_load(e)[0] == pytest.approx(0.4)
        assert compute_link_load(e)[1] == pytest.approx(0.2)

    def test_linear_in_traffic(self):
        e1 = make_experiment([(2e6, [0, 1])], CHAIN)
        e2 = make_experiment([(4e6, [0, 1])], CHAIN)
        assert np.allclose(2 * compute_link_load(e1), compute_link_load(e2))

    def test_matches_per_packet_count(self):
        # offered load equals packet-rate x size / capacity
        e = make_experiment([(5e6, [0])], CHAIN)
        pkts_per_s = 5e6 / 8000.0
        assert compute_link_load(e)[0] == pytest.approx(
            pkts_per_s * 8000.0 / 10e6)


class TestNormalizedLoad:
    def test_peak_is_one(self):
        e = make_experiment([(2e6, [0, 1, 2]), (3e6, [0])], CHAIN)
        norm = normalized_link_load(e)
        assert norm.max() == pytest.approx(1.0)
        load = compute_link_load(e)
        assert np.allclose(norm, load / load.max())

    def test_all_zero_loads_stay_zero(self):
        e = make_experiment([], CHAIN)
        assert np.all(normalized_link_load(e) == 0.0)


class TestStats:
    def test_population_convention(self, small_experiments):
        stats = fit_stats(small_experiments)
        raw = np.concatenate([[f.feature_vector() for f in e.flows]
                              for e in small_experiments])
        assert np.allclose(stats.flow_mean, raw.mean(0))
        assert np.allclose(stats.flow_std, raw.std(0))  # ddof=0
        assert np.allclose(stats.flow_min, raw.min(0))
        assert np.allclose(stats.flow_max, raw.max(0))

    def test_zero_std_flagged(self):
        e = make_experiment([(2e6, [0]), (2e6, [1])], CHAIN)
        stats = fit_stats([e])
        assert stats.flow_zero_std.all()  # both flows have identical features

    def test_json_round_trip(self, small_experiments, tmp_path):
        stats = fit_stats(small_experiments)
        stats.save(tmp_path / "stats.json")
        back = FeatureStats.load(tmp_path / "stats.json")
        for f in ("flow_mean", "flow_std", "flow_min", "flow_max",
                  "link_mean", "link_std", "link_min", "link_max"):
            assert np.array_equal(getattr(stats, f), getattr(back, f))

    def test_json_layout_names_features(self, small_experiments):
        doc = fit_stats(small_experiments).to_json()
        assert set(doc["flow"]) == set(FLOW_FEATURES)
        assert set(doc["link"]) == set(LINK_FEATURES)
        assert set(doc["flow"]["traffic"]) == {"mean", "std", "min", "max"}

    def test_empty_split_rejected(self):
        with pytest.raises(ValueError):
            fit_stats([])


class TestFeaturize:
    def test_shapes_and_alignment(self, small_experiments):
        stats = fit_stats(small_experiments)
        e = small_experiments[0]
        fm = featurize(e, stats)
        assert fm.flow_features.shape == (len(e.flows), 6)
        assert fm.link_features.shape == (len(e.topology.links), 4)
        for f, links in zip(e.flows, fm.flow_to_links):
            assert len(links) == len(f.path.link_ids)
        assert np.array_equal(fm.delay,
                              [f.labels.delay_s for f in e.flows])

    def test_standardization(self, small_experiments):
        stats = fit_stats(small_experiments)
        fms = [featurize(e, stats) for e in small_experiments]
        allf = np.concatenate([fm.flow_features for fm in fms])
        keep = ~stats.flow_zero_std
        assert np.allclose(allf[:, keep].mean(0), 0.0, atol=1e-9)
        assert np.allclose(allf[:, keep].std(0), 1.0, atol=1e-9)

    def test_zero_std_feature_not_divided(self):
        e = make_experiment([(2e6, [0]), (2e6, [1])], CHAIN)
        stats = fit_stats([e])
        fm = featurize(e, stats)
        # identical raw values standardize to exactly 0, not NaN
        assert np.all(np.isfinite(fm.flow_features))
        assert np.all(fm.flow_features[:, stats.flow_zero_std] == 0.0)

    def test_precompute_equivalence(self, small_experiments):
        # featurizing twice with the same stats is bit-identical: nothing
        # in the per-epoch path recomputes feature values
        stats = fit_stats(small_experiments)
        a = featurize(small_experiments[3], stats)
        b = featurize(small_experiments[3], stats)
        assert np.array_equal(a.flow_features, b.flow_features)
        assert np.array_equal(a.link_features, b.link_features)

    def test_link_to_flows_partition(self, small_experiments):
        stats = fit_stats(small_experiments)
        fm = featurize(small_experiments[0], stats)
        buckets = fm.link_to_flows()
        pairs = [(fi, pos) for bucket in buckets for (fi, pos) in bucket]
        expect = [(fi, pos) for fi, links in enumerate(fm.flow_to_links)
                  for pos in range(len(links))]
        assert sorted(pairs) == sorted(expect)
        for li, bucket in enumerate(buckets):
            for fi, pos in bucket:
                assert fm.flow_to_links[fi][pos] == li

    def test_source_degree_feature(self):
        e = make_experiment([(1e6, [0])], CHAIN)
        stats = fit_stats([e])
        # link 1 leaves node 1, which touches links 0 and 1 -> degree 2
        fm = featurize(e, stats)
        # undo standardization to check the raw value
        raw = fm.link_features[1, 3] * (stats.link_std[3] or 1.0) + stats.link_mean[3]
        assert raw == pytest.approx(2.0)
