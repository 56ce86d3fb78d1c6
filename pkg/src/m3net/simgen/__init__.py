"""Discrete-event testbed simulator: ground-truth oracle and dataset generator."""

from .traffic import TrafficSpec, emission_times, measure_flow_features
from .topo import gen_topology, gen_routing
from .core import SimResult, simulate, active_kernel
from .dataset import GenConfig, gen_dataset, gen_experiment

__all__ = [
    "TrafficSpec",
    "emission_times",
    "measure_flow_features",
    "gen_topology",
    "gen_routing",
    "SimResult",
    "simulate",
    "active_kernel",
    "GenConfig",
    "gen_dataset",
    "gen_experiment",
]
