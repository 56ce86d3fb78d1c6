"""Shared fixtures: small simulated datasets reused across test modules."""

import dataclasses

import pytest

from m3net.simgen import GenConfig, gen_experiment


@pytest.fixture(scope="session")
def gen_config():
    return GenConfig()


@pytest.fixture(scope="session")
def small_experiments(gen_config):
    """Ten mixed CBR+MB experiments, enough for feature/label variety."""
    return [gen_experiment(gen_config, i, seed=i) for i in range(10)]


@pytest.fixture(scope="session")
def mb_experiments():
    """Burst-only experiments: line-rate bursts, deterministic structure."""
    cfg = dataclasses.replace(GenConfig(), mix="MB")
    return [gen_experiment(cfg, i, seed=i) for i in range(10)]
