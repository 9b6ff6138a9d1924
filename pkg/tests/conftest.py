"""Shared fixtures: preset models and a seeded generator."""

import numpy as np
import pytest

from degenflow import get_preset


@pytest.fixture(scope="session")
def case_study():
    return get_preset("case_study_7_1")


@pytest.fixture(scope="session")
def stable_cycle():
    return get_preset("stable_cycle_rho2")


@pytest.fixture(scope="session")
def unstable_cycle():
    return get_preset("unstable_cycle_rho_half")


@pytest.fixture(scope="session")
def acyclic():
    return get_preset("acyclic_scenario_3")


@pytest.fixture(scope="session")
def double_sink():
    return get_preset("double_sink_1d")


@pytest.fixture(scope="session")
def double_source():
    return get_preset("double_source_1d")


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
