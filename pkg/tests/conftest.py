from pathlib import Path

import numpy as np
import pytest

from bftlearn.harness import load_config
from bftlearn.observation import LikelihoodModel, StateSpace
from bftlearn.topology import DirectedGraph, Scenario

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def binary_model(n: int, p: float = 0.7) -> LikelihoodModel:
    mat = np.array([[p, 1 - p], [1 - p, p]])
    return LikelihoodModel(tuple(mat.copy() for _ in range(n)))


def uniform_model(n: int, m: int, signals: int = 2) -> LikelihoodModel:
    return LikelihoodModel(tuple(np.full((signals, m), 1.0 / signals) for _ in range(n)))


def complete_scenario(n: int, faulty=(), f: int = 0, m: int = 2) -> Scenario:
    return Scenario(DirectedGraph.complete(n), frozenset(faulty), f, m)


@pytest.fixture(scope="session")
def config_dir() -> Path:
    return CONFIG_DIR


@pytest.fixture(scope="session")
def scenario_a_cfg():
    return load_config(CONFIG_DIR / "scenario_a.json")


@pytest.fixture(scope="session")
def scenario_b_cfg():
    return load_config(CONFIG_DIR / "scenario_b.json")


@pytest.fixture(scope="session")
def scenario_c_cfg():
    return load_config(CONFIG_DIR / "scenario_c.json")


@pytest.fixture
def two_states() -> StateSpace:
    return StateSpace.of_size(2, 0)
