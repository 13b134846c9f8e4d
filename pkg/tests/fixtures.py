import pytest

import torch

import pyregime
from pyregime import envs, tabular

from . import utils


@pytest.fixture(scope="session", autouse=True)
def watch_project_dir():
    with utils.watch_dir("."):
        yield


@pytest.fixture(scope="session", autouse=True)
def watch_pyregime_home():
    with utils.watch_dir(pyregime.home()):
        yield


@pytest.fixture
def two_state_mdp():
    # a0 stays, a1 moves s0 -> s1, s1 is absorbing and pays 1 under both actions
    transition = torch.zeros((2, 2, 2), dtype=torch.float64)
    transition[0, 0, 0] = 1.0
    transition[0, 1, 1] = 1.0
    transition[1, :, 1] = 1.0
    reward = torch.tensor([[0.0, 0.0], [1.0, 1.0]], dtype=torch.float64)
    return tabular.TabularMDP(transition, reward)


@pytest.fixture
def self_loop_mdp():
    def factory(reward=1.0, num_actions=1):
        transition = torch.ones((1, num_actions, 1), dtype=torch.float64)
        return tabular.TabularMDP(
            transition, torch.full((1, num_actions), reward, dtype=torch.float64)
        )

    return factory


@pytest.fixture
def deterministic_chain():
    return tabular.chain_mdp(num_states=5, success=1.0)


@pytest.fixture
def chain_dataset_factory():
    def factory(n=40, T=20, seed=0, mdp=None, behavior=None):
        if mdp is None:
            mdp = tabular.chain_mdp(num_states=5, success=1.0)
        return envs.generate_dataset(
            envs.ChainEnv(mdp), behavior=behavior, n=n, T=T, seed=seed
        )

    return factory


@pytest.fixture
def one_hot_basis():
    def factory(num_states, num_actions=None):
        return pyregime.TabularIndicatorBasis(
            pyregime.StateEnumeration.range(num_states), num_actions=num_actions
        )

    return factory
