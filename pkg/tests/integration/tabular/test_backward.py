import pytest

import torch

import pyregime
from pyregime import envs, tabular

from tests.asserts import assert_close


def make_dataset(states, actions, rewards, num_actions=2):
    trajectories = [
        pyregime.Trajectory(*args) for args in zip(states, actions, rewards)
    ]
    return pyregime.OfflineDataset(trajectories, num_actions=num_actions)


def test_history_features_full():
    states = torch.tensor([[[1.0], [2.0]]], dtype=torch.float64)
    actions = torch.tensor([[1]])
    actual = tabular.history_features(states, actions, num_actions=2)
    assert_close(actual, torch.tensor([[1.0, 2.0, 0.0, 1.0]]))


def test_history_features_window():
    states = torch.tensor([[[1.0], [2.0], [3.0]]], dtype=torch.float64)
    actions = torch.tensor([[0, 1]])
    actual = tabular.history_features(states, actions, num_actions=2, window=2)
    assert_close(actual, torch.tensor([[2.0, 3.0, 0.0, 1.0]]))


def test_history_features_padding():
    states = torch.tensor([[[5.0]]], dtype=torch.float64)
    actions = torch.zeros((1, 0), dtype=torch.long)
    actual = tabular.history_features(states, actions, num_actions=2, window=2)
    assert_close(actual, torch.tensor([[0.0, 5.0, 0.0, 0.0]]))


def test_backward_induction_single_stage():
    generator = torch.Generator().manual_seed(0)
    num_samples = 20
    states = torch.rand((num_samples, 2, 1), generator=generator, dtype=torch.float64)
    actions = torch.randint(0, 2, (num_samples, 1), generator=generator)
    rewards = actions.to(torch.float64)
    ds = make_dataset(states, actions, rewards)

    result = tabular.backward_induction(ds, horizon=1)

    assert len(result.rules) == 1
    recommended = result.rules[0].recommend(
        states[:, :1], torch.zeros((num_samples, 0), dtype=torch.long)
    )
    assert torch.equal(recommended, torch.ones(num_samples, dtype=torch.long))

    policy = result.first_stage_policy()
    greedy = policy.greedy_actions(states[:, 0])
    assert torch.equal(greedy, torch.ones(num_samples, dtype=torch.long))


def test_backward_induction_ties(chain_dataset_factory):
    ds = chain_dataset_factory(n=40, T=2, seed=1)
    ds = pyregime.OfflineDataset(
        [
            pyregime.Trajectory(traj.states, traj.actions, torch.ones(2))
            for traj in ds
        ],
        num_actions=2,
    )
    states = torch.stack([traj.states for traj in ds])
    actions = torch.stack([traj.actions for traj in ds])

    result = tabular.backward_induction(ds)

    for stage, rule in enumerate(result.rules):
        recommended = rule.recommend(states[:, : stage + 1], actions[:, :stage])
        assert torch.equal(recommended, torch.zeros(len(ds), dtype=torch.long))


def test_backward_induction_finite_horizon_dp(deterministic_chain, one_hot_basis):
    horizon = 2
    ds = envs.generate_dataset(
        envs.ChainEnv(deterministic_chain), n=400, T=horizon, seed=0
    )
    states = torch.stack([traj.states for traj in ds])
    actions = torch.stack([traj.actions for traj in ds])

    result = tabular.backward_induction(ds, state_basis=one_hot_basis(5))
    oracle = tabular.finite_horizon_dp(deterministic_chain, horizon)

    enumeration = deterministic_chain.enumeration
    for stage, rule in enumerate(result.rules):
        recommended = rule.recommend(states[:, : stage + 1], actions[:, :stage])
        cells = enumeration.cells(states[:, stage])
        assert torch.equal(recommended, oracle.actions[stage, cells])


def test_backward_induction_underdetermined():
    states = torch.zeros((2, 2, 1), dtype=torch.float64)
    actions = torch.tensor([[0], [1]])
    rewards = torch.ones((2, 1), dtype=torch.float64)
    ds = make_dataset(states, actions, rewards)

    with pytest.raises(pyregime.UnderdeterminedError, match="underdetermined"):
        tabular.backward_induction(ds)


def test_backward_induction_unequal_horizons():
    ds = pyregime.OfflineDataset(
        [
            pyregime.Trajectory([0.0, 1.0], [0], [1.0]),
            pyregime.Trajectory([0.0, 1.0, 2.0], [0, 1], [1.0, 1.0]),
        ]
    )
    with pytest.raises(ValueError):
        tabular.backward_induction(ds, horizon=1)


def test_StageRule_to_dict():
    rule = tabular.StageRule(0, torch.tensor([1.0, 2.0]), num_actions=2)
    assert rule.to_dict() == {"stage": 0, "theta": [1.0, 2.0]}
