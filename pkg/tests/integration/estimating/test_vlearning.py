import pytest

import torch

import pyregime
from pyregime import envs, estimating, tabular

from tests.asserts import assert_close


@pytest.fixture
def stochastic_chain():
    return tabular.chain_mdp(num_states=5, success=0.9)


@pytest.fixture
def uniform_propensity():
    return estimating.KnownPropensity(pyregime.UniformPolicy(2))


def test_VLearnModel_state_action_basis(one_hot_basis):
    with pytest.raises(ValueError):
        estimating.VLearnModel(one_hot_basis(2, 2), 0.9)


def test_VLearnModel_from_dict(one_hot_basis):
    model = estimating.VLearnModel(one_hot_basis(3), 0.5, [1.0, 0.0, -1.0])
    restored = estimating.VLearnModel.from_dict(model.to_dict())
    assert restored.gamma == pytest.approx(0.5)
    assert_close(restored.theta, model.theta)


def test_vlearn_residual_oracle(stochastic_chain, one_hot_basis, uniform_propensity):
    gamma = 0.9
    behavior = pyregime.UniformPolicy(2)
    ds = envs.generate_dataset(
        envs.ChainEnv(stochastic_chain), behavior, n=2000, T=2, seed=0
    )
    values = tabular.policy_evaluation(stochastic_chain, behavior, gamma)
    model = estimating.VLearnModel(one_hot_basis(5), gamma, values)

    residual = estimating.vlearn_residual(behavior, model, ds, uniform_propensity)
    assert float(torch.linalg.norm(residual)) <= 0.05


def test_vlearn_residual_zero_rewards(
    chain_dataset_factory, one_hot_basis, uniform_propensity
):
    mdp = tabular.chain_mdp(num_states=5, success=1.0, goal_reward=0.0)
    ds = chain_dataset_factory(n=10, T=10, mdp=mdp)
    model = estimating.VLearnModel(one_hot_basis(5), 0.9)

    actual = estimating.vlearn_residual(
        pyregime.UniformPolicy(2), model, ds, uniform_propensity
    )
    assert torch.equal(actual, torch.zeros(5, dtype=torch.float64))


def test_vlearn_residual_zero_weights(chain_dataset_factory, one_hot_basis):
    behavior = pyregime.TabularPolicy.deterministic([1] * 5, num_actions=2)
    policy = pyregime.TabularPolicy.deterministic([0] * 5, num_actions=2)
    ds = chain_dataset_factory(n=10, T=10, behavior=behavior)
    model = estimating.VLearnModel(one_hot_basis(5), 0.9, torch.rand(5))

    actual = estimating.vlearn_residual(
        policy, model, ds, estimating.KnownPropensity(behavior)
    )
    assert torch.equal(actual, torch.zeros(5, dtype=torch.float64))


def test_vlearn_residual_positivity(chain_dataset_factory, one_hot_basis):
    ds = chain_dataset_factory(n=5, T=5, seed=0)
    behavior = pyregime.TabularPolicy.deterministic([1] * 5, num_actions=2)
    model = estimating.VLearnModel(one_hot_basis(5), 0.9)

    with pytest.raises(ValueError, match="positivity violated"):
        estimating.vlearn_residual(
            pyregime.UniformPolicy(2), model, ds, estimating.KnownPropensity(behavior)
        )


def test_solve_vlearning_selects_optimal(
    stochastic_chain, one_hot_basis, uniform_propensity
):
    gamma = 0.9
    ds = envs.generate_dataset(envs.ChainEnv(stochastic_chain), n=200, T=20, seed=0)
    behavior = pyregime.UniformPolicy(2)
    optimal = tabular.value_iteration(stochastic_chain, gamma).policy

    result = estimating.solve_vlearning(
        ds, [behavior, optimal], one_hot_basis(5), gamma, uniform_propensity
    )

    assert result.policy is optimal
    assert len(result.candidate_values) == 2
    assert result.candidate_values[1] > result.candidate_values[0]

    initial = tabular.policy_evaluation(stochastic_chain, optimal, gamma).mean()
    assert result.value == pytest.approx(float(initial), rel=0.1)


@pytest.mark.slow
def test_solve_vlearning_selects_optimal_seeds(
    stochastic_chain, one_hot_basis, uniform_propensity
):
    gamma = 0.9
    behavior = pyregime.UniformPolicy(2)
    optimal = tabular.value_iteration(stochastic_chain, gamma).policy

    selected = []
    for seed in range(20):
        ds = envs.generate_dataset(
            envs.ChainEnv(stochastic_chain), n=200, T=20, seed=seed
        )
        result = estimating.solve_vlearning(
            ds, [behavior, optimal], one_hot_basis(5), gamma, uniform_propensity
        )
        selected.append(result.policy is optimal)

    assert all(selected)


def test_solve_vlearning_single_candidate(
    chain_dataset_factory, one_hot_basis, uniform_propensity
):
    ds = chain_dataset_factory(n=20, T=10)
    behavior = pyregime.UniformPolicy(2)

    result = estimating.solve_vlearning(
        ds, [behavior], one_hot_basis(5), 0.9, uniform_propensity
    )
    assert result.policy is behavior


def test_solve_vlearning_ties(chain_dataset_factory, one_hot_basis, uniform_propensity):
    mdp = tabular.chain_mdp(num_states=5, success=1.0, goal_reward=0.0)
    ds = chain_dataset_factory(n=20, T=10, mdp=mdp)
    candidates = [
        pyregime.TabularPolicy.deterministic([1] * 5, num_actions=2),
        pyregime.UniformPolicy(2),
        pyregime.TabularPolicy.deterministic([0] * 5, num_actions=2),
    ]

    result = estimating.solve_vlearning(
        ds, candidates, one_hot_basis(5), 0.9, uniform_propensity
    )

    assert result.policy is candidates[0]
    assert result.candidate_values == pytest.approx([0.0, 0.0, 0.0])


def test_solve_vlearning_empty_class(
    chain_dataset_factory, one_hot_basis, uniform_propensity
):
    ds = chain_dataset_factory(n=5, T=5)
    with pytest.raises(ValueError):
        estimating.solve_vlearning(ds, [], one_hot_basis(5), 0.9, uniform_propensity)


def test_solve_vlearning_singular(one_hot_basis, uniform_propensity):
    # cell 2 is never visited, so its column of the system vanishes
    traj = pyregime.Trajectory([0.0, 1.0, 0.0, 1.0], [1, 0, 1], [0.0, 1.0, 0.0])
    ds = pyregime.OfflineDataset([traj], num_actions=2)

    with pytest.warns(pyregime.RegularizationWarning):
        result = estimating.solve_vlearning(
            ds, [pyregime.UniformPolicy(2)], one_hot_basis(3), 0.5, uniform_propensity
        )

    assert bool(torch.all(torch.isfinite(result.model.theta)))


def test_solve_vlearning_softmax_class(
    stochastic_chain, one_hot_basis, uniform_propensity
):
    gamma = 0.9
    ds = envs.generate_dataset(envs.ChainEnv(stochastic_chain), n=100, T=20, seed=2)
    policy_class = estimating.SoftmaxPolicyClass(
        one_hot_basis(5, 2), steps=(2.0, 1.0), num_sweeps=1
    )

    result = estimating.solve_vlearning(
        ds, policy_class, one_hot_basis(5), gamma, uniform_propensity
    )

    assert isinstance(result.policy, pyregime.SoftmaxPolicy)
    # the first candidate is the uniform policy
    assert result.value > result.candidate_values[0]


def test_SoftmaxPolicyClass_state_basis(one_hot_basis):
    with pytest.raises(ValueError):
        estimating.SoftmaxPolicyClass(one_hot_basis(5))
