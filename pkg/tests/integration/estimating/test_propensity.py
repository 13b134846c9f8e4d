import pytest

import torch

import pyregime
from pyregime import envs, estimating, tabular

from tests.asserts import assert_close, assert_pmf


@pytest.fixture
def uniform_chain_dataset(chain_dataset_factory):
    return chain_dataset_factory(n=100, T=100, seed=0)


def test_apply_floor():
    probs = torch.tensor([[1.0, 0.0, 0.0]], dtype=torch.float64)
    actual = estimating.apply_floor(probs, 0.1)
    assert_close(actual, torch.tensor([[0.8, 0.1, 0.1]]))
    assert_pmf(actual)


def test_estimate_propensity_empirical_uniform(uniform_chain_dataset):
    propensity = estimating.estimate_propensity(uniform_chain_dataset)

    assert isinstance(propensity, estimating.EmpiricalPropensity)
    probs = propensity.table(pyregime.StateEnumeration.range(5))
    assert_pmf(probs)
    assert float(torch.max(torch.abs(probs - 0.5))) <= 0.05


@pytest.mark.filterwarnings("ignore::pyregime.PositivityWarning")
def test_estimate_propensity_deterministic_behavior(
    chain_dataset_factory, subtests
):
    behavior = pyregime.TabularPolicy.deterministic([0] * 5, num_actions=2)
    ds = chain_dataset_factory(n=10, T=5, behavior=behavior)

    for floor in (0.0, 0.01, 0.2):
        with subtests.test(floor=floor):
            propensity = estimating.estimate_propensity(ds, floor=floor)
            probs = propensity.probs(ds.transitions().states)
            assert_close(probs[:, 0], torch.full((len(probs),), 1.0 - floor))


def test_estimate_propensity_floor_warning(chain_dataset_factory):
    behavior = pyregime.TabularPolicy.deterministic([0] * 5, num_actions=2)
    ds = chain_dataset_factory(n=10, T=5, behavior=behavior)
    with pytest.warns(pyregime.PositivityWarning, match="floor"):
        estimating.estimate_propensity(ds, floor=0.01)


def test_estimate_propensity_floor_shrinks_all_rows():
    # a single state with action frequencies 0.75 and 0.25
    traj = pyregime.Trajectory(
        [0.0, 0.0, 0.0, 0.0, 0.0], [0, 0, 0, 1], [0.0, 0.0, 0.0, 0.0]
    )
    ds = pyregime.OfflineDataset([traj], num_actions=2)
    floor = 0.1

    propensity = estimating.estimate_propensity(ds, floor=floor)

    # 0.75 and 0.25 are above the floor but are shrunk nevertheless
    expected = torch.tensor([floor + (1.0 - 2 * floor) * 0.75, floor + 0.8 * 0.25])
    assert_close(propensity([0.0]), expected)
    assert_close(propensity([0.0]), torch.tensor([0.7, 0.3]))


def test_estimate_propensity_floor_range(uniform_chain_dataset):
    with pytest.raises(ValueError):
        estimating.estimate_propensity(uniform_chain_dataset, floor=0.5)


def test_estimate_propensity_unvisited():
    traj = pyregime.Trajectory([0.0, 1.0, 0.0], [0, 1], [0.0, 0.0])
    ds = pyregime.OfflineDataset([traj], num_actions=2)
    enumeration = pyregime.StateEnumeration.range(3)

    with pytest.warns(pyregime.PositivityWarning, match="never visited"):
        propensity = estimating.estimate_propensity(
            ds, floor=0.0, enumeration=enumeration
        )

    assert propensity.unvisited == (2,)
    assert_close(propensity([2.0]), torch.tensor([0.5, 0.5]))
    assert_close(propensity([0.0]), torch.tensor([1.0, 0.0]))


def test_estimate_propensity_known(uniform_chain_dataset):
    policy = pyregime.TabularPolicy([[0.3, 0.7]] * 5)
    propensity = estimating.estimate_propensity(
        uniform_chain_dataset, kind="known", policy=policy
    )

    assert isinstance(propensity, estimating.KnownPropensity)
    assert propensity.policy is policy
    states = uniform_chain_dataset.transitions().states
    assert_close(propensity.probs(states), policy.probs(states))


def test_estimate_propensity_known_needs_policy(uniform_chain_dataset):
    with pytest.raises(ValueError):
        estimating.estimate_propensity(uniform_chain_dataset, kind="known")


def test_estimate_propensity_unknown_kind(uniform_chain_dataset):
    with pytest.raises(ValueError):
        estimating.estimate_propensity(uniform_chain_dataset, kind="oracle")


def test_estimate_propensity_logistic(uniform_chain_dataset):
    propensity = estimating.estimate_propensity(
        uniform_chain_dataset, kind="logistic"
    )

    assert isinstance(propensity, estimating.LogisticPropensity)
    probs = propensity.table(pyregime.StateEnumeration.range(5))
    assert_pmf(probs)
    assert float(torch.max(torch.abs(probs - 0.5))) <= 0.05


def test_estimate_propensity_logistic_state_dependent():
    def fn(states):
        right = states[:, 0]
        return torch.stack((0.8 - 0.6 * right, 0.2 + 0.6 * right), dim=1)

    behavior = pyregime.FunctionPolicy(fn, 2)
    env = envs.ChainEnv(tabular.chain_mdp(num_states=2))
    ds = envs.generate_dataset(env, behavior=behavior, n=100, T=20, seed=0)
    basis = pyregime.PolynomialBasis(degree=1, state_dim=1)

    propensity = estimating.estimate_propensity(ds, kind="logistic", basis=basis)

    assert propensity.basis is basis
    probs = propensity.table(pyregime.StateEnumeration.range(2))
    desired = torch.tensor([[0.8, 0.2], [0.2, 0.8]])
    assert float(torch.max(torch.abs(probs - desired))) <= 0.05


def test_estimate_propensity_logistic_state_action_basis(uniform_chain_dataset):
    basis = pyregime.PolynomialBasis(degree=1, state_dim=1, num_actions=2)
    with pytest.raises(ValueError):
        estimating.estimate_propensity(
            uniform_chain_dataset, kind="logistic", basis=basis
        )
