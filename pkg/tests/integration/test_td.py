import pytest

import torch

import pyregime
from pyregime import tabular, td
from pyregime.core import TransitionSample

from tests.asserts import assert_close


def make_sample(state, reward, next_state, action=0):
    return TransitionSample(
        torch.tensor([float(state)], dtype=torch.float64),
        action,
        float(reward),
        torch.tensor([float(next_state)], dtype=torch.float64),
    )


def self_loop_dataset(reward, num_stages):
    traj = pyregime.Trajectory(
        torch.zeros(num_stages + 1),
        torch.zeros(num_stages, dtype=torch.long),
        torch.full((num_stages,), float(reward)),
    )
    return pyregime.OfflineDataset([traj], num_actions=1)


@pytest.fixture
def one_state_basis(one_hot_basis):
    return one_hot_basis(1)


def test_td_error_zero(one_state_basis):
    model = pyregime.LinearFunctional(one_state_basis)
    assert td.td_error(model, make_sample(0, 0.0, 0), gamma=0.9) == 0.0


def test_td_error_reward_only(one_state_basis):
    model = pyregime.LinearFunctional(one_state_basis)
    assert td.td_error(model, make_sample(0, 1.0, 0), gamma=0.9) == pytest.approx(-1.0)


def test_td_error(one_hot_basis):
    model = pyregime.LinearFunctional(one_hot_basis(2), [2.0, 1.0])
    actual = td.td_error(model, make_sample(0, 0.5, 1), gamma=0.9)
    assert actual == pytest.approx(0.6)


def test_TDState_initial(one_hot_basis):
    state = td.TDState.initial(one_hot_basis(3), gamma=0.5, schedule=0.2)
    assert_close(state.theta, torch.zeros(3))
    assert state.alpha == pytest.approx(0.2)
    assert state.step == 0


def test_TDState_initial_gamma(one_state_basis):
    with pytest.raises(ValueError):
        td.TDState.initial(one_state_basis, gamma=1.0)


def test_td0_update(one_state_basis):
    state = td.TDState.initial(one_state_basis, gamma=0.9, schedule=0.1)
    state = td.td0_update(state, make_sample(0, 1.0, 0))
    assert_close(state.theta, torch.tensor([0.1]))
    assert state.step == 1


def test_td0_update_fixed_point(one_hot_basis):
    state = td.TDState.initial(
        one_hot_basis(2), gamma=0.9, schedule=0.1, theta=[2.0, 1.0]
    )
    # delta = 2 - 1.1 - 0.9 * 1 = 0
    updated = td.td0_update(state, make_sample(0, 1.1, 1))
    assert_close(updated.theta, state.theta)


def test_td0_update_self_loop_convergence(self_loop_mdp, one_state_basis):
    reward, gamma = 2.0, 0.9
    ds = self_loop_dataset(reward, 500)

    state = td.run_td(ds, one_state_basis, gamma, schedule=0.5)

    desired = tabular.policy_evaluation(
        self_loop_mdp(reward), pyregime.UniformPolicy(1), gamma
    )
    assert_close(desired, torch.tensor([reward / (1.0 - gamma)]))
    assert_close(state.theta, desired, atol=1e-3, rtol=0.0)


def test_importance_ratio():
    target = pyregime.TabularPolicy([[0.8, 0.2]])
    behavior = pyregime.TabularPolicy([[0.2, 0.8]])
    assert td.importance_ratio(target, behavior, [0.0], 0) == pytest.approx(4.0)
    assert td.importance_ratio(target, behavior, [0.0], 1) == pytest.approx(0.25)


def test_importance_ratio_on_policy(subtests):
    policy = pyregime.TabularPolicy([[0.3, 0.7], [0.5, 0.5]])
    for state in (0.0, 1.0):
        for action in (0, 1):
            with subtests.test(state=state, action=action):
                ratio = td.importance_ratio(policy, policy, [state], action)
                assert ratio == pytest.approx(1.0)


def test_importance_ratio_zero_target():
    target = pyregime.TabularPolicy([[0.0, 1.0]])
    behavior = pyregime.UniformPolicy(2)
    assert td.importance_ratio(target, behavior, [0.0], 0) == 0.0


def test_importance_ratio_cap():
    target = pyregime.TabularPolicy([[1.0, 0.0]])
    behavior = pyregime.TabularPolicy([[0.01, 0.99]])
    assert td.importance_ratio(target, behavior, [0.0], 0, cap=10.0) == 10.0


def test_importance_ratio_positivity():
    target = pyregime.UniformPolicy(2)
    behavior = pyregime.TabularPolicy([[0.0, 1.0]])
    with pytest.raises(ValueError, match="positivity violated"):
        td.importance_ratio(target, behavior, [0.0], 0)


def test_td0_offpolicy_update_on_policy(one_hot_basis):
    policy = pyregime.UniformPolicy(2)
    state = td.TDState.initial(one_hot_basis(2), gamma=0.9, schedule=0.1)
    sample = make_sample(0, 1.0, 1, action=1)

    actual = td.td0_offpolicy_update(state, sample, policy, policy)
    desired = td.td0_update(state, sample)
    assert_close(actual.theta, desired.theta)


def test_td0_offpolicy_update_zero_weight(one_hot_basis):
    target = pyregime.TabularPolicy([[1.0, 0.0], [1.0, 0.0]])
    behavior = pyregime.UniformPolicy(2)
    state = td.TDState.initial(
        one_hot_basis(2), gamma=0.9, schedule=0.1, theta=[0.5, -0.5]
    )

    updated = td.td0_offpolicy_update(
        state, make_sample(0, 1.0, 1, action=1), target, behavior
    )
    assert_close(updated.theta, state.theta)


def test_td0_offpolicy_update_clip_events(one_state_basis):
    target = pyregime.TabularPolicy([[1.0, 0.0]])
    behavior = pyregime.TabularPolicy([[0.005, 0.995]])
    state = td.TDState.initial(one_state_basis, gamma=0.5, schedule=0.001)

    state = td.td0_offpolicy_update(
        state, make_sample(0, 1.0, 0), target, behavior, cap=100.0
    )
    assert state.clip_events == 1
    # the clipped weight 100 instead of the raw ratio 200 enters the update
    assert_close(state.theta, torch.tensor([0.1]))


def test_run_td_clipping_warning(one_state_basis):
    target = pyregime.TabularPolicy([[1.0, 0.0]])
    behavior = pyregime.TabularPolicy([[0.005, 0.995]])
    ds = self_loop_dataset(1.0, 3)
    with pytest.warns(pyregime.ClippingWarning):
        td.run_td(
            ds,
            one_state_basis,
            gamma=0.5,
            schedule=1e-4,
            target=target,
            behavior=behavior,
            cap=100.0,
        )


def test_run_td_divergence(one_state_basis):
    ds = self_loop_dataset(1.0, 50)
    with pytest.raises(pyregime.DivergenceError):
        td.run_td(ds, one_state_basis, gamma=0.9, schedule=100.0)


def test_run_td_policies_together(one_state_basis):
    ds = self_loop_dataset(1.0, 3)
    with pytest.raises(ValueError):
        td.run_td(
            ds, one_state_basis, gamma=0.9, target=pyregime.UniformPolicy(1)
        )


def test_run_td_epochs(one_state_basis):
    ds = self_loop_dataset(1.0, 4)
    state = td.run_td(ds, one_state_basis, gamma=0.5, schedule=0.1, epochs=3)
    assert state.step == 12


def test_se_mc_loss(subtests, one_state_basis):
    for value, returns, desired in (
        (3.0, [3.0, 3.0], 0.0),
        (0.0, [1.0, -1.0], 1.0),
        (1.0, [1.0, 1.0, 1.0], 0.0),
    ):
        with subtests.test(value=value, returns=returns):
            model = pyregime.LinearFunctional(one_state_basis, [value])
            actual = td.se_mc_loss(model, [0.0], returns)
            assert actual == pytest.approx(desired)


def test_se_mc_loss_empty(one_state_basis):
    model = pyregime.LinearFunctional(one_state_basis)
    with pytest.raises(ValueError):
        td.se_mc_loss(model, [0.0], [])


def test_se_loss(one_hot_basis):
    model = pyregime.LinearFunctional(one_hot_basis(2), [1.0, 2.0])
    states = torch.tensor([[0.0], [1.0]])
    assert td.se_loss(model, states, [0.0, 2.0]) == pytest.approx(0.5)


def test_one_step_targets(one_hot_basis):
    model = pyregime.LinearFunctional(one_hot_basis(2), [1.0, 2.0])
    traj = pyregime.Trajectory([0.0, 1.0, 0.0], [0, 0], [1.0, 0.0])
    batch = pyregime.OfflineDataset([traj]).transitions()

    actual = td.one_step_targets(model, batch, gamma=0.5)
    assert_close(actual, torch.tensor([2.0, 0.5]))
