import pytest

import torch

import pyregime
from pyregime import pt, tabular

from tests.asserts import assert_close, assert_pmf


def state(value):
    return torch.tensor([float(value)], dtype=torch.float64)


def expected_pt_error(model, mdp, s, a):
    rewards = mdp.successor_reward()
    return sum(
        float(mdp.transition[s, a, t])
        * pt.pt_error(
            model,
            pyregime.TransitionSample(state(s), a, float(rewards[s, a, t]), state(t)),
        )
        for t in range(mdp.num_states)
    )


def test_PTModel_basis_types(one_hot_basis):
    v_model = pyregime.LinearFunctional(one_hot_basis(3))
    q_model = pyregime.LinearFunctional(one_hot_basis(3, 2))
    proximity = pt.ProximitySpec(1.0)
    with pytest.raises(ValueError):
        pt.PTModel(q_model, q_model, 0.9, proximity)
    with pytest.raises(ValueError):
        pt.PTModel(v_model, v_model, 0.9, proximity)
    with pytest.raises(ValueError):
        pt.PTModel(v_model, q_model, 0.9, pt.ProximitySpec(1.0, kind="shannon"))


def test_PTModel_probs(oracle_model):
    model = oracle_model(tabular.random_mdp(4, 3, seed=0), 0.9, 0.5)
    states = pyregime.StateEnumeration.range(4).states
    assert_pmf(model.probs(states), atol=1e-12)
    assert_pmf(model.policy()(states), atol=1e-12)


def test_PTModel_proximal_values_fixed_point(oracle_model):
    model = oracle_model(tabular.random_mdp(4, 3, seed=1), 0.9, 0.5)
    states = pyregime.StateEnumeration.range(4).states
    actual = model.proximal_values(states)
    assert_close(actual, model.values(states), atol=1e-9, rtol=0.0)


def test_PTModel_dict(oracle_model):
    model = oracle_model(tabular.random_mdp(4, 3, seed=2), 0.8, 0.3)
    dct = model.to_dict()
    assert set(dct.keys()) == {"gamma", "lambda", "v_model", "q_model", "kernel"}
    restored = pt.PTModel.from_dict(dct)
    states = pyregime.StateEnumeration.range(4).states
    assert restored.lam == model.lam
    assert_close(restored.probs(states), model.probs(states))


def test_pt_error_vanishes_in_expectation(subtests, oracle_model):
    for seed in range(3):
        mdp = tabular.random_mdp(4, 3, seed=seed, successor_rewards=bool(seed % 2))
        model = oracle_model(mdp, 0.9, 0.5)
        for s in range(mdp.num_states):
            for a in range(mdp.num_actions):
                with subtests.test(seed=seed, state=s, action=a):
                    error = expected_pt_error(model, mdp, s, a)
                    assert error == pytest.approx(0.0, abs=1e-8)


def test_pt_error_value_perturbation(deterministic_chain, oracle_model):
    model = oracle_model(deterministic_chain, 0.9, 0.5)
    eps = 1e-2
    theta = model.v_model.theta.clone()
    theta[2] += eps
    perturbed = pt.PTModel(
        model.v_model.with_theta(theta), model.q_model, model.gamma, model.proximity
    )
    sample = pyregime.TransitionSample(state(2), 1, 0.0, state(3))
    actual = pt.pt_error(perturbed, sample) - pt.pt_error(model, sample)
    assert actual == pytest.approx(-eps, abs=1e-12)


def test_pt_error_pi_prob(deterministic_chain, oracle_model):
    model = oracle_model(deterministic_chain, 0.9, 0.5)
    sample = pyregime.TransitionSample(state(2), 1, 0.0, state(3))
    pi_prob = float(model.probs(state(2).unsqueeze(0))[0, 1])
    assert pt.pt_error(model, sample, pi_prob=pi_prob) == pytest.approx(
        pt.pt_error(model, sample)
    )
    # the sparse marginal is (1 - 2x) / 2
    actual = pt.pt_error(model, sample, pi_prob=0.0) - pt.pt_error(model, sample)
    assert actual == pytest.approx(model.lam * pi_prob, abs=1e-12)


def test_pt_error_invalid_pi_prob(deterministic_chain, oracle_model):
    model = oracle_model(deterministic_chain, 0.9, 0.5)
    sample = pyregime.TransitionSample(state(0), 0, 0.0, state(0))
    with pytest.raises(ValueError):
        pt.pt_error(model, sample, pi_prob=1.5)


def test_pt_errors_batched(oracle_model):
    mdp = tabular.random_mdp(3, 2, seed=4)
    model = oracle_model(mdp, 0.8, 1.0)
    states = torch.tensor([[0.0], [1.0], [2.0]], dtype=torch.float64)
    next_states = torch.tensor([[1.0], [2.0], [0.0]], dtype=torch.float64)
    actions = torch.tensor([0, 1, 1])
    rewards = torch.tensor([0.5, -1.0, 2.0], dtype=torch.float64)
    actual = pt.pt_errors(
        model.q_values(states),
        actions,
        rewards,
        model.values(states),
        model.values(next_states),
        model.gamma,
        model.proximity,
    )
    for idx in range(3):
        sample = pyregime.TransitionSample(
            states[idx], int(actions[idx]), float(rewards[idx]), next_states[idx]
        )
        assert float(actual[idx]) == pytest.approx(pt.pt_error(model, sample))


def test_predict_ties(one_hot_basis):
    model = pt.PTModel(
        pyregime.LinearFunctional(one_hot_basis(2)),
        pyregime.LinearFunctional(one_hot_basis(2, 3)),
        0.9,
        pt.ProximitySpec(0.5),
    )
    prediction = pt.predict(model, 1.0)
    assert_close(prediction.probs, torch.full((3,), 1.0 / 3.0))
    assert prediction.recommended == 0
    assert isinstance(prediction.recommended, int)


def test_predict_batch(deterministic_chain, oracle_model):
    model = oracle_model(deterministic_chain, 0.9, 0.1)
    states = pyregime.StateEnumeration.range(5).states
    prediction = pt.predict(model, states)
    assert prediction.probs.size() == (5, 2)
    assert prediction.recommended.tolist() == [1] * 5


def test_value_lower_bound(deterministic_chain, oracle_model):
    model = oracle_model(deterministic_chain, 0.9, 0.4)
    states = pyregime.StateEnumeration.range(5).states
    actual = pt.value_lower_bound(model, states)
    assert_close(actual, model.values(states) - 0.4 * 0.5 / 0.1)


def test_value_lower_bound_below_policy_value(oracle_model):
    mdp = tabular.random_mdp(4, 3, seed=5)
    gamma = 0.9
    model = oracle_model(mdp, gamma, 2.0)
    states = pyregime.StateEnumeration.range(4).states
    policy_values = tabular.policy_evaluation(mdp, model.probs(states), gamma)
    assert bool(torch.all(pt.value_lower_bound(model, states) <= policy_values + 1e-9))
