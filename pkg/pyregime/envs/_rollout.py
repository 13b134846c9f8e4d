import math
from typing import Any, Callable, List, NamedTuple, Optional, Tuple, Union

import torch

from pyregime.core import (
    EpsilonSoftPolicy,
    LinearFunctional,
    OfflineDataset,
    StochasticPolicy,
    Trajectory,
    UniformPolicy,
)
from pyregime.misc import as_tensor, get_generator, verify_discount
from pyregime.optim import OptimProgressBar

from ._env import Environment

__all__ = [
    "default_behavior",
    "generate_dataset",
    "truncation_horizon",
    "MCEstimate",
    "mc_value",
    "two_sample_msbe",
    "OnlineStep",
    "OnlineResult",
    "epsilon_greedy_online",
]

TRUNCATION_TOLERANCE = 1e-4


def default_behavior(env: Environment) -> StochasticPolicy:
    return env.default_behavior()


def _rollout(
    env: Environment,
    policy: StochasticPolicy,
    states: torch.Tensor,
    num_steps: int,
    generator: torch.Generator,
    name: str,
    quiet: bool,
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    states_, actions_, rewards_ = [states], [], []
    for _ in OptimProgressBar(name, num_steps, quiet=quiet):
        actions = policy.sample(states, generator)
        states, rewards = env.step(states, actions, generator)
        states_.append(states)
        actions_.append(actions)
        rewards_.append(rewards)
    return torch.stack(states_), torch.stack(actions_), torch.stack(rewards_)


def generate_dataset(
    env: Environment,
    behavior: Optional[StochasticPolicy] = None,
    n: int = 15,
    T: int = 48,
    seed: Optional[Any] = None,
    quiet: bool = True,
) -> OfflineDataset:
    r"""Generates ``n`` independent trajectories of exactly ``T`` transitions.

    Args:
        env: Environment.
        behavior: Behavior policy. Defaults to ``env.default_behavior()``.
        n: Number of trajectories.
        T: Number of stages.
        seed: Seed or generator. Identical seeds give identical datasets.
        quiet: If ``False``, shows a progress bar over the stages.
    """
    if n < 1 or T < 1:
        raise ValueError(f"n and T have to be positive, but got {n} and {T}.")
    if behavior is None:
        behavior = env.default_behavior()
    generator = get_generator(seed)

    states = env.initial_states(n, generator)
    states, actions, rewards = _rollout(
        env, behavior, states, T, generator, "Data generation", quiet
    )
    trajectories = [
        Trajectory(states[:, idx], actions[:, idx], rewards[:, idx])
        for idx in range(n)
    ]
    return OfflineDataset(trajectories, num_actions=env.num_actions)


def truncation_horizon(gamma: float, reward_bound: float) -> int:
    r"""Smallest horizon :math:`H \geq 1` with
    :math:`\gamma^H R_{\max} < 10^{-4}`.
    """
    gamma = verify_discount(gamma)
    if reward_bound < TRUNCATION_TOLERANCE or gamma == 0.0:
        return 1
    horizon = 1
    while gamma ** horizon * reward_bound >= TRUNCATION_TOLERANCE:
        horizon += 1
    return horizon


class MCEstimate(NamedTuple):
    mean: float
    se: float


def mc_value(
    env: Environment,
    policy: StochasticPolicy,
    s0: Optional[Any],
    gamma: float,
    m: int = 1000,
    horizon: Optional[int] = None,
    seed: Optional[Any] = None,
    quiet: bool = True,
) -> MCEstimate:
    r"""Monte-Carlo estimate of the discounted value of ``policy``.

    All ``m`` replications are simulated as one batch.

    Args:
        env: Environment.
        policy: Evaluated policy.
        s0: Initial state. If ``None``, every replication draws its own initial state
            from the environment.
        gamma: Discount factor.
        m: Number of replications.
        horizon: Truncation horizon. Defaults to :func:`truncation_horizon`. With an
            explicit horizon ``gamma = 1`` is allowed.
        seed: Seed or generator.
        quiet: If ``False``, shows a progress bar over the stages.

    Returns:
        Mean of the ``m`` truncated discounted returns and its standard error.
    """
    if m < 1:
        raise ValueError(f"m has to be positive, but got {m}.")
    gamma = verify_discount(gamma, finite_horizon=horizon is not None)
    if horizon is None:
        horizon = truncation_horizon(gamma, env.reward_bound)
    generator = get_generator(seed)

    if s0 is None:
        states = env.initial_states(m, generator)
    else:
        s0 = as_tensor(s0).flatten()
        if s0.numel() != env.state_dim:
            msg = (
                f"The initial state has dimension {s0.numel()}, "
                f"but the environment {env.state_dim}."
            )
            raise ValueError(msg)
        states = s0.unsqueeze(0).repeat(m, 1)

    _, _, rewards = _rollout(
        env, policy, states, horizon, generator, "Monte-Carlo rollout", quiet
    )
    discounts = gamma ** torch.arange(horizon, dtype=torch.float64)
    returns = torch.sum(discounts.unsqueeze(1) * rewards, dim=0)

    mean = float(torch.mean(returns))
    se = float(torch.std(returns) / math.sqrt(m)) if m > 1 else 0.0
    return MCEstimate(mean, se)


def two_sample_msbe(
    env: Environment,
    model: LinearFunctional,
    states: Any,
    actions: Any,
    gamma: float,
    generator: Optional[torch.Generator] = None,
) -> float:
    r"""Unbiased estimate of the mean squared Bellman error of the value model at the
    given state-action pairs. For every pair two independent successors are drawn and
    the product of both temporal difference errors is averaged.
    """
    gamma = verify_discount(gamma)
    generator = get_generator(generator)
    states = as_tensor(states)
    if states.dim() == 1:
        states = states.unsqueeze(1)
    actions = torch.as_tensor(actions, dtype=torch.long).flatten()

    values = model(states)
    errors = []
    for _ in range(2):
        next_states, rewards = env.step(states, actions, generator)
        errors.append(rewards + gamma * model(next_states) - values)
    return float(torch.mean(errors[0] * errors[1]))


class OnlineStep(NamedTuple):
    epsilon: float
    action: int
    reward: float


class OnlineResult(NamedTuple):
    history: List[OnlineStep]
    policy: StochasticPolicy


Learner = Callable[[OfflineDataset], StochasticPolicy]
EpsilonSchedule = Union[float, Callable[[int], float]]


def epsilon_greedy_online(
    env: Environment,
    learner: Learner,
    schedule: EpsilonSchedule,
    steps: int,
    seed: Optional[Any] = None,
    refit_interval: int = 50,
    initial_policy: Optional[StochasticPolicy] = None,
    quiet: bool = True,
) -> OnlineResult:
    r"""Online treatment assignment. At step :math:`k` the current policy is followed
    with probability :math:`1 - \epsilon_k` and a uniformly random action is taken
    otherwise.

    The observed transitions form a single continuing trajectory. Every
    ``refit_interval`` steps the ``learner`` is refitted on all transitions so far and
    its output becomes the current policy.

    Args:
        env: Environment.
        learner: Maps the collected data to a new policy.
        schedule: Exploration rate :math:`\epsilon_k` as constant or callable of the
            step index.
        steps: Number of online steps.
        seed: Seed or generator.
        refit_interval: Number of steps between refits.
        initial_policy: Policy before the first refit. Defaults to uniform.
        quiet: If ``False``, shows a progress bar.

    Returns:
        Per-step history of (epsilon, action, reward) and the final policy.
    """
    if steps < 1 or refit_interval < 1:
        raise ValueError("steps and refit_interval have to be positive.")
    generator = get_generator(seed)
    policy = (
        UniformPolicy(env.num_actions) if initial_policy is None else initial_policy
    )

    def epsilon_at(step: int) -> float:
        epsilon = float(schedule(step) if callable(schedule) else schedule)
        if not 0.0 <= epsilon <= 1.0:
            msg = f"epsilon has to be in [0, 1], but got {epsilon} at step {step}."
            raise ValueError(msg)
        return epsilon

    def buffer() -> OfflineDataset:
        return OfflineDataset(
            [Trajectory(torch.cat(states), actions, rewards)],
            num_actions=env.num_actions,
        )

    state = env.initial_states(1, generator)
    states, actions, rewards = [state], [], []
    history = []
    with OptimProgressBar("Online", steps, quiet=quiet) as progress_bar:
        for step in range(steps):
            epsilon = epsilon_at(step)
            action = EpsilonSoftPolicy(policy, epsilon).sample(state, generator)
            state, reward = env.step(state, action, generator)

            states.append(state)
            actions.append(int(action))
            rewards.append(float(reward))
            history.append(OnlineStep(epsilon, int(action), float(reward)))

            if (step + 1) % refit_interval == 0:
                policy = learner(buffer())
            progress_bar.update()

    if steps % refit_interval:
        policy = learner(buffer())
    return OnlineResult(history, policy)
