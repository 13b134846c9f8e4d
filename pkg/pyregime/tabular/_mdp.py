import warnings
from typing import Any, Dict, NamedTuple, Optional

import torch

from pyregime.core import (
    ComplexObject,
    DatasetError,
    OfflineDataset,
    PositivityWarning,
    StateEnumeration,
)
from pyregime.misc import as_tensor, get_generator

__all__ = ["TabularMDP", "random_mdp", "chain_mdp", "EmpiricalMDP", "empirical_mdp"]


class TabularMDP(ComplexObject):
    r"""Finite MDP with explicit transition probabilities
    :math:`P[s, a, s'] = \mathbb{P}(S^{t+1} = s' | S^t = s, A^t = a)` and rewards.

    Args:
        transition: Tensor of shape :math:`(S, A, S)`. Each row :math:`P[s, a, \cdot]`
            has to be a pmf within ``1e-12``.
        reward: Expected immediate rewards of shape :math:`(S, A)` or rewards of shape
            :math:`(S, A, S)` that depend on the successor state.
        initial_distribution: Optional distribution of :math:`S^0`. Defaults to
            uniform.
        enumeration: Optional states represented by the cells. Defaults to
            :math:`0.0, \dots, S - 1.0`.

    Raises:
        ValueError: If the transition rows are not stochastic or any reward is not
            finite.
    """

    def __init__(
        self,
        transition: Any,
        reward: Any,
        initial_distribution: Optional[Any] = None,
        enumeration: Optional[StateEnumeration] = None,
    ) -> None:
        transition = as_tensor(transition)
        reward = as_tensor(reward)
        if transition.dim() != 3 or transition.size(0) != transition.size(2):
            msg = (
                f"transition has to be of shape (S, A, S), "
                f"but got {tuple(transition.size())}."
            )
            raise ValueError(msg)
        num_states, num_actions, _ = transition.size()
        if bool(torch.any(transition < 0.0)) or bool(
            torch.any(torch.abs(transition.sum(2) - 1.0) > 1e-12)
        ):
            raise ValueError("non-stochastic transition rows")
        if tuple(reward.size()) not in (
            (num_states, num_actions),
            (num_states, num_actions, num_states),
        ):
            msg = (
                f"reward has to be of shape (S, A) or (S, A, S) with S={num_states} "
                f"and A={num_actions}, but got {tuple(reward.size())}."
            )
            raise ValueError(msg)
        if not bool(torch.all(torch.isfinite(reward))):
            raise ValueError("rewards have to be finite")

        if initial_distribution is None:
            initial_distribution = torch.full(
                (num_states,), 1.0 / num_states, dtype=torch.float64
            )
        self.transition = transition
        self.reward = reward
        self.initial_distribution = as_tensor(initial_distribution)
        if enumeration is None:
            enumeration = StateEnumeration.range(num_states)
        elif enumeration.num_states != num_states:
            msg = (
                f"The enumeration has {enumeration.num_states} states, "
                f"but the MDP has {num_states}."
            )
            raise ValueError(msg)
        self._enumeration = enumeration

    @property
    def num_states(self) -> int:
        return int(self.transition.size(0))

    @property
    def num_actions(self) -> int:
        return int(self.transition.size(1))

    @property
    def enumeration(self) -> StateEnumeration:
        return self._enumeration

    def expected_reward(self) -> torch.Tensor:
        r"""Expected immediate reward :math:`\bar{r}(s, a)` of shape :math:`(S, A)`."""
        if self.reward.dim() == 2:
            return self.reward
        return torch.sum(self.transition * self.reward, dim=2)

    def successor_reward(self) -> torch.Tensor:
        r"""Rewards of shape :math:`(S, A, S)`, broadcasting :math:`(S, A)` inputs."""
        if self.reward.dim() == 3:
            return self.reward
        return self.reward.unsqueeze(2).expand_as(self.transition)

    def scale_rewards(self, factor: float) -> "TabularMDP":
        return TabularMDP(
            self.transition,
            self.reward * factor,
            self.initial_distribution,
            enumeration=self._enumeration,
        )

    def _properties(self) -> Dict[str, Any]:
        dct = super()._properties()
        dct["num_states"] = self.num_states
        dct["num_actions"] = self.num_actions
        return dct


def random_mdp(
    num_states: int,
    num_actions: int,
    seed: Optional[Any] = None,
    successor_rewards: bool = False,
) -> TabularMDP:
    r"""Random MDP with :math:`\operatorname{Dirichlet}(1)` transition rows and
    rewards drawn uniformly from :math:`[0, 1)`.
    """
    generator = get_generator(seed)
    exponentials = -torch.log(
        torch.rand(
            (num_states, num_actions, num_states),
            generator=generator,
            dtype=torch.float64,
        )
    )
    transition = exponentials / exponentials.sum(dim=2, keepdim=True)
    reward_size = (
        (num_states, num_actions, num_states)
        if successor_rewards
        else (num_states, num_actions)
    )
    reward = torch.rand(reward_size, generator=generator, dtype=torch.float64)
    return TabularMDP(transition, reward)


def chain_mdp(
    num_states: int = 5,
    success: float = 0.9,
    reset: float = 0.0,
    goal_reward: float = 1.0,
    start_reward: float = 0.0,
) -> TabularMDP:
    r"""Chain of ``num_states`` cells with the actions ``0`` (left) and ``1`` (right).

    The intended move succeeds with probability ``success`` and the subject stays put
    otherwise. Independently, with probability ``reset`` the next cell is drawn
    uniformly. Choosing *right* in the last cell pays ``goal_reward``, choosing *left*
    in the first cell pays ``start_reward``.
    """
    if not (0.0 <= success <= 1.0 and 0.0 <= reset <= 1.0):
        raise ValueError("success and reset have to be probabilities.")
    transition = torch.zeros((num_states, 2, num_states), dtype=torch.float64)
    for state in range(num_states):
        for action, step in enumerate((-1, 1)):
            target = min(max(state + step, 0), num_states - 1)
            transition[state, action, target] += success
            transition[state, action, state] += 1.0 - success
    transition = (1.0 - reset) * transition + reset / num_states
    # renormalize to remove rounding drift
    transition = transition / transition.sum(dim=2, keepdim=True)

    reward = torch.zeros((num_states, 2), dtype=torch.float64)
    reward[-1, 1] = goal_reward
    reward[0, 0] = start_reward
    return TabularMDP(transition, reward)


class EmpiricalMDP(NamedTuple):
    mdp: TabularMDP
    visits: torch.Tensor

    @property
    def unvisited(self) -> torch.Tensor:
        r"""Mask of the state-action pairs without observed transitions."""
        return self.visits == 0


def empirical_mdp(
    ds: OfflineDataset,
    enumeration: Optional[StateEnumeration] = None,
    warn: bool = True,
) -> EmpiricalMDP:
    r"""Maximum likelihood tabular model of a dataset.

    State-action pairs that are never observed get a pessimistic model: the subject
    stays put and receives the smallest observed reward.

    Args:
        ds: Offline dataset.
        enumeration: State enumeration. Defaults to the unique states and successor
            states of ``ds``.
        warn: If ``True``, a :class:`~pyregime.PositivityWarning` is emitted if any
            state-action pair is never observed.
    """
    batch = ds.transitions()
    if len(batch) == 0:
        raise DatasetError("no rewards")
    if enumeration is None:
        enumeration = StateEnumeration.from_states(
            torch.cat((batch.states, batch.next_states))
        )
    num_states = enumeration.num_states
    num_actions = ds.num_actions
    cells = enumeration.cells(batch.states)
    next_cells = enumeration.cells(batch.next_states)

    counts = torch.zeros((num_states, num_actions, num_states), dtype=torch.float64)
    counts.index_put_(
        (cells, batch.actions, next_cells),
        torch.ones(len(batch), dtype=torch.float64),
        accumulate=True,
    )
    reward_sums = torch.zeros((num_states, num_actions), dtype=torch.float64)
    reward_sums.index_put_((cells, batch.actions), batch.rewards, accumulate=True)

    visits = counts.sum(2)
    unvisited = visits == 0
    self_loops = torch.eye(num_states, dtype=torch.float64).unsqueeze(1)
    transition = torch.where(
        unvisited.unsqueeze(2),
        self_loops.expand_as(counts),
        counts / visits.clamp_min(1.0).unsqueeze(2),
    )
    reward = torch.where(
        unvisited,
        torch.full_like(reward_sums, float(batch.rewards.min())),
        reward_sums / visits.clamp_min(1.0),
    )

    if warn and bool(torch.any(unvisited)):
        num_unvisited = int(unvisited.sum())
        msg = (
            f"positivity: {num_unvisited} of {num_states * num_actions} state-action "
            f"pairs are never observed and are modeled pessimistically"
        )
        warnings.warn(msg, PositivityWarning)

    mdp = TabularMDP(transition, reward, enumeration=enumeration)
    return EmpiricalMDP(mdp, visits.to(torch.long))
