from abc import abstractmethod
from typing import Any, Dict, Optional, Tuple

import torch

from pyregime.core import ComplexObject, StochasticPolicy, UniformPolicy
from pyregime.misc import as_tensor, get_generator
from pyregime.tabular import TabularMDP

__all__ = ["Environment", "ChainEnv"]


class Environment(ComplexObject):
    r"""Generative model of a treatment process with a finite action set.

    All methods operate on batches: states are of shape :math:`(N, p)` and actions of
    shape :math:`(N,)`. Every draw is taken from the passed
    :class:`torch.Generator`, so identical seeds give identical rollouts.

    Args:
        state_dim: Dimension :math:`p` of the states.
        num_actions: Size of the action set.
    """

    def __init__(self, state_dim: int, num_actions: int) -> None:
        if state_dim < 1 or num_actions < 1:
            msg = (
                f"state_dim and num_actions have to be positive, "
                f"but got {state_dim} and {num_actions}."
            )
            raise ValueError(msg)
        self.state_dim = state_dim
        self.num_actions = num_actions

    @abstractmethod
    def initial_states(
        self, num: int, generator: Optional[torch.Generator] = None
    ) -> torch.Tensor:
        pass

    @abstractmethod
    def step(
        self,
        states: torch.Tensor,
        actions: torch.Tensor,
        generator: Optional[torch.Generator] = None,
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        r"""
        Args:
            states: Current states of shape :math:`(N, p)`.
            actions: Actions of shape :math:`(N,)`.
            generator: Source of randomness.

        Returns:
            Successor states of shape :math:`(N, p)` and rewards of shape
            :math:`(N,)`.
        """
        pass

    @property
    @abstractmethod
    def reward_bound(self) -> float:
        r"""Upper bound :math:`R_{\max}` of the absolute reward."""
        pass

    def default_behavior(self) -> StochasticPolicy:
        return UniformPolicy(self.num_actions)

    def _check_actions(self, actions: Any) -> torch.Tensor:
        actions = torch.as_tensor(actions, dtype=torch.long).flatten()
        if bool(torch.any(actions < 0)) or bool(torch.any(actions >= self.num_actions)):
            msg = f"Actions have to be in [0, {self.num_actions - 1}]."
            raise ValueError(msg)
        return actions

    def _properties(self) -> Dict[str, Any]:
        dct = super()._properties()
        dct["state_dim"] = self.state_dim
        dct["num_actions"] = self.num_actions
        return dct


class ChainEnv(Environment):
    r"""Samples from a :class:`~pyregime.tabular.TabularMDP`. The states are the
    enumerated state vectors of the MDP, by default the cell indices as floats.

    Args:
        mdp: Tabular MDP.
    """

    def __init__(self, mdp: TabularMDP) -> None:
        super().__init__(mdp.enumeration.state_dim, mdp.num_actions)
        self.mdp = mdp

    def initial_states(
        self, num: int, generator: Optional[torch.Generator] = None
    ) -> torch.Tensor:
        cells = torch.multinomial(
            self.mdp.initial_distribution,
            num,
            replacement=True,
            generator=get_generator(generator),
        )
        return self.mdp.enumeration.states[cells]

    def step(
        self,
        states: torch.Tensor,
        actions: torch.Tensor,
        generator: Optional[torch.Generator] = None,
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        cells = self.mdp.enumeration.cells(as_tensor(states))
        actions = self._check_actions(actions)
        probs = self.mdp.transition[cells, actions]
        next_cells = torch.multinomial(
            probs, 1, generator=get_generator(generator)
        ).squeeze(1)
        rewards = self.mdp.successor_reward()[cells, actions, next_cells]
        return self.mdp.enumeration.states[next_cells], rewards

    @property
    def reward_bound(self) -> float:
        return float(torch.max(torch.abs(self.mdp.reward)))

    def _properties(self) -> Dict[str, Any]:
        dct = super()._properties()
        dct["num_states"] = self.mdp.num_states
        return dct
