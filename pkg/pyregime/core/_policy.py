from abc import abstractmethod
from typing import Any, Callable, Dict, Iterator, Optional, Tuple

import torch

from pyregime.meta import is_pmf
from pyregime.misc import as_tensor, get_generator

from ._basis import FeatureBasis, StateEnumeration, _as_state_batch
from ._math import argmax_lowest
from ._objects import ComplexObject

__all__ = [
    "StochasticPolicy",
    "UniformPolicy",
    "TabularPolicy",
    "FunctionPolicy",
    "GreedyPolicy",
    "EpsilonSoftPolicy",
    "SoftmaxPolicy",
]


class StochasticPolicy(ComplexObject):
    r"""Distribution :math:`\pi(\cdot | s)` over the finite action set given the state.

    Subclasses implement :meth:`probs`, which operates on batches of states.

    Args:
        num_actions: Size of the action set.
    """

    def __init__(self, num_actions: int) -> None:
        if num_actions < 1:
            raise ValueError(f"num_actions has to be positive, but got {num_actions}.")
        self.num_actions = num_actions

    @abstractmethod
    def probs(self, states: torch.Tensor) -> torch.Tensor:
        r"""
        Args:
            states: States of shape :math:`(N, p)`.

        Returns:
            Probabilities of shape :math:`(N, A)`.
        """
        pass

    def __call__(self, states: Any) -> torch.Tensor:
        single = as_tensor(states).dim() <= 1
        probs = self.probs(_as_state_batch(states))
        return probs.squeeze(0) if single else probs

    def prob(self, states: Any, actions: Any) -> torch.Tensor:
        r"""Probabilities :math:`\pi(a | s)` of the given actions."""
        probs = self.probs(_as_state_batch(states))
        actions = torch.as_tensor(actions, dtype=torch.long).flatten()
        return probs.gather(1, actions.unsqueeze(1)).squeeze(1)

    def sample(
        self, states: Any, generator: Optional[torch.Generator] = None
    ) -> torch.Tensor:
        probs = self.probs(_as_state_batch(states))
        return torch.multinomial(
            probs.clamp_min(0.0), 1, generator=get_generator(generator)
        ).squeeze(1)

    def greedy_actions(self, states: Any) -> torch.Tensor:
        return argmax_lowest(self.probs(_as_state_batch(states)))

    def table(self, enumeration: StateEnumeration) -> torch.Tensor:
        r"""Probabilities of all enumerated states, shape :math:`(S, A)`."""
        return self.probs(enumeration.states)

    def _properties(self) -> Dict[str, Any]:
        dct = super()._properties()
        dct["num_actions"] = self.num_actions
        return dct


class UniformPolicy(StochasticPolicy):
    def probs(self, states: torch.Tensor) -> torch.Tensor:
        return torch.full(
            (states.size(0), self.num_actions),
            1.0 / self.num_actions,
            dtype=torch.float64,
        )


class TabularPolicy(StochasticPolicy):
    r"""Policy given by a table of probabilities over enumerated states.

    Args:
        table: Probabilities of shape :math:`(S, A)`. Each row has to be a pmf.
        enumeration: Map from states to rows. If omitted, the states :math:`0, \dots,
            S - 1` are used.
    """

    def __init__(
        self, table: Any, enumeration: Optional[StateEnumeration] = None
    ) -> None:
        table = as_tensor(table)
        if table.dim() != 2 or not is_pmf(table):
            raise ValueError("Every row of the policy table has to be a pmf.")
        super().__init__(int(table.size(1)))
        if enumeration is None:
            enumeration = StateEnumeration.range(int(table.size(0)))
        self._table = table
        self.enumeration = enumeration

    @classmethod
    def deterministic(
        cls,
        actions: Any,
        num_actions: int,
        enumeration: Optional[StateEnumeration] = None,
    ) -> "TabularPolicy":
        actions = torch.as_tensor(actions, dtype=torch.long)
        table = torch.nn.functional.one_hot(actions, num_actions).to(torch.float64)
        return cls(table, enumeration=enumeration)

    def probs(self, states: torch.Tensor) -> torch.Tensor:
        return self._table[self.enumeration.cells(states)]


class FunctionPolicy(StochasticPolicy):
    r"""Wraps a callable that maps a batch of states to probabilities."""

    def __init__(
        self, fn: Callable[[torch.Tensor], torch.Tensor], num_actions: int
    ) -> None:
        super().__init__(num_actions)
        self.fn = fn

    def probs(self, states: torch.Tensor) -> torch.Tensor:
        return as_tensor(self.fn(states))


class GreedyPolicy(StochasticPolicy):
    r"""Deterministic policy :math:`\operatorname{argmax}_a Q(s, a)` with lowest-index
    tie-break.

    Args:
        q_fn: Callable mapping states of shape :math:`(N, p)` to action values of shape
            :math:`(N, A)`.
        num_actions: Size of the action set.
    """

    def __init__(
        self, q_fn: Callable[[torch.Tensor], torch.Tensor], num_actions: int
    ) -> None:
        super().__init__(num_actions)
        self.q_fn = q_fn

    def probs(self, states: torch.Tensor) -> torch.Tensor:
        actions = argmax_lowest(self.q_fn(states))
        return torch.nn.functional.one_hot(actions, self.num_actions).to(torch.float64)


class EpsilonSoftPolicy(StochasticPolicy):
    r"""Mixture :math:`(1 - \epsilon) \pi + \epsilon / A`, i.e. the base policy with
    probability :math:`1 - \epsilon` and a uniformly random action otherwise.
    """

    def __init__(self, base: StochasticPolicy, epsilon: float) -> None:
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError(f"epsilon has to be in [0, 1], but got {epsilon}.")
        super().__init__(base.num_actions)
        self.base = base
        self.epsilon = float(epsilon)

    def probs(self, states: torch.Tensor) -> torch.Tensor:
        if self.epsilon == 1.0:
            return UniformPolicy(self.num_actions).probs(states)
        base = self.base.probs(states)
        if self.epsilon == 0.0:
            return base
        return (1.0 - self.epsilon) * base + self.epsilon / self.num_actions

    def _properties(self) -> Dict[str, Any]:
        dct = super()._properties()
        dct["epsilon"] = self.epsilon
        return dct

    def _named_children(self) -> Iterator[Tuple[str, Any]]:
        yield from super()._named_children()
        yield "base", self.base


class SoftmaxPolicy(StochasticPolicy):
    r"""Softmax of linear action preferences :math:`\theta^\top \phi(s, a)`.

    Args:
        basis: State-action basis.
        theta: Preference weights. If omitted, zeros, i.e. the uniform policy.
    """

    def __init__(self, basis: FeatureBasis, theta: Optional[Any] = None) -> None:
        if basis.num_actions is None:
            raise ValueError("SoftmaxPolicy needs a state-action basis.")
        super().__init__(basis.num_actions)
        self.basis = basis
        self.theta = (
            torch.zeros(basis.num_features, dtype=torch.float64)
            if theta is None
            else as_tensor(theta).flatten()
        )

    def with_theta(self, theta: Any) -> "SoftmaxPolicy":
        return SoftmaxPolicy(self.basis, theta)

    def probs(self, states: torch.Tensor) -> torch.Tensor:
        preferences = self.basis.all_actions(states) @ self.theta
        return torch.softmax(preferences, dim=1)
