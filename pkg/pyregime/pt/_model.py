from collections import OrderedDict
from typing import Any, Dict, Iterator, NamedTuple, Optional, Tuple, Union

import torch

from pyregime.core import (
    ComplexObject,
    FunctionPolicy,
    LinearFunctional,
    TransitionSample,
    argmax_lowest,
)
from pyregime.misc import as_tensor, verify_discount

from ._kernel import GaussianKernel
from ._proximity import ProximitySpec
from .functional import kkt_multipliers, proximal_bellman_value, sparse_policy

__all__ = [
    "PTModel",
    "pt_errors",
    "pt_error",
    "PTPrediction",
    "predict",
    "value_lower_bound",
]


class PTModel(ComplexObject):
    r"""Proximal temporal consistency model.

    It consists of the state values :math:`V_\lambda` and the action values
    :math:`Q_\lambda`. The sparse proximal policy :math:`\pi_\lambda` and the
    multipliers :math:`\Psi, \psi` are derived from :math:`Q_\lambda` on demand.

    Args:
        v_model: Linear state value model.
        q_model: Linear action value model on a state-action basis.
        gamma: Discount factor.
        proximity: Proximity configuration with a closed form policy.
        kernel: Optional fitted kernel that embeds the temporal consistency errors.
    """

    def __init__(
        self,
        v_model: LinearFunctional,
        q_model: LinearFunctional,
        gamma: float,
        proximity: ProximitySpec,
        kernel: Optional[GaussianKernel] = None,
    ) -> None:
        if v_model.basis.is_state_action:
            raise ValueError("v_model needs a state basis.")
        if not q_model.basis.is_state_action:
            raise ValueError("q_model needs a state-action basis.")
        if not proximity.has_closed_form:
            msg = (
                f"The proximity '{proximity.kind}' has no closed form policy and is "
                f"only available for evaluation."
            )
            raise ValueError(msg)
        self.v_model = v_model
        self.q_model = q_model
        self.gamma = verify_discount(gamma)
        self.proximity = proximity
        self.kernel = kernel

    @property
    def lam(self) -> float:
        return self.proximity.lam

    @property
    def num_actions(self) -> int:
        return self.q_model.basis.num_actions  # type: ignore[return-value]

    def values(self, states: Any) -> torch.Tensor:
        return self.v_model(states)

    def q_values(self, states: Any) -> torch.Tensor:
        return self.q_model.q_values(states)

    def probs(self, states: Any) -> torch.Tensor:
        return sparse_policy(self.q_values(states), self.lam)

    def multipliers(self, states: Any) -> Tuple[torch.Tensor, torch.Tensor]:
        return kkt_multipliers(self.q_values(states), self.lam)

    def proximal_values(self, states: Any) -> torch.Tensor:
        r""":math:`\mathcal{B}_\lambda V` computed from :math:`Q_\lambda`."""
        return proximal_bellman_value(self.q_values(states), self.lam)

    def policy(self) -> FunctionPolicy:
        return FunctionPolicy(self.probs, self.num_actions)

    def to_dict(self) -> Dict[str, Any]:
        return OrderedDict(
            [
                ("gamma", self.gamma),
                ("lambda", self.lam),
                ("v_model", self.v_model.to_dict()),
                ("q_model", self.q_model.to_dict()),
                ("kernel", None if self.kernel is None else self.kernel.to_dict()),
            ]
        )

    @classmethod
    def from_dict(cls, dct: Dict[str, Any]) -> "PTModel":
        kernel = dct.get("kernel")
        return cls(
            LinearFunctional.from_dict(dct["v_model"]),
            LinearFunctional.from_dict(dct["q_model"]),
            dct["gamma"],
            ProximitySpec(dct["lambda"]),
            kernel=None if kernel is None else GaussianKernel.from_dict(kernel),
        )

    def _properties(self) -> Dict[str, Any]:
        dct = super()._properties()
        dct["lam"] = self.lam
        dct["gamma"] = self.gamma
        return dct

    def _named_children(self) -> Iterator[Tuple[str, Any]]:
        yield "v_model", self.v_model
        yield "q_model", self.q_model


def pt_errors(
    q_values: torch.Tensor,
    actions: torch.Tensor,
    rewards: torch.Tensor,
    values: torch.Tensor,
    next_values: torch.Tensor,
    gamma: float,
    proximity: ProximitySpec,
    pi_probs: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    r"""Batched one-sample temporal consistency errors

    .. math::

        r + \gamma V_\lambda(s') + \lambda d'(\pi(a | s)) - \Psi(s) + \psi(a | s)
        - V_\lambda(s)

    where :math:`\Psi, \psi` are the multipliers of the sparse proximal policy of
    ``q_values`` and :math:`\pi(a | s)` defaults to it.
    """
    lam = proximity.lam
    state_multipliers, action_multipliers = kkt_multipliers(q_values, lam)
    index = actions.unsqueeze(1)
    if pi_probs is None:
        pi_probs = sparse_policy(q_values, lam).gather(1, index).squeeze(1)
    return (
        rewards
        + gamma * next_values
        + lam * proximity.marginal(pi_probs)
        - state_multipliers
        + action_multipliers.gather(1, index).squeeze(1)
        - values
    )


def pt_error(
    model: PTModel, sample: TransitionSample, pi_prob: Optional[float] = None
) -> float:
    r"""One-sample temporal consistency error of a single transition. See
    :func:`pt_errors`.

    Args:
        model: Proximal temporal consistency model.
        sample: Transition.
        pi_prob: Probability :math:`\pi(a | s)` of the observed action. Defaults to
            :math:`\pi_\lambda(a | s)` of ``model``.
    """
    if pi_prob is not None and not 0.0 <= pi_prob <= 1.0:
        raise ValueError(f"pi_prob has to be in [0, 1], but got {pi_prob}.")
    state = as_tensor(sample.state).flatten().unsqueeze(0)
    next_state = as_tensor(sample.next_state).flatten().unsqueeze(0)
    errors = pt_errors(
        model.q_values(state),
        torch.tensor([sample.action]),
        as_tensor([sample.reward]),
        model.values(state),
        model.values(next_state),
        model.gamma,
        model.proximity,
        pi_probs=None if pi_prob is None else as_tensor([pi_prob]),
    )
    return float(errors[0])


class PTPrediction(NamedTuple):
    probs: torch.Tensor
    recommended: Union[int, torch.Tensor]


def predict(model: PTModel, state: Any) -> PTPrediction:
    r"""Treatment probabilities :math:`\pi_\lambda(\cdot | s)` and the recommended
    treatment :math:`\operatorname{argmax}_a \pi_\lambda(a | s)` (lowest index on ties).

    A single state yields a probability vector and an ``int``, a batch of states a
    probability matrix and a tensor of actions.
    """
    state = as_tensor(state)
    single = state.dim() <= 1
    probs = model.probs(state.flatten().unsqueeze(0) if single else state)
    recommended = argmax_lowest(probs)
    if single:
        return PTPrediction(probs[0], int(recommended[0]))
    return PTPrediction(probs, recommended)


def value_lower_bound(model: PTModel, states: Any) -> torch.Tensor:
    r"""Lower bound :math:`\hat{V}_\lambda(s) - \lambda \phi(0) / (1 - \gamma)` of the
    unregularized value of the learned policy.
    """
    return model.values(states) - model.lam * model.proximity.phi_at_zero / (
        1.0 - model.gamma
    )
