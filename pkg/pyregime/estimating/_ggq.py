import warnings
from dataclasses import dataclass
from typing import Any, Dict, Iterator, NamedTuple, Optional, Tuple

import torch

from pyregime.core import (
    ComplexObject,
    ConvergenceWarning,
    FeatureBasis,
    GreedyPolicy,
    LinearFunctional,
    OfflineDataset,
    TransitionBatch,
    TransitionSample,
    argmax_lowest,
    basis_from_dict,
    validate_dataset,
)
from pyregime.misc import verify_discount
from pyregime.optim import OptimProgressBar

__all__ = [
    "GGQModel",
    "ggq_td_error",
    "ggq_residual",
    "GGQConfig",
    "GGQResult",
    "solve_ggq",
]


class GGQModel(ComplexObject):
    r"""Linear action value model :math:`Q_\theta(s, a) = \theta^\top \phi(s, a)`.

    Args:
        basis: State-action basis.
        gamma: Discount factor.
        theta: Weights. If omitted, zeros.
    """

    def __init__(
        self, basis: FeatureBasis, gamma: float, theta: Optional[Any] = None
    ) -> None:
        if not basis.is_state_action:
            raise ValueError("GGQModel needs a state-action basis.")
        self.functional = LinearFunctional(basis, theta)
        self.gamma = verify_discount(gamma)

    @property
    def basis(self) -> FeatureBasis:
        return self.functional.basis

    @property
    def theta(self) -> torch.Tensor:
        return self.functional.theta

    @property
    def num_actions(self) -> int:
        return self.basis.num_actions  # type: ignore[return-value]

    def with_theta(self, theta: Any) -> "GGQModel":
        return GGQModel(self.basis, self.gamma, theta)

    def __call__(self, states: Any, actions: Any) -> torch.Tensor:
        return self.functional(states, actions)

    def q_values(self, states: Any) -> torch.Tensor:
        return self.functional.q_values(states)

    def greedy_policy(self) -> GreedyPolicy:
        r"""Estimated optimal policy :math:`\operatorname{argmax}_a Q_\theta(s, a)`."""
        return GreedyPolicy(self.q_values, self.num_actions)

    def to_dict(self) -> Dict[str, Any]:
        dct = self.functional.to_dict()
        dct["gamma"] = self.gamma
        return dct

    @classmethod
    def from_dict(cls, dct: Dict[str, Any]) -> "GGQModel":
        return cls(basis_from_dict(dct["basis"]), dct["gamma"], dct["theta"])

    def _properties(self) -> Dict[str, Any]:
        dct = super()._properties()
        dct["gamma"] = self.gamma
        return dct

    def _named_children(self) -> Iterator[Tuple[str, Any]]:
        yield "basis", self.basis


def ggq_td_error(model: GGQModel, sample: TransitionSample) -> float:
    r"""Temporal difference error with greedy continuation

    .. math::

        \delta = r + \gamma \max_{a'} Q_\theta(s', a') - Q_\theta(s, a)
    """
    next_value = torch.max(model.q_values(sample.next_state))
    value = model(sample.state, torch.tensor([sample.action]))
    return float(sample.reward + model.gamma * next_value - value)


def _td_errors(model: GGQModel, batch: TransitionBatch) -> torch.Tensor:
    next_values = torch.max(model.q_values(batch.next_states), dim=1).values
    return (
        batch.rewards
        + model.gamma * next_values
        - model(batch.states, batch.actions)
    )


def ggq_residual(model: GGQModel, ds: OfflineDataset) -> torch.Tensor:
    r"""Sample estimating equation of greedy gradient Q-learning

    .. math::

        \frac{1}{m} \sum_{i} \sum_{t} \delta_i^{t+1}(\theta) \phi(S_i^t, A_i^t)

    normalized by the total number of transitions ``m``.
    """
    batch = ds.transitions()
    features = model.basis(batch.states, batch.actions)
    return features.t() @ _td_errors(model, batch) / len(batch)


@dataclass(frozen=True)
class GGQConfig:
    r"""
    Args:
        tol: Tolerance of the residual norm.
        max_iter: Maximum number of damped Newton steps.
        damping: Step length :math:`\eta` of the damped Newton iteration.
    """
    tol: float = 1e-8
    max_iter: int = 200
    damping: float = 0.5


class GGQResult(NamedTuple):
    model: GGQModel
    residual_norm: float
    num_iter: int
    converged: bool


def solve_ggq(
    ds: OfflineDataset,
    basis: FeatureBasis,
    gamma: float,
    config: Optional[GGQConfig] = None,
    theta: Optional[Any] = None,
    quiet: bool = True,
) -> GGQResult:
    r"""Solves the piecewise linear estimating equation of greedy gradient Q-learning.

    Each iteration fixes the greedy successor actions of the current iterate, which
    makes the residual linear with Jacobian :math:`J = \frac{1}{m} \Phi^\top (\gamma
    \Phi'_{a^*} - \Phi)`, and performs the damped Newton step
    :math:`\theta \leftarrow \theta - \eta J^{+} g(\theta)`. The pseudo inverse handles
    state-action pairs that are never observed.

    If the tolerance is not reached within ``config.max_iter`` steps, the iterate with
    the smallest residual norm is returned and a :class:`~pyregime.ConvergenceWarning`
    is emitted.
    """
    if config is None:
        config = GGQConfig()
    if not basis.is_state_action:
        basis = basis.with_actions(ds.num_actions)
    validate_dataset(ds)

    batch = ds.transitions()
    num_samples = len(batch)
    features = basis(batch.states, batch.actions)
    next_features = basis.all_actions(batch.next_states)

    model = GGQModel(basis, gamma, theta)

    def residual(theta: torch.Tensor) -> torch.Tensor:
        td_errors = _td_errors(model.with_theta(theta), batch)
        return features.t() @ td_errors / num_samples

    theta = model.theta
    grad = residual(theta)
    best_theta, best_norm = theta, float(torch.linalg.norm(grad))
    num_iter = 0
    with OptimProgressBar("GGQ", config.max_iter, quiet=quiet) as progress_bar:
        while best_norm > config.tol and num_iter < config.max_iter:
            next_q = next_features @ theta
            greedy = argmax_lowest(next_q)
            active = next_features[torch.arange(num_samples), greedy]
            jacobian = features.t() @ (gamma * active - features) / num_samples
            step = torch.linalg.lstsq(
                jacobian, grad.unsqueeze(1), driver="gelsd"
            ).solution.squeeze(1)
            theta = theta - config.damping * step
            grad = residual(theta)
            num_iter += 1

            norm = float(torch.linalg.norm(grad))
            if norm < best_norm:
                best_theta, best_norm = theta, norm
            progress_bar.update(loss=norm)

    converged = best_norm <= config.tol
    if not converged:
        msg = (
            f"GGQ did not reach a residual norm of {config.tol:.1e} in "
            f"{config.max_iter} iterations. The max operator makes the estimating "
            f"equation non-smooth; returning the best iterate with residual norm "
            f"{best_norm:.3e}."
        )
        warnings.warn(msg, ConvergenceWarning)

    return GGQResult(model.with_theta(best_theta), best_norm, num_iter, converged)

