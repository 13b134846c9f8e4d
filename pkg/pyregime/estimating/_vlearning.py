import warnings
from dataclasses import dataclass
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import torch

from pyregime.core import (
    ComplexObject,
    FeatureBasis,
    LinearFunctional,
    OfflineDataset,
    RegularizationWarning,
    SoftmaxPolicy,
    StochasticPolicy,
    TransitionBatch,
    basis_from_dict,
)
from pyregime.misc import verify_discount
from pyregime.optim import OptimProgressBar

__all__ = [
    "VLearnModel",
    "vlearn_residual",
    "SoftmaxPolicyClass",
    "VLearningConfig",
    "VLearningResult",
    "solve_vlearning",
]


class VLearnModel(LinearFunctional):
    r"""Linear state value model :math:`V_\theta^\pi(s) = \theta^\top \phi(s)` of a
    fixed policy.
    """

    def __init__(
        self, basis: FeatureBasis, gamma: float, theta: Optional[Any] = None
    ) -> None:
        if basis.is_state_action:
            raise ValueError("VLearnModel needs a state basis.")
        super().__init__(basis, theta)
        self.gamma = verify_discount(gamma)

    def with_theta(self, theta: Any) -> "VLearnModel":
        return VLearnModel(self.basis, self.gamma, theta)

    def to_dict(self) -> Dict[str, Any]:
        dct = super().to_dict()
        dct["gamma"] = self.gamma
        return dct

    @classmethod
    def from_dict(cls, dct: Dict[str, Any]) -> "VLearnModel":
        return cls(basis_from_dict(dct["basis"]), dct["gamma"], dct["theta"])


def _weights(
    policy: StochasticPolicy, propensity: StochasticPolicy, batch: TransitionBatch
) -> torch.Tensor:
    behavior = propensity.prob(batch.states, batch.actions)
    if bool(torch.any(behavior <= 0.0)):
        idx = int(torch.nonzero(behavior <= 0.0)[0])
        msg = (
            f"positivity violated at (s,a) = ({batch.states[idx].tolist()}, "
            f"{int(batch.actions[idx])})"
        )
        raise ValueError(msg)
    return policy.prob(batch.states, batch.actions) / behavior


def _linear_system(
    policy: StochasticPolicy,
    basis: FeatureBasis,
    gamma: float,
    ds: OfflineDataset,
    propensity: StochasticPolicy,
) -> Tuple[torch.Tensor, torch.Tensor]:
    # vlearn_residual(theta) == matrix @ theta + offset
    batch = ds.transitions()
    weights = _weights(policy, propensity, batch)
    features = basis(batch.states)
    diff = gamma * basis(batch.next_states) - features
    weighted = features * weights.unsqueeze(1)
    num_trajectories = ds.num_trajectories
    return (
        weighted.t() @ diff / num_trajectories,
        weighted.t() @ batch.rewards / num_trajectories,
    )


def vlearn_residual(
    policy: StochasticPolicy,
    model: VLearnModel,
    ds: OfflineDataset,
    propensity: StochasticPolicy,
) -> torch.Tensor:
    r"""Estimating equation of V-learning

    .. math::

        \Lambda_n(\pi, \theta) = \frac{1}{n} \sum_{i=1}^n \sum_t
        \frac{\pi(A_i^t | S_i^t)}{\mu(A_i^t | S_i^t)}
        \left(R_i^t + \gamma V_\theta(S_i^{t+1}) - V_\theta(S_i^t)\right)
        \phi(S_i^t)

    normalized by the number of trajectories ``n``.
    """
    batch = ds.transitions()
    weights = _weights(policy, propensity, batch)
    td_errors = batch.rewards + model.gamma * model(batch.next_states) - model(
        batch.states
    )
    features = model.gradient(batch.states)
    return features.t() @ (weights * td_errors) / ds.num_trajectories


@dataclass(frozen=True)
class VLearningConfig:
    r"""
    Args:
        ridge: Ridge added to the normal equations if the inner system is singular.
        tie_tol: A candidate only replaces the incumbent if its value is larger by more
            than this.
    """
    ridge: float = 1e-8
    tie_tol: float = 1e-12


class SoftmaxPolicyClass(ComplexObject):
    r"""Family of :class:`~pyregime.SoftmaxPolicy` s on a state-action basis searched by
    coordinate ascent on the estimated value.

    Args:
        basis: State-action basis of the preferences.
        steps: Decreasing step lengths. Every step length is used for ``num_sweeps``
            sweeps over all coordinates.
        num_sweeps: Number of sweeps per step length.
        bound: Box constraint of the preference weights.
    """

    def __init__(
        self,
        basis: FeatureBasis,
        steps: Sequence[float] = (2.0, 1.0, 0.5, 0.25),
        num_sweeps: int = 2,
        bound: float = 10.0,
    ) -> None:
        if not basis.is_state_action:
            raise ValueError("SoftmaxPolicyClass needs a state-action basis.")
        self.basis = basis
        self.steps = tuple(steps)
        self.num_sweeps = num_sweeps
        self.bound = bound

    def initial(self) -> SoftmaxPolicy:
        return SoftmaxPolicy(self.basis)

    def _properties(self) -> Dict[str, Any]:
        dct = super()._properties()
        dct["steps"] = self.steps
        dct["num_sweeps"] = self.num_sweeps
        dct["bound"] = self.bound
        return dct


PolicyClass = Union[Sequence[StochasticPolicy], SoftmaxPolicyClass]


class VLearningResult(NamedTuple):
    model: VLearnModel
    policy: StochasticPolicy
    value: float
    candidate_values: List[float]


class _Evaluator:
    def __init__(
        self,
        ds: OfflineDataset,
        basis: FeatureBasis,
        gamma: float,
        propensity: StochasticPolicy,
        config: VLearningConfig,
    ) -> None:
        self.ds = ds
        self.basis = basis
        self.gamma = gamma
        self.propensity = propensity
        self.config = config
        self.initial_features = basis(ds.initial_states())

    def fit(self, policy: StochasticPolicy) -> Tuple[VLearnModel, float]:
        matrix, offset = _linear_system(
            policy, self.basis, self.gamma, self.ds, self.propensity
        )
        num_features = matrix.size(0)
        if int(torch.linalg.matrix_rank(matrix)) < num_features:
            msg = (
                f"The V-learning system of a {type(policy).__name__} is singular. "
                f"Falling back to ridge regularization with {self.config.ridge:.0e}."
            )
            warnings.warn(msg, RegularizationWarning)
            eye = torch.eye(num_features, dtype=matrix.dtype)
            theta = torch.linalg.solve(
                matrix.t() @ matrix + self.config.ridge * eye, -matrix.t() @ offset
            )
        else:
            theta = torch.linalg.solve(matrix, -offset)
        model = VLearnModel(self.basis, self.gamma, theta)
        value = float(torch.mean(self.initial_features @ theta))
        return model, value


def _search_finite(
    evaluator: _Evaluator,
    candidates: Sequence[StochasticPolicy],
    quiet: bool,
) -> VLearningResult:
    if not candidates:
        raise ValueError("The policy class has to contain at least one candidate.")
    best: Optional[Tuple[VLearnModel, StochasticPolicy, float]] = None
    values = []
    for policy in OptimProgressBar("V-learning", candidates, quiet=quiet):
        model, value = evaluator.fit(policy)
        values.append(value)
        if best is None or value > best[2] + evaluator.config.tie_tol:
            best = (model, policy, value)
    assert best is not None
    return VLearningResult(*best, values)


def _search_softmax(
    evaluator: _Evaluator, policy_class: SoftmaxPolicyClass, quiet: bool
) -> VLearningResult:
    policy = policy_class.initial()
    model, value = evaluator.fit(policy)
    values = [value]
    num_features = policy_class.basis.num_features
    total = len(policy_class.steps) * policy_class.num_sweeps * num_features
    with OptimProgressBar("V-learning", total, quiet=quiet) as progress_bar:
        for step in policy_class.steps:
            for _ in range(policy_class.num_sweeps):
                for idx in range(num_features):
                    for sign in (1.0, -1.0):
                        theta = policy.theta.clone()
                        theta[idx] = torch.clamp(
                            theta[idx] + sign * step,
                            -policy_class.bound,
                            policy_class.bound,
                        )
                        candidate = policy.with_theta(theta)
                        candidate_model, candidate_value = evaluator.fit(candidate)
                        values.append(candidate_value)
                        if candidate_value > value + evaluator.config.tie_tol:
                            policy, model, value = (
                                candidate,
                                candidate_model,
                                candidate_value,
                            )
                            break
                    progress_bar.update(loss=value)
    return VLearningResult(model, policy, value, values)


def solve_vlearning(
    ds: OfflineDataset,
    policy_class: PolicyClass,
    basis: FeatureBasis,
    gamma: float,
    propensity: StochasticPolicy,
    config: Optional[VLearningConfig] = None,
    quiet: bool = True,
) -> VLearningResult:
    r"""V-learning: for every candidate policy :math:`\pi` the linear estimating
    equation :math:`\Lambda_n(\pi, \theta) = 0` is solved for :math:`\theta`, and the
    candidate with the largest estimated value
    :math:`\hat{\mathbb{E}}[V_\theta(S^0)]` over the initial states of ``ds`` is
    selected.

    Args:
        ds: Offline dataset.
        policy_class: Finite sequence of candidates or a
            :class:`SoftmaxPolicyClass`. Ties are resolved in favor of the earlier
            candidate.
        basis: State basis of the value model.
        gamma: Discount factor.
        propensity: Behavior policy, e.g. from
            :func:`~pyregime.estimating.estimate_propensity`.
        config: Optional configuration.
        quiet: If ``True``, no progress bar is shown.
    """
    if config is None:
        config = VLearningConfig()
    gamma = verify_discount(gamma)
    evaluator = _Evaluator(ds, basis, gamma, propensity, config)
    if isinstance(policy_class, SoftmaxPolicyClass):
        return _search_softmax(evaluator, policy_class, quiet)
    return _search_finite(evaluator, policy_class, quiet)
