import warnings
from dataclasses import dataclass, replace
from typing import Any, Optional, Sequence, Union

import torch

from pyregime.core import (
    ClippingWarning,
    DatasetError,
    DivergenceError,
    FeatureBasis,
    LinearFunctional,
    OfflineDataset,
    StochasticPolicy,
    TransitionBatch,
    TransitionSample,
)
from pyregime.misc import as_tensor, verify_discount
from pyregime.optim import OptimProgressBar, StepSchedule, as_step_schedule

__all__ = [
    "TDState",
    "td_error",
    "td0_update",
    "importance_ratio",
    "td0_offpolicy_update",
    "se_loss",
    "se_mc_loss",
    "one_step_targets",
    "run_td",
]

DIVERGENCE_THRESHOLD = 1e6


@dataclass(frozen=True)
class TDState:
    r"""State of a TD(0) stream.

    Args:
        model: Current linear value model :math:`V_\theta`.
        gamma: Discount factor.
        schedule: Step size schedule. A float is treated as constant step size.
        step: Number of updates performed so far.
        clip_events: Number of updates whose importance ratio hit the cap.
    """

    model: LinearFunctional
    gamma: float
    schedule: StepSchedule
    step: int = 0
    clip_events: int = 0

    @classmethod
    def initial(
        cls,
        basis: FeatureBasis,
        gamma: float,
        schedule: Optional[Union[float, StepSchedule]] = None,
        theta: Optional[Any] = None,
    ) -> "TDState":
        return cls(
            LinearFunctional(basis, theta),
            verify_discount(gamma),
            as_step_schedule(schedule),
        )

    @property
    def alpha(self) -> float:
        return self.schedule(self.step)

    @property
    def theta(self) -> torch.Tensor:
        return self.model.theta


def td_error(model: LinearFunctional, sample: TransitionSample, gamma: float) -> float:
    r"""Temporal difference error
    :math:`\delta = V_\theta(s) - [r + \gamma V_\theta(s')]`.
    """
    value = model(sample.state)
    next_value = model(sample.next_state)
    return float(value - sample.reward - gamma * next_value)


def _update(state: TDState, sample: TransitionSample, weight: float) -> TDState:
    model = state.model
    features = model.gradient(sample.state)
    delta = (
        features @ model.theta
        - sample.reward
        - state.gamma * (model.gradient(sample.next_state) @ model.theta)
    )
    theta = model.theta - (state.alpha * weight) * delta * features

    if float(torch.max(torch.abs(theta))) > DIVERGENCE_THRESHOLD:
        msg = (
            f"semi-gradient divergence after {state.step + 1} updates: "
            f"|theta|_inf exceeded {DIVERGENCE_THRESHOLD:.0e}. Off-policy TD with "
            f"function approximation can diverge; consider a smaller step size."
        )
        raise DivergenceError(msg)

    return replace(state, model=model.with_theta(theta), step=state.step + 1)


def td0_update(state: TDState, sample: TransitionSample) -> TDState:
    r""":math:`\theta' = \theta - \alpha \delta \phi(s)`."""
    return _update(state, sample, 1.0)


def _raw_ratio(
    target: StochasticPolicy, behavior: StochasticPolicy, state: Any, action: int
) -> float:
    behavior_prob = float(behavior.prob(state, action))
    if behavior_prob <= 0.0:
        msg = f"positivity violated at (s,a) = ({as_tensor(state).tolist()}, {action})"
        raise ValueError(msg)
    return float(target.prob(state, action)) / behavior_prob


def importance_ratio(
    target: StochasticPolicy,
    behavior: StochasticPolicy,
    state: Any,
    action: int,
    cap: float = 100.0,
) -> float:
    r""":math:`\min(\pi(a|s) / \pi_B(a|s), \text{cap})`.

    Raises:
        ValueError: If :math:`\pi_B(a|s) = 0`.
    """
    return min(_raw_ratio(target, behavior, state, action), cap)


def td0_offpolicy_update(
    state: TDState,
    sample: TransitionSample,
    target: StochasticPolicy,
    behavior: StochasticPolicy,
    cap: float = 100.0,
) -> TDState:
    r""":math:`\theta' = \theta - \alpha \rho \delta \phi(s)` with the importance ratio
    :math:`\rho = \pi(a|s) / \pi_B(a|s)` clipped at ``cap``.
    """
    ratio = _raw_ratio(target, behavior, sample.state, sample.action)
    clipped = ratio > cap
    state = _update(state, sample, min(ratio, cap))
    if clipped:
        state = replace(state, clip_events=state.clip_events + 1)
    return state


def se_loss(model: LinearFunctional, states: Any, targets: Any) -> float:
    r"""Squared error :math:`\frac{1}{m} \sum_i (V_\theta(s_i) - y_i)^2`."""
    targets = as_tensor(targets).flatten()
    if targets.numel() == 0:
        raise ValueError("se_loss needs at least one target.")
    return float(torch.mean((model(states).flatten() - targets) ** 2))


def se_mc_loss(
    model: LinearFunctional, state: Any, mc_returns: Sequence[float]
) -> float:
    r"""Squared error of :math:`V_\theta(s)` with respect to Monte-Carlo returns
    :math:`G_1, \dots, G_m` observed from :math:`s`.
    """
    returns = as_tensor(mc_returns).flatten()
    if returns.numel() == 0:
        raise ValueError("se_mc_loss needs at least one Monte-Carlo return.")
    return float(torch.mean((model(state) - returns) ** 2))


def one_step_targets(
    model: LinearFunctional, batch: TransitionBatch, gamma: float
) -> torch.Tensor:
    r"""One-step prediction targets :math:`r + \gamma V_\theta(s')`."""
    return batch.rewards + gamma * model(batch.next_states)


def run_td(
    ds: OfflineDataset,
    basis: FeatureBasis,
    gamma: float,
    schedule: Optional[Union[float, StepSchedule]] = None,
    target: Optional[StochasticPolicy] = None,
    behavior: Optional[StochasticPolicy] = None,
    epochs: int = 1,
    cap: float = 100.0,
    theta: Optional[Any] = None,
    quiet: bool = True,
) -> TDState:
    r"""Streams all transitions of ``ds`` (trajectory by trajectory, ``epochs`` times)
    through TD(0) updates.

    If ``target`` and ``behavior`` are given, the importance weighted off-policy update
    is used, otherwise the on-policy update.
    """
    if (target is None) != (behavior is None):
        raise ValueError("target and behavior have to be given together.")
    batch = ds.transitions()
    if len(batch) == 0:
        raise DatasetError("no rewards")

    state = TDState.initial(basis, gamma, schedule=schedule, theta=theta)
    total = epochs * len(batch)
    with OptimProgressBar("TD(0)", total, quiet=quiet) as progress_bar:
        for _ in range(epochs):
            for idx in range(len(batch)):
                sample = batch.sample(idx)
                if target is None:
                    state = td0_update(state, sample)
                else:
                    assert behavior is not None
                    state = td0_offpolicy_update(
                        state, sample, target, behavior, cap=cap
                    )
                progress_bar.update()

    if state.clip_events:
        msg = (
            f"The importance ratio was clipped at {cap} in {state.clip_events} of "
            f"{total} updates."
        )
        warnings.warn(msg, ClippingWarning)
    return state
