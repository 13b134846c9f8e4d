from typing import Any, Dict, List, NamedTuple, Optional

import torch

from pyregime.core import (
    FeatureBasis,
    FunctionPolicy,
    OfflineDataset,
    StochasticPolicy,
    UnderdeterminedError,
    argmax_lowest,
    validate_dataset,
)
from pyregime.misc import verify_discount

__all__ = [
    "history_features",
    "StageRule",
    "BackwardInductionResult",
    "backward_induction",
]


def history_features(
    states: torch.Tensor,
    actions: torch.Tensor,
    num_actions: int,
    state_basis: Optional[FeatureBasis] = None,
    window: Optional[int] = None,
) -> torch.Tensor:
    r"""Features of the histories :math:`(S^0, A^0, \dots, A^{t-1}, S^t)`.

    The last ``window`` states and the ``window - 1`` preceding actions (one-hot) are
    concatenated. Histories shorter than the window are zero padded at the front. If
    ``window`` is ``None``, the full history is used.

    Args:
        states: States of shape :math:`(N, t + 1, p)`.
        actions: Actions of shape :math:`(N, t)`.
        num_actions: Size of the action set.
        state_basis: Optional basis applied to every state before concatenation.
        window: Optional number of most recent states.

    Returns:
        Tensor of shape :math:`(N, d)`.
    """
    num_samples, num_states, _ = states.size()
    if window is None:
        window = num_states

    if state_basis is not None:
        mapped = state_basis(states.flatten(0, 1))
        states = mapped.reshape(num_samples, num_states, -1)
    action_features = torch.nn.functional.one_hot(actions, num_actions).to(
        torch.float64
    )

    recent_states = states[:, max(num_states - window, 0) :]
    recent_actions = action_features[:, max(num_states - window, 0) :]
    state_padding = window - recent_states.size(1)
    action_padding = (window - 1) - recent_actions.size(1)

    parts = []
    if state_padding > 0:
        padding = (num_samples, state_padding * states.size(2))
        parts.append(recent_states.new_zeros(padding))
    parts.append(recent_states.flatten(1))
    if action_padding > 0:
        padding = (num_samples, action_padding * num_actions)
        parts.append(recent_states.new_zeros(padding))
    parts.append(recent_actions.flatten(1))
    return torch.cat(parts, dim=1)


def _design(
    features: torch.Tensor, actions: torch.Tensor, num_actions: int
) -> torch.Tensor:
    # e_a ⊗ [1, h]
    features = torch.cat([torch.ones_like(features[:, :1]), features], dim=1)
    num_samples, num_features = features.size()
    design = features.new_zeros((num_samples, num_actions, num_features))
    design[torch.arange(num_samples), actions] = features
    return design.flatten(1)


class StageRule:
    r"""Fitted stage-``t`` regression :math:`\hat{Q}_t(h, a)` and the rule
    :math:`\hat{\pi}_t(h) = \operatorname{argmax}_a \hat{Q}_t(h, a)`.
    """

    def __init__(
        self,
        stage: int,
        theta: torch.Tensor,
        num_actions: int,
        state_basis: Optional[FeatureBasis] = None,
        window: Optional[int] = None,
    ) -> None:
        self.stage = stage
        self.theta = theta
        self.num_actions = num_actions
        self.state_basis = state_basis
        self.window = window

    def q_values(self, states: torch.Tensor, actions: torch.Tensor) -> torch.Tensor:
        r"""
        Args:
            states: History states of shape :math:`(N, t + 1, p)`.
            actions: History actions of shape :math:`(N, t)`.

        Returns:
            Tensor of shape :math:`(N, A)`.
        """
        features = history_features(
            states, actions, self.num_actions, self.state_basis, self.window
        )
        num_samples = features.size(0)
        qs = []
        for action in range(self.num_actions):
            design = _design(
                features,
                torch.full((num_samples,), action, dtype=torch.long),
                self.num_actions,
            )
            qs.append(design @ self.theta)
        return torch.stack(qs, dim=1)

    def recommend(self, states: torch.Tensor, actions: torch.Tensor) -> torch.Tensor:
        return argmax_lowest(self.q_values(states, actions))

    def to_dict(self) -> Dict[str, Any]:
        return {"stage": self.stage, "theta": self.theta.tolist()}

    def __repr__(self) -> str:
        return (
            f"{type(self).__name__}"
            f"(stage={self.stage}, num_parameters={self.theta.numel()})"
        )


class BackwardInductionResult(NamedTuple):
    rules: List[StageRule]

    def first_stage_policy(self) -> StochasticPolicy:
        r"""Policy of the first decision, whose history is the initial state only."""
        rule = self.rules[0]

        def probs(states: torch.Tensor) -> torch.Tensor:
            actions = rule.recommend(
                states.unsqueeze(1), torch.zeros((states.size(0), 0), dtype=torch.long)
            )
            return torch.nn.functional.one_hot(actions, rule.num_actions).to(
                torch.float64
            )

        return FunctionPolicy(probs, rule.num_actions)


def backward_induction(
    ds: OfflineDataset,
    horizon: Optional[int] = None,
    state_basis: Optional[FeatureBasis] = None,
    window: Optional[int] = None,
    gamma: float = 1.0,
) -> BackwardInductionResult:
    r"""Finite-horizon Q-learning by backward induction.

    Stage :math:`t = T - 1, \dots, 0` regresses the pseudo-outcome
    :math:`Y_t = R^t + \gamma \max_a \hat{Q}_{t+1}(H^{t+1}, a)` (with
    :math:`\hat{Q}_T \equiv 0`) by least squares on the design
    :math:`e_{A^t} \otimes (1, h(H^t))`, where :math:`h` are the
    :func:`history_features`.

    Args:
        ds: Dataset whose trajectories all have ``horizon`` decision points.
        horizon: Number of decision points. Inferred from the data if omitted.
        state_basis: Optional basis applied to every state of the history.
        window: Optional number of most recent states in the history features.
        gamma: Discount factor. Defaults to ``1.0``.

    Raises:
        UnderdeterminedError: If a stage regression has fewer observations than
            parameters.
    """
    gamma = verify_discount(gamma, finite_horizon=True)
    validate_dataset(ds, warn=False)
    if horizon is None:
        horizon = ds[0].num_stages
    if any(traj.num_stages != horizon for traj in ds):
        msg = f"All trajectories need exactly {horizon} decision points."
        raise ValueError(msg)

    states = torch.stack([traj.states for traj in ds])
    actions = torch.stack([traj.actions for traj in ds])
    rewards = torch.stack([traj.rewards for traj in ds])
    num_actions = ds.num_actions
    num_samples = len(ds)

    rules: List[StageRule] = []
    continuation = torch.zeros(num_samples, dtype=torch.float64)
    for stage in reversed(range(horizon)):
        features = history_features(
            states[:, : stage + 1], actions[:, :stage], num_actions, state_basis, window
        )
        design = _design(features, actions[:, stage], num_actions)
        if design.size(0) < design.size(1):
            msg = (
                f"underdetermined stage regression at stage {stage}: "
                f"{design.size(0)} observations for {design.size(1)} parameters."
            )
            raise UnderdeterminedError(msg)

        outcome = rewards[:, stage] + gamma * continuation
        theta = torch.linalg.lstsq(
            design, outcome.unsqueeze(1), driver="gelsd"
        ).solution
        rule = StageRule(stage, theta.squeeze(1), num_actions, state_basis, window)
        rules.insert(0, rule)

        qs = rule.q_values(states[:, : stage + 1], actions[:, :stage])
        continuation = torch.max(qs, dim=1).values

    return BackwardInductionResult(rules)
