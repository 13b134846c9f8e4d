import warnings
from collections import OrderedDict
from typing import (
    Any,
    Dict,
    Iterator,
    List,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import torch

from pyregime.misc import as_tensor

from ._errors import DatasetError, PositivityWarning
from ._objects import ComplexObject

__all__ = [
    "TransitionSample",
    "TransitionBatch",
    "Trajectory",
    "OfflineDataset",
    "ValidationReport",
    "validate_dataset",
]


class TransitionSample(NamedTuple):
    state: torch.Tensor
    action: int
    reward: float
    next_state: torch.Tensor


class TransitionBatch(NamedTuple):
    r"""All transitions of a dataset stacked along the first dimension.

    ``trajectory_ids`` and ``stages`` locate every transition in its trajectory.
    """

    states: torch.Tensor
    actions: torch.Tensor
    rewards: torch.Tensor
    next_states: torch.Tensor
    trajectory_ids: torch.Tensor
    stages: torch.Tensor

    def __len__(self) -> int:  # type: ignore[override]
        return int(self.actions.numel())

    def sample(self, idx: int) -> TransitionSample:
        return TransitionSample(
            self.states[idx],
            int(self.actions[idx]),
            float(self.rewards[idx]),
            self.next_states[idx],
        )


class Trajectory(ComplexObject):
    r"""States :math:`S^0, \dots, S^T`, actions :math:`A^0, \dots, A^{T-1}` and rewards
    :math:`R^0, \dots, R^{T-1}` of a single subject. The reward at index ``t`` is earned
    moving from ``states[t]`` to ``states[t + 1]``.

    Args:
        states: States of shape :math:`(T + 1, p)`. A one dimensional input is treated
            as :math:`p = 1`.
        actions: Action indices of shape :math:`(T,)`.
        rewards: Rewards of shape :math:`(T,)`.

    .. note::

        The lengths are not checked here. Use :func:`validate_dataset` for that.
    """

    def __init__(self, states: Any, actions: Any, rewards: Any) -> None:
        states = as_tensor(states)
        if states.dim() == 1:
            states = states.unsqueeze(1)
        self._states = states
        self._actions = torch.as_tensor(actions, dtype=torch.long).flatten()
        self._rewards = as_tensor(rewards).flatten()

    @property
    def states(self) -> torch.Tensor:
        return self._states

    @property
    def actions(self) -> torch.Tensor:
        return self._actions

    @property
    def rewards(self) -> torch.Tensor:
        return self._rewards

    @property
    def num_stages(self) -> int:
        return int(self._actions.numel())

    @property
    def state_dim(self) -> int:
        return int(self._states.size(1))

    def __len__(self) -> int:
        return self.num_stages

    def samples(self) -> Iterator[TransitionSample]:
        for t in range(self.num_stages):
            yield TransitionSample(
                self.states[t],
                int(self.actions[t]),
                float(self.rewards[t]),
                self.states[t + 1],
            )

    def _properties(self) -> Dict[str, Any]:
        dct = super()._properties()
        dct["num_stages"] = self.num_stages
        dct["state_dim"] = self.state_dim
        return dct


class OfflineDataset(ComplexObject):
    r"""Container of ``n`` independent trajectories.

    Args:
        trajectories: Trajectories. Has to be non-empty.
        num_actions: Size of the action set. If omitted, it is inferred as the largest
            observed action index plus one.
    """

    def __init__(
        self, trajectories: Sequence[Trajectory], num_actions: Optional[int] = None,
    ) -> None:
        trajectories = tuple(trajectories)
        if not trajectories:
            raise DatasetError("A dataset needs at least one trajectory.")
        self._trajectories = trajectories

        if num_actions is None:
            num_actions = (
                max(
                    int(traj.actions.max()) if traj.num_stages else -1
                    for traj in trajectories
                )
                + 1
            )
        self.num_actions = int(num_actions)

    @property
    def trajectories(self) -> Tuple[Trajectory, ...]:
        return self._trajectories

    @property
    def state_dim(self) -> int:
        return self._trajectories[0].state_dim

    @property
    def num_trajectories(self) -> int:
        return len(self._trajectories)

    @property
    def num_transitions(self) -> int:
        return sum(traj.num_stages for traj in self._trajectories)

    def __len__(self) -> int:
        return self.num_trajectories

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self._trajectories)

    def __getitem__(self, idx: int) -> Trajectory:
        return self._trajectories[idx]

    def initial_states(self) -> torch.Tensor:
        return torch.stack([traj.states[0] for traj in self._trajectories])

    def subset(self, indices: Union[Sequence[int], torch.Tensor]) -> "OfflineDataset":
        if isinstance(indices, torch.Tensor):
            indices = indices.tolist()
        return OfflineDataset(
            [self._trajectories[idx] for idx in indices], num_actions=self.num_actions
        )

    def transitions(self) -> TransitionBatch:
        states: List[torch.Tensor] = []
        actions: List[torch.Tensor] = []
        rewards: List[torch.Tensor] = []
        next_states: List[torch.Tensor] = []
        trajectory_ids: List[torch.Tensor] = []
        stages: List[torch.Tensor] = []
        for idx, traj in enumerate(self._trajectories):
            num_stages = traj.num_stages
            states.append(traj.states[:num_stages])
            next_states.append(traj.states[1 : num_stages + 1])
            actions.append(traj.actions)
            rewards.append(traj.rewards)
            trajectory_ids.append(torch.full((num_stages,), idx, dtype=torch.long))
            stages.append(torch.arange(num_stages))
        return TransitionBatch(
            torch.cat(states),
            torch.cat(actions),
            torch.cat(rewards),
            torch.cat(next_states),
            torch.cat(trajectory_ids),
            torch.cat(stages),
        )

    def samples(self) -> Iterator[TransitionSample]:
        for traj in self._trajectories:
            yield from traj.samples()

    def _properties(self) -> Dict[str, Any]:
        dct = super()._properties()
        dct["num_trajectories"] = self.num_trajectories
        dct["num_transitions"] = self.num_transitions
        dct["state_dim"] = self.state_dim
        dct["num_actions"] = self.num_actions
        return dct


class ValidationReport(ComplexObject):
    def __init__(
        self, action_counts: torch.Tensor, warnings: Sequence[str] = (),
    ) -> None:
        self.action_counts = action_counts
        self.warnings = tuple(warnings)

    @property
    def action_frequencies(self) -> torch.Tensor:
        total = self.action_counts.sum()
        return self.action_counts.to(torch.float64) / max(int(total), 1)

    @property
    def unobserved_actions(self) -> Tuple[int, ...]:
        return tuple(torch.nonzero(self.action_counts == 0).flatten().tolist())

    @property
    def ok(self) -> bool:
        return not self.warnings

    def to_dict(self) -> Dict[str, Any]:
        return OrderedDict(
            [
                ("action_frequencies", self.action_frequencies.tolist()),
                ("unobserved_actions", list(self.unobserved_actions)),
                ("warnings", list(self.warnings)),
            ]
        )

    def _properties(self) -> Dict[str, Any]:
        dct = super()._properties()
        dct["action_counts"] = self.action_counts.tolist()
        dct["num_warnings"] = len(self.warnings)
        return dct


def _check_structure(ds: OfflineDataset) -> None:
    state_dim = ds.state_dim
    for idx, traj in enumerate(ds):
        num_states = traj.states.size(0)
        num_actions = traj.actions.numel()
        num_rewards = traj.rewards.numel()
        if not (num_states == num_actions + 1 == num_rewards + 1):
            msg = (
                f"length mismatch in trajectory {idx}: {num_states} states, "
                f"{num_actions} actions and {num_rewards} rewards."
            )
            raise DatasetError(msg)
        if num_actions == 0:
            msg = f"Trajectory {idx} has no rewards."
            raise DatasetError(msg)
        if traj.state_dim != state_dim:
            msg = (
                f"Trajectory {idx} has state dimension {traj.state_dim}, but the "
                f"dataset has {state_dim}."
            )
            raise DatasetError(msg)
        if not (
            bool(torch.all(torch.isfinite(traj.states)))
            and bool(torch.all(torch.isfinite(traj.rewards)))
        ):
            msg = f"Trajectory {idx} contains NaN or infinite entries."
            raise DatasetError(msg)
        out_of_range = (traj.actions < 0) | (traj.actions >= ds.num_actions)
        if bool(torch.any(out_of_range)):
            stage = int(torch.nonzero(out_of_range)[0])
            msg = (
                f"action out of range in trajectory {idx} at stage {stage}: "
                f"{int(traj.actions[stage])} is not in [0, {ds.num_actions})."
            )
            raise DatasetError(msg)


def validate_dataset(ds: OfflineDataset, warn: bool = True) -> ValidationReport:
    r"""Checks a dataset for structural consistency and empirical positivity.

    Structural problems (length mismatch, NaN or infinite entries, inconsistent state
    dimensions, invalid action indices) raise a :class:`~pyregime.DatasetError`. Actions
    that are never observed are reported and, if ``warn`` is ``True``, emitted as
    :class:`~pyregime.PositivityWarning`.
    """
    _check_structure(ds)

    actions = torch.cat([traj.actions for traj in ds])
    counts = torch.bincount(actions, minlength=ds.num_actions)
    report_warnings = [
        f"positivity: action {action} is never observed"
        for action in torch.nonzero(counts == 0).flatten().tolist()
    ]
    if warn:
        for msg in report_warnings:
            warnings.warn(msg, PositivityWarning)
    return ValidationReport(counts, report_warnings)
