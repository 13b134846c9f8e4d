from typing import TYPE_CHECKING, Sequence, Union

import torch

from pyregime.misc import as_tensor

if TYPE_CHECKING:
    from ._data import Trajectory

__all__ = ["argmax_lowest", "discounted_return"]


def argmax_lowest(x: torch.Tensor, atol: float = 1e-9) -> torch.Tensor:
    r"""Index of the maximum along the last dimension. Entries within ``atol`` of the
    maximum are treated as tied and the lowest index wins.

    Args:
        x: Input of shape :math:`(*, A)`.
        atol: Tie tolerance.

    Returns:
        Long tensor of shape :math:`(*)`.
    """
    maxima = torch.max(x, dim=-1, keepdim=True).values
    is_tied = x >= maxima - atol
    # the first True along the last dimension
    return torch.argmax(is_tied.to(torch.uint8), dim=-1)


def discounted_return(
    rewards: Union["Trajectory", torch.Tensor, Sequence[float]],
    gamma: float,
) -> float:
    r"""Discounted sum of rewards :math:`\sum_{t=0}^{T-1} \gamma^t R^t`.

    Args:
        rewards: Rewards or a :class:`~pyregime.Trajectory`.
        gamma: Discount factor.

    Raises:
        DatasetError: If there are no rewards.
    """
    from ._data import Trajectory
    from ._errors import DatasetError

    if isinstance(rewards, Trajectory):
        rewards = rewards.rewards
    rewards = as_tensor(rewards).flatten()
    if rewards.numel() == 0:
        raise DatasetError("no rewards")

    discounts = torch.full_like(rewards, float(gamma)) ** torch.arange(
        rewards.numel(), dtype=rewards.dtype
    )
    # 0 ** 0 == 1 in torch, so gamma == 0 keeps exactly the first reward
    return float(torch.sum(discounts * rewards))
