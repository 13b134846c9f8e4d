from dataclasses import dataclass
from typing import Any, Iterator, Tuple

import torch

from pyregime.core import argmax_lowest
from pyregime.misc import as_tensor

__all__ = [
    "SupportSet",
    "support_size",
    "support_set",
    "sparse_threshold",
    "sparse_policy",
    "proximal_bellman_value",
    "bias_bound",
    "kkt_multipliers",
    "stationarity_residual",
    "recommend",
]


def _verify_lambda(lam: float) -> float:
    if not lam > 0.0:
        raise ValueError(f"lambda has to be positive, but got {lam}.")
    return float(lam)


def _sorted(q: torch.Tensor, lam: float) -> Tuple[torch.Tensor, torch.Tensor]:
    # stable, so tied values keep the lowest action index first
    return torch.sort(q / lam, dim=-1, descending=True, stable=True)


def support_size(q: torch.Tensor, lam: float) -> torch.Tensor:
    r"""Size :math:`|\mathcal{K}|` of the support set along the last dimension."""
    q = as_tensor(q)
    lam = _verify_lambda(lam)
    z, _ = _sorted(q, lam)
    ranks = torch.arange(1, q.size(-1) + 1, dtype=q.dtype)
    is_supported = 1.0 + ranks * z > torch.cumsum(z, dim=-1)
    return is_supported.sum(-1)


@dataclass(frozen=True)
class SupportSet:
    r"""Actions with positive probability under the sparse proximal policy, ordered by
    descending action value.
    """
    actions: Tuple[int, ...]

    def __len__(self) -> int:
        return len(self.actions)

    def __contains__(self, action: Any) -> bool:
        return action in self.actions

    def __iter__(self) -> Iterator[int]:
        return iter(self.actions)


def support_set(q: Any, lam: float) -> SupportSet:
    r"""Support set of a single action value vector

    .. math::

        \mathcal{K} = \left\{a_{(i)} : Q(a_{(i)}) > \frac{1}{i} \sum_{j \le i}
        Q(a_{(j)}) - \frac{\lambda}{i}\right\}

    where :math:`a_{(1)}, a_{(2)}, \dots` sorts the actions by descending value with
    the lowest index first on ties. The condition holds for a prefix of the sorted
    actions, so the set always contains the argmax and grows with :math:`\lambda`.
    """
    q = as_tensor(q).flatten()
    size = int(support_size(q, lam))
    _, order = _sorted(q, _verify_lambda(lam))
    return SupportSet(tuple(order[:size].tolist()))


def sparse_threshold(q: torch.Tensor, lam: float) -> torch.Tensor:
    r"""Threshold :math:`\tau = (\sum_{a \in \mathcal{K}} Q(a) / \lambda - 1) /
    |\mathcal{K}|` of the sparse proximal policy.
    """
    q = as_tensor(q)
    lam = _verify_lambda(lam)
    z, _ = _sorted(q, lam)
    size = support_size(q, lam)
    cumsum = torch.cumsum(z, dim=-1)
    support_sum = torch.gather(cumsum, -1, (size - 1).unsqueeze(-1)).squeeze(-1)
    return (support_sum - 1.0) / size.to(q.dtype)


def sparse_policy(q: Any, lam: float) -> torch.Tensor:
    r"""Sparse proximal policy

    .. math::

        \pi_\lambda(a) = \left(\frac{Q(a)}{\lambda} - \tau\right)^+

    i.e. the Euclidean projection of :math:`Q / \lambda` onto the probability simplex.
    It maximizes :math:`\langle Q, \pi \rangle + \frac{\lambda}{2} \sum_a \pi(a) (1 -
    \pi(a))` and is exactly zero outside of :func:`support_set`.

    Args:
        q: Action values of shape :math:`(*, A)`.
        lam: Regularization strength :math:`\lambda > 0`.
    """
    q = as_tensor(q)
    tau = sparse_threshold(q, lam)
    return torch.clamp(q / lam - tau.unsqueeze(-1), min=0.0)


def proximal_bellman_value(q: Any, lam: float) -> torch.Tensor:
    r"""Closed form of the proximal Bellman backup

    .. math::

        \max_\pi \langle Q, \pi \rangle + \frac{\lambda}{2} \sum_a \pi(a) (1 - \pi(a))
        = \langle Q, \pi_\lambda \rangle + \frac{\lambda}{2} (1 - \|\pi_\lambda\|^2)
    """
    q = as_tensor(q)
    policy = sparse_policy(q, lam)
    return torch.sum(q * policy, dim=-1) + lam / 2.0 * (
        1.0 - torch.sum(policy ** 2, dim=-1)
    )


def bias_bound(lam: float, support_size: int) -> float:
    r"""Upper bound :math:`\frac{\lambda}{2} - \frac{\lambda}{2 |\mathcal{K}|}` of the
    approximation bias :math:`\mathcal{B}_\lambda V - \mathcal{B} V`. The bias reaches
    the bound if the action values on the support are tied.
    """
    lam = _verify_lambda(lam)
    if support_size < 1:
        raise ValueError(f"support_size has to be positive, but got {support_size}.")
    return lam / 2.0 - lam / (2.0 * support_size)


def kkt_multipliers(q: Any, lam: float) -> Tuple[torch.Tensor, torch.Tensor]:
    r"""Multipliers of the simplex constraints at the sparse proximal policy.

    The stationarity condition reads :math:`Q(a) + \lambda d'(\pi_\lambda(a)) - \Psi +
    \psi(a) = \mathcal{B}_\lambda V` with :math:`d'(x) = (1 - 2x) / 2`, which gives

    .. math::

        \Psi = -\frac{\lambda}{2} \|\pi_\lambda\|^2 \in \left[-\frac{\lambda}{2},
        0\right), \qquad
        \psi(a) = \begin{cases} 0 & a \in \mathcal{K} \\
        \lambda \tau - Q(a) \ge 0 & a \notin \mathcal{K} \end{cases}

    Returns:
        :math:`\Psi` of shape :math:`(*)` and :math:`\psi` of shape :math:`(*, A)`.
        :math:`\psi(a) \pi_\lambda(a) = 0` holds exactly.
    """
    q = as_tensor(q)
    policy = sparse_policy(q, lam)
    tau = sparse_threshold(q, lam).unsqueeze(-1)
    state_multiplier = -lam / 2.0 * torch.sum(policy ** 2, dim=-1)
    action_multiplier = torch.where(
        policy > 0.0,
        torch.zeros_like(q),
        torch.clamp(lam * tau - q, min=0.0),
    )
    return state_multiplier, action_multiplier


def stationarity_residual(q: Any, lam: float) -> torch.Tensor:
    r""":math:`Q(a) + \lambda d'(\pi_\lambda(a)) - \Psi + \psi(a) -
    \mathcal{B}_\lambda V` for every action. Vanishes up to rounding.
    """
    q = as_tensor(q)
    policy = sparse_policy(q, lam)
    state_multiplier, action_multiplier = kkt_multipliers(q, lam)
    marginal = (1.0 - 2.0 * policy) / 2.0
    return (
        q
        + lam * marginal
        - state_multiplier.unsqueeze(-1)
        + action_multiplier
        - proximal_bellman_value(q, lam).unsqueeze(-1)
    )


def recommend(q: Any, lam: float) -> torch.Tensor:
    return argmax_lowest(sparse_policy(q, lam))
