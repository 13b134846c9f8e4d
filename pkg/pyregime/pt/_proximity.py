from dataclasses import dataclass
from typing import Any

import torch

from pyregime.misc import as_tensor, verify_str_arg

__all__ = ["ProximitySpec"]


@dataclass(frozen=True)
class ProximitySpec:
    r"""Proximity term :math:`\lambda \sum_a d(\pi(a))` of the regularized Bellman
    backup with :math:`d(x) = x \phi(x)`.

    ``kind="sparse"`` uses :math:`d(x) = x (1 - x) / 2`, for which the optimal policy is
    sparse and available in closed form. ``kind="shannon"`` uses the entropy
    :math:`d(x) = -x \log x` and is only available to evaluate the regularized
    objective.

    Args:
        lam: Regularization strength :math:`\lambda > 0`.
        kind: ``"sparse"`` or ``"shannon"``.
    """
    lam: float
    kind: str = "sparse"

    def __post_init__(self) -> None:
        if not self.lam > 0.0:
            raise ValueError(f"lambda has to be positive, but got {self.lam}.")
        verify_str_arg(self.kind, "kind", ("sparse", "shannon"))

    @property
    def has_closed_form(self) -> bool:
        return self.kind == "sparse"

    def phi(self, x: Any) -> torch.Tensor:
        r""":math:`\phi(x) = d(x) / x`, continuously extended to :math:`x = 0`."""
        x = as_tensor(x)
        if self.kind == "sparse":
            return (1.0 - x) / 2.0
        return -torch.log(x)

    def d(self, x: Any) -> torch.Tensor:
        x = as_tensor(x)
        if self.kind == "sparse":
            return x * (1.0 - x) / 2.0
        return -torch.special.xlogy(x, x)

    def marginal(self, x: Any) -> torch.Tensor:
        r""":math:`d'(x) = \phi(x) + x \phi'(x)`."""
        x = as_tensor(x)
        if self.kind == "sparse":
            return (1.0 - 2.0 * x) / 2.0
        return -torch.log(x) - 1.0

    def objective(self, q: Any, policy: Any) -> torch.Tensor:
        r"""Regularized objective :math:`\langle Q, \pi \rangle + \lambda \sum_a
        d(\pi(a))` along the last dimension.
        """
        q = as_tensor(q)
        policy = as_tensor(policy)
        return torch.sum(q * policy + self.lam * self.d(policy), dim=-1)

    @property
    def phi_at_zero(self) -> float:
        return float(self.phi(0.0))
