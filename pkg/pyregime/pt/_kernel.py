import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Any, Dict, Union

import torch
from torch.nn import functional as F

from pyregime.core import ComplexObject
from pyregime.misc import as_tensor

__all__ = ["KernelSpec", "GaussianKernel"]

MEDIAN_HEURISTIC = "median"


class GaussianKernel(ComplexObject):
    r"""Gaussian kernel :math:`K(z, \tilde{z}) = \zeta \exp(-\|z - \tilde{z}\|^2 /
    (2 h^2))` on embedded state-action pairs :math:`z = ((s - \mu) / \sigma, e_a)`.

    ``bandwidth=inf`` gives the constant kernel :math:`K \equiv \zeta`.
    """

    def __init__(
        self,
        shift: Any,
        scale: Any,
        bandwidth: float,
        num_actions: int,
        zeta: float = 1.0,
    ) -> None:
        if not bandwidth > 0.0:
            raise ValueError(f"bandwidth has to be positive, but got {bandwidth}.")
        if not zeta > 0.0:
            raise ValueError(f"zeta has to be positive, but got {zeta}.")
        self.shift = as_tensor(shift).flatten()
        self.scale = as_tensor(scale).flatten()
        self.bandwidth = float(bandwidth)
        self.num_actions = num_actions
        self.zeta = float(zeta)

    def embed(self, states: torch.Tensor, actions: torch.Tensor) -> torch.Tensor:
        standardized = (states - self.shift) / self.scale
        one_hot = F.one_hot(actions, self.num_actions).to(standardized.dtype)
        return torch.cat((standardized, one_hot), dim=-1)

    def gram(self, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        r"""Kernel matrix of embedded inputs of shape :math:`(*, N, D)` and
        :math:`(*, M, D)`.
        """
        if math.isinf(self.bandwidth):
            size = (*x.size()[:-1], y.size(-2))
            return torch.full(size, self.zeta, dtype=x.dtype)
        sq_dists = torch.sum((x.unsqueeze(-2) - y.unsqueeze(-3)) ** 2, dim=-1)
        return self.zeta * torch.exp(-sq_dists / (2.0 * self.bandwidth ** 2))

    def __call__(
        self,
        states: torch.Tensor,
        actions: torch.Tensor,
        other_states: torch.Tensor,
        other_actions: torch.Tensor,
    ) -> torch.Tensor:
        return self.gram(
            self.embed(states, actions), self.embed(other_states, other_actions)
        )

    def to_dict(self) -> Dict[str, Any]:
        return OrderedDict(
            [
                ("shift", self.shift.tolist()),
                ("scale", self.scale.tolist()),
                ("bandwidth", self.bandwidth),
                ("num_actions", self.num_actions),
                ("zeta", self.zeta),
            ]
        )

    @classmethod
    def from_dict(cls, dct: Dict[str, Any]) -> "GaussianKernel":
        return cls(
            dct["shift"],
            dct["scale"],
            dct["bandwidth"],
            dct["num_actions"],
            zeta=dct["zeta"],
        )

    def _properties(self) -> Dict[str, Any]:
        dct = super()._properties()
        dct["bandwidth"] = f"{self.bandwidth:.3g}"
        dct["zeta"] = self.zeta
        return dct


@dataclass(frozen=True)
class KernelSpec:
    r"""Configuration of the kernel that embeds the temporal consistency errors.

    Args:
        bandwidth: Positive bandwidth, ``float("inf")`` for the constant kernel, or
            ``"median"`` for the median of the pairwise distances of the embedded
            data.
        zeta: Scale :math:`\zeta` of the kernel. Defaults to ``1.0``.
        max_points: Number of leading data points used by the median heuristic.
    """
    bandwidth: Union[float, str] = MEDIAN_HEURISTIC
    zeta: float = 1.0
    max_points: int = 1000

    def __post_init__(self) -> None:
        if isinstance(self.bandwidth, str):
            if self.bandwidth != MEDIAN_HEURISTIC:
                msg = (
                    f"bandwidth has to be positive or '{MEDIAN_HEURISTIC}', "
                    f"but got '{self.bandwidth}'."
                )
                raise ValueError(msg)
        elif not self.bandwidth > 0.0:
            raise ValueError(f"bandwidth has to be positive, but got {self.bandwidth}.")
        if not self.zeta > 0.0:
            raise ValueError(f"zeta has to be positive, but got {self.zeta}.")

    def fit(
        self, states: torch.Tensor, actions: torch.Tensor, num_actions: int
    ) -> GaussianKernel:
        r"""Fixes the standardization and the bandwidth from data."""
        states = as_tensor(states)
        shift = states.mean(dim=0)
        scale = states.std(dim=0, unbiased=False)
        scale = torch.where(scale > 0.0, scale, torch.ones_like(scale))

        if not isinstance(self.bandwidth, str):
            return GaussianKernel(shift, scale, self.bandwidth, num_actions, self.zeta)

        kernel = GaussianKernel(shift, scale, 1.0, num_actions, self.zeta)
        points = kernel.embed(
            states[: self.max_points], actions[: self.max_points]
        )
        dists = torch.cdist(points, points)
        idcs = torch.triu_indices(points.size(0), points.size(0), offset=1)
        dists = dists[idcs[0], idcs[1]]
        dists = dists[dists > 0.0]
        kernel.bandwidth = float(torch.median(dists)) if dists.numel() else 1.0
        return kernel
