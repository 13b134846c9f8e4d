import itertools
import math
from abc import abstractmethod
from collections import OrderedDict
from copy import copy
from typing import Any, Callable, Dict, Iterator, Optional, Tuple, Type, cast

import torch

from pyregime.misc import as_tensor, verify_str_arg

from ._errors import DatasetError
from ._objects import ComplexObject

__all__ = [
    "StateEnumeration",
    "FeatureBasis",
    "TabularIndicatorBasis",
    "PolynomialBasis",
    "OrdinalPolynomialBasis",
    "RadialGridBasis",
    "LinearFunctional",
    "evaluate_basis",
    "basis_from_dict",
]


def _as_state_batch(states: Any) -> torch.Tensor:
    states = as_tensor(states)
    if states.dim() == 0:
        return states.reshape(1, 1)
    if states.dim() == 1:
        return states.unsqueeze(0)
    return states


class StateEnumeration(ComplexObject):
    r"""Bijection between a finite set of state vectors and the cells
    :math:`0, \dots, S - 1`. States are matched exactly.

    Args:
        states: Enumerated states of shape :math:`(S, p)`.
    """

    def __init__(self, states: Any) -> None:
        self.states = _as_state_batch(states)

    @classmethod
    def range(cls, num_states: int) -> "StateEnumeration":
        r"""Cells of a tabular MDP represented by the one dimensional states
        :math:`0.0, \dots, S - 1.0`.
        """
        return cls(torch.arange(num_states, dtype=torch.float64).unsqueeze(1))

    @classmethod
    def from_states(cls, states: torch.Tensor) -> "StateEnumeration":
        return cls(torch.unique(_as_state_batch(states), dim=0))

    @property
    def num_states(self) -> int:
        return int(self.states.size(0))

    @property
    def state_dim(self) -> int:
        return int(self.states.size(1))

    def cells(self, states: Any) -> torch.Tensor:
        states = _as_state_batch(states)
        if states.size(1) != self.state_dim:
            msg = (
                f"Expected states of dimension {self.state_dim}, "
                f"but got {states.size(1)}."
            )
            raise ValueError(msg)
        matches = torch.all(states.unsqueeze(1) == self.states.unsqueeze(0), dim=2)
        found = torch.any(matches, dim=1)
        if not bool(torch.all(found)):
            state = states[int(torch.nonzero(~found)[0])]
            msg = f"unenumerated state {state.tolist()}"
            raise DatasetError(msg)
        return torch.argmax(matches.to(torch.uint8), dim=1)

    def to_dict(self) -> Dict[str, Any]:
        return OrderedDict([("states", self.states.tolist())])

    @classmethod
    def from_dict(cls, dct: Dict[str, Any]) -> "StateEnumeration":
        return cls(dct["states"])

    def _properties(self) -> Dict[str, Any]:
        dct = super()._properties()
        dct["num_states"] = self.num_states
        dct["state_dim"] = self.state_dim
        return dct


_BASES: Dict[str, Type["FeatureBasis"]] = {}


def _register(kind: str) -> Callable[[Type["FeatureBasis"]], Type["FeatureBasis"]]:
    def register(cls: Type["FeatureBasis"]) -> Type["FeatureBasis"]:
        cls.kind = kind
        _BASES[kind] = cls
        return cls

    return register


class FeatureBasis(ComplexObject):
    r"""Map from a state :math:`s` (or a state-action pair :math:`(s, a)`) to a fixed
    length feature vector :math:`\phi(s)`.

    If ``num_actions`` is set, the basis acts on state-action pairs with the block
    layout :math:`\phi(s, a) = e_a \otimes \phi(s)`, i.e. the state features are placed
    in the block of action :math:`a` and all other blocks are zero.

    Args:
        num_actions: Optional size of the action set.
    """
    kind: str

    def __init__(self, num_actions: Optional[int] = None) -> None:
        self.num_actions = num_actions

    @property
    @abstractmethod
    def num_state_features(self) -> int:
        pass

    @abstractmethod
    def state_features(self, states: torch.Tensor) -> torch.Tensor:
        pass

    @property
    def num_features(self) -> int:
        return self.num_state_features * (self.num_actions or 1)

    @property
    def is_state_action(self) -> bool:
        return self.num_actions is not None

    def with_actions(self, num_actions: Optional[int]) -> "FeatureBasis":
        basis = copy(self)
        basis.num_actions = num_actions
        return basis

    def __call__(self, states: Any, actions: Any = None) -> torch.Tensor:
        single = as_tensor(states).dim() <= 1
        states = _as_state_batch(states)
        features = self.state_features(states)

        if self.num_actions is not None:
            if actions is None:
                raise ValueError("A state-action basis needs actions.")
            actions = torch.as_tensor(actions, dtype=torch.long).flatten()
            num_samples, num_state_features = features.size()
            blocks = features.new_zeros(
                (num_samples, self.num_actions, num_state_features)
            )
            blocks[torch.arange(num_samples), actions] = features
            features = blocks.flatten(1)
        elif actions is not None:
            raise ValueError("A state basis does not take actions.")

        return features.squeeze(0) if single else features

    def all_actions(self, states: Any) -> torch.Tensor:
        r"""Features of every action in every state.

        Returns:
            Tensor of shape :math:`(N, A, A \cdot k)`.
        """
        if self.num_actions is None:
            raise ValueError("all_actions() is only available for state-action bases.")
        states = _as_state_batch(states)
        features = self.state_features(states)
        eye = torch.eye(self.num_actions, dtype=features.dtype)
        return torch.einsum("ab,nk->nabk", eye, features).flatten(2)

    def to_dict(self) -> Dict[str, Any]:
        return OrderedDict([("kind", self.kind), ("num_actions", self.num_actions)])

    def _properties(self) -> Dict[str, Any]:
        dct = super()._properties()
        dct["num_features"] = self.num_features
        if self.num_actions is not None:
            dct["num_actions"] = self.num_actions
        return dct


@_register("tabular")
class TabularIndicatorBasis(FeatureBasis):
    r"""One-hot indicator of the enumerated cell. With actions, the indicator of the
    cell :math:`a \cdot S + s`.
    """

    def __init__(
        self, enumeration: StateEnumeration, num_actions: Optional[int] = None
    ) -> None:
        super().__init__(num_actions=num_actions)
        self.enumeration = enumeration

    @property
    def num_state_features(self) -> int:
        return self.enumeration.num_states

    def state_features(self, states: torch.Tensor) -> torch.Tensor:
        cells = self.enumeration.cells(states)
        return torch.nn.functional.one_hot(cells, self.num_state_features).to(
            torch.float64
        )

    def to_dict(self) -> Dict[str, Any]:
        dct = super().to_dict()
        dct["enumeration"] = self.enumeration.to_dict()
        return dct

    @classmethod
    def from_dict(cls, dct: Dict[str, Any]) -> "TabularIndicatorBasis":
        return cls(
            StateEnumeration.from_dict(dct["enumeration"]),
            num_actions=dct["num_actions"],
        )


@_register("polynomial")
class PolynomialBasis(FeatureBasis):
    r"""Intercept plus the coordinate-wise powers :math:`x_j^d, 1 \le d \le` ``degree``
    of the (optionally standardized) state :math:`x = (s - \text{shift}) /
    \text{scale}`. Features are ordered by degree first.
    """

    def __init__(
        self,
        degree: int,
        state_dim: int,
        num_actions: Optional[int] = None,
        shift: Optional[Any] = None,
        scale: Optional[Any] = None,
    ) -> None:
        if degree < 0:
            raise ValueError(f"degree has to be non-negative, but got {degree}.")
        super().__init__(num_actions=num_actions)
        self.degree = degree
        self.state_dim = state_dim
        self.shift = as_tensor(0.0 if shift is None else shift).expand(state_dim)
        self.scale = as_tensor(1.0 if scale is None else scale).expand(state_dim)

    @classmethod
    def standardized(
        cls, states: torch.Tensor, degree: int, num_actions: Optional[int] = None
    ) -> "PolynomialBasis":
        states = _as_state_batch(states)
        scale = states.std(dim=0, unbiased=False) if states.size(0) > 1 else None
        if scale is not None:
            scale = torch.where(scale > 0.0, scale, torch.ones_like(scale))
        return cls(
            degree,
            states.size(1),
            num_actions=num_actions,
            shift=states.mean(dim=0),
            scale=scale,
        )

    @property
    def num_state_features(self) -> int:
        return 1 + self.degree * self.state_dim

    def _standardize(self, states: torch.Tensor) -> torch.Tensor:
        if states.size(1) != self.state_dim:
            msg = (
                f"Expected states of dimension {self.state_dim}, "
                f"but got {states.size(1)}."
            )
            raise ValueError(msg)
        return (states - self.shift) / self.scale

    def state_features(self, states: torch.Tensor) -> torch.Tensor:
        x = self._standardize(states)
        powers = [torch.ones_like(x[:, :1])]
        powers.extend(x ** degree for degree in range(1, self.degree + 1))
        return torch.cat(powers, dim=1)

    def to_dict(self) -> Dict[str, Any]:
        dct = super().to_dict()
        dct["degree"] = self.degree
        dct["state_dim"] = self.state_dim
        dct["shift"] = self.shift.tolist()
        dct["scale"] = self.scale.tolist()
        return dct

    @classmethod
    def from_dict(cls, dct: Dict[str, Any]) -> "PolynomialBasis":
        return cls(
            dct["degree"],
            dct["state_dim"],
            num_actions=dct["num_actions"],
            shift=dct["shift"],
            scale=dct["scale"],
        )

    def _properties(self) -> Dict[str, Any]:
        dct = super()._properties()
        dct["degree"] = self.degree
        return dct


def _monomials(x: torch.Tensor, degree: int) -> torch.Tensor:
    columns = [torch.ones_like(x[:, 0])]
    for order in range(1, degree + 1):
        for idcs in itertools.combinations_with_replacement(range(x.size(1)), order):
            columns.append(torch.prod(x[:, list(idcs)], dim=1))
    return torch.stack(columns, dim=1)


@_register("ordinal")
class OrdinalPolynomialBasis(PolynomialBasis):
    r"""All monomials of total degree at most ``degree`` in the standardized state,
    including the interactions, e.g. :math:`1, x_1, x_2, x_1^2, x_1 x_2, x_2^2`.

    With actions, the action index is an ordered level such as a dose. Instead of the
    block layout it enters the monomials as one more coordinate
    :math:`(a - \bar{a}) / \bar{a}` with :math:`\bar{a} = (A - 1) / 2`, so neighboring
    actions share their weights.
    """

    @property
    def num_state_features(self) -> int:
        return math.comb(self.state_dim + self.degree, self.degree)

    @property
    def num_features(self) -> int:
        if self.num_actions is None:
            return self.num_state_features
        return math.comb(self.state_dim + 1 + self.degree, self.degree)

    def state_features(self, states: torch.Tensor) -> torch.Tensor:
        return _monomials(self._standardize(states), self.degree)

    def action_levels(self, actions: torch.Tensor) -> torch.Tensor:
        assert self.num_actions is not None
        center = (self.num_actions - 1) / 2.0
        levels = actions.to(torch.float64)
        return (levels - center) / center if center > 0.0 else levels * 0.0

    def __call__(self, states: Any, actions: Any = None) -> torch.Tensor:
        if self.num_actions is None:
            return super().__call__(states, actions)
        if actions is None:
            raise ValueError("A state-action basis needs actions.")
        single = as_tensor(states).dim() <= 1
        x = self._standardize(_as_state_batch(states))
        actions = torch.as_tensor(actions, dtype=torch.long).flatten()
        z = torch.cat((x, self.action_levels(actions).unsqueeze(1)), dim=1)
        features = _monomials(z, self.degree)
        return features.squeeze(0) if single else features

    def all_actions(self, states: Any) -> torch.Tensor:
        if self.num_actions is None:
            raise ValueError("all_actions() is only available for state-action bases.")
        x = self._standardize(_as_state_batch(states))
        num_samples, num_actions = x.size(0), self.num_actions
        levels = self.action_levels(torch.arange(num_actions))
        z = torch.cat(
            (
                x.unsqueeze(1).expand(num_samples, num_actions, x.size(1)),
                levels.view(1, num_actions, 1).expand(num_samples, num_actions, 1),
            ),
            dim=2,
        )
        features = _monomials(z.reshape(num_samples * num_actions, -1), self.degree)
        return features.view(num_samples, num_actions, -1)


@_register("radial")
class RadialGridBasis(FeatureBasis):
    r"""Gaussian bumps :math:`\exp(-\|s - c_j\|^2 / (2 h^2))` around the centers
    :math:`c_j` with bandwidth :math:`h`.
    """

    def __init__(
        self, centers: Any, bandwidth: float, num_actions: Optional[int] = None
    ) -> None:
        if bandwidth <= 0.0:
            raise ValueError(f"bandwidth has to be positive, but got {bandwidth}.")
        super().__init__(num_actions=num_actions)
        self.centers = _as_state_batch(centers)
        self.bandwidth = float(bandwidth)

    @classmethod
    def from_quantiles(
        cls,
        states: torch.Tensor,
        num_per_dim: int,
        num_actions: Optional[int] = None,
    ) -> "RadialGridBasis":
        r"""Product grid of per-coordinate quantiles of ``states``. The bandwidth is
        the median spacing between neighboring grid points.
        """
        states = _as_state_batch(states)
        levels = torch.linspace(0.0, 1.0, num_per_dim + 2, dtype=torch.float64)[1:-1]
        axes = [torch.quantile(states[:, j], levels) for j in range(states.size(1))]
        centers = torch.cartesian_prod(*axes).reshape(-1, states.size(1))
        spacing = torch.cat([torch.diff(axis) for axis in axes])
        spacing = spacing[spacing > 0.0]
        bandwidth = float(spacing.median()) if spacing.numel() else 1.0
        return cls(centers, bandwidth, num_actions=num_actions)

    @property
    def num_state_features(self) -> int:
        return int(self.centers.size(0))

    def state_features(self, states: torch.Tensor) -> torch.Tensor:
        sq_dists = torch.cdist(states, self.centers) ** 2
        return torch.exp(-sq_dists / (2.0 * self.bandwidth ** 2))

    def to_dict(self) -> Dict[str, Any]:
        dct = super().to_dict()
        dct["centers"] = self.centers.tolist()
        dct["bandwidth"] = self.bandwidth
        return dct

    @classmethod
    def from_dict(cls, dct: Dict[str, Any]) -> "RadialGridBasis":
        return cls(dct["centers"], dct["bandwidth"], num_actions=dct["num_actions"])

    def _properties(self) -> Dict[str, Any]:
        dct = super()._properties()
        dct["bandwidth"] = self.bandwidth
        return dct


def basis_from_dict(dct: Dict[str, Any]) -> FeatureBasis:
    kind = verify_str_arg(dct["kind"], "kind", tuple(_BASES.keys()))
    return cast(FeatureBasis, _BASES[kind].from_dict(dct))  # type: ignore[attr-defined]


def evaluate_basis(
    basis: FeatureBasis, state: Any, action: Optional[int] = None
) -> torch.Tensor:
    r"""Feature vector :math:`\phi(s)` or :math:`\phi(s, a)` of a single state."""
    state = as_tensor(state).flatten()
    return basis(state, None if action is None else torch.tensor([action]))


class LinearFunctional(ComplexObject):
    r"""Linear model :math:`f_\theta = \theta^\top \phi` on a feature basis. Used for
    state values :math:`V_\theta(s)` and, with a state-action basis, for
    :math:`Q_\theta(s, a)`.

    Args:
        theta: Weights. If omitted, zeros.
        basis: Feature basis.
    """

    def __init__(self, basis: FeatureBasis, theta: Optional[Any] = None) -> None:
        if theta is None:
            theta = torch.zeros(basis.num_features, dtype=torch.float64)
        theta = as_tensor(theta).flatten()
        if theta.numel() != basis.num_features:
            msg = (
                f"theta has {theta.numel()} entries, but the basis has "
                f"{basis.num_features} features."
            )
            raise ValueError(msg)
        self.basis = basis
        self.theta = theta

    def with_theta(self, theta: Any) -> "LinearFunctional":
        return LinearFunctional(self.basis, theta)

    def __call__(self, states: Any, actions: Any = None) -> torch.Tensor:
        return self.basis(states, actions) @ self.theta

    def gradient(self, states: Any, actions: Any = None) -> torch.Tensor:
        return self.basis(states, actions)

    def q_values(self, states: Any) -> torch.Tensor:
        r"""Values of all actions, shape :math:`(N, A)`."""
        return self.basis.all_actions(states) @ self.theta

    def to_dict(self) -> Dict[str, Any]:
        return OrderedDict(
            [("basis", self.basis.to_dict()), ("theta", self.theta.tolist())]
        )

    @classmethod
    def from_dict(cls, dct: Dict[str, Any]) -> "LinearFunctional":
        return cls(basis_from_dict(dct["basis"]), dct["theta"])

    def _named_children(self) -> Iterator[Tuple[str, Any]]:
        yield from super()._named_children()
        yield "basis", self.basis

