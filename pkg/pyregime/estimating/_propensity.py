import warnings
from typing import Any, Dict, Optional, Sequence

import torch
from torch.nn import functional as F

from pyregime.core import (
    FeatureBasis,
    OfflineDataset,
    PolynomialBasis,
    PositivityWarning,
    StateEnumeration,
    StochasticPolicy,
)
from pyregime.misc import as_tensor, verify_str_arg
from pyregime.optim import parameter_optimization

__all__ = [
    "PropensityModel",
    "KnownPropensity",
    "EmpiricalPropensity",
    "LogisticPropensity",
    "apply_floor",
    "estimate_propensity",
]

DEFAULT_FLOOR = 0.01


def apply_floor(probs: torch.Tensor, floor: float) -> torch.Tensor:
    r"""Shrinks pmfs towards uniform with :math:`p' = f + (1 - A f) p`, such that every
    probability is at least :math:`f` and the rows still sum to one.
    """
    num_actions = probs.size(-1)
    return floor + (1.0 - num_actions * floor) * probs


def _verify_floor(floor: float, num_actions: int) -> float:
    if not 0.0 <= floor < 1.0 / num_actions:
        msg = (
            f"The propensity floor has to be in [0, 1 / {num_actions}), "
            f"but got {floor}."
        )
        raise ValueError(msg)
    return float(floor)


class PropensityModel(StochasticPolicy):
    r"""Model of the behavior policy :math:`\mu(a | s) = \mathbb{P}(A^t = a | S^t = s)`.

    Args:
        num_actions: Size of the action set.
        floor: Lower bound of the estimated probabilities.
    """
    kind: str

    def __init__(self, num_actions: int, floor: float = DEFAULT_FLOOR) -> None:
        super().__init__(num_actions)
        self.floor = _verify_floor(floor, num_actions)

    def _properties(self) -> Dict[str, Any]:
        dct = super()._properties()
        dct["kind"] = self.kind
        dct["floor"] = self.floor
        return dct


class KnownPropensity(PropensityModel):
    r"""Known behavior policy, e.g. from a randomized trial. The probabilities are
    passed through without flooring.
    """
    kind = "known"

    def __init__(self, policy: StochasticPolicy) -> None:
        super().__init__(policy.num_actions, floor=0.0)
        self.policy = policy

    def probs(self, states: torch.Tensor) -> torch.Tensor:
        return self.policy.probs(states)


class EmpiricalPropensity(PropensityModel):
    r"""Per-cell action frequencies, floored and renormalized. Cells without a visit
    fall back to the uniform distribution and are listed in ``unvisited``.
    """
    kind = "empirical"

    def __init__(
        self,
        enumeration: StateEnumeration,
        frequencies: torch.Tensor,
        floor: float = DEFAULT_FLOOR,
        unvisited: Sequence[int] = (),
    ) -> None:
        super().__init__(int(frequencies.size(1)), floor=floor)
        self.enumeration = enumeration
        self.frequencies = frequencies
        self.unvisited = tuple(unvisited)

    def probs(self, states: torch.Tensor) -> torch.Tensor:
        return apply_floor(self.frequencies[self.enumeration.cells(states)], self.floor)

    def _properties(self) -> Dict[str, Any]:
        dct = super()._properties()
        if self.unvisited:
            dct["unvisited"] = list(self.unvisited)
        return dct


class LogisticPropensity(PropensityModel):
    r"""Multinomial logistic model :math:`\mu(\cdot | s) = \operatorname{softmax}(
    W^\top \phi(s))`, floored.
    """
    kind = "logistic"

    def __init__(
        self, basis: FeatureBasis, weight: Any, floor: float = DEFAULT_FLOOR
    ) -> None:
        weight = as_tensor(weight)
        super().__init__(int(weight.size(1)), floor=floor)
        self.basis = basis
        self.weight = weight

    def probs(self, states: torch.Tensor) -> torch.Tensor:
        logits = self.basis(states) @ self.weight
        return apply_floor(torch.softmax(logits, dim=1), self.floor)


def _empirical(
    ds: OfflineDataset, floor: float, enumeration: Optional[StateEnumeration]
) -> EmpiricalPropensity:
    batch = ds.transitions()
    if enumeration is None:
        enumeration = StateEnumeration.from_states(batch.states)
    cells = enumeration.cells(batch.states)
    counts = torch.zeros(
        (enumeration.num_states, ds.num_actions), dtype=torch.float64
    )
    counts.index_put_(
        (cells, batch.actions),
        torch.ones(len(batch), dtype=torch.float64),
        accumulate=True,
    )
    visits = counts.sum(1, keepdim=True)
    unvisited = torch.nonzero(visits.squeeze(1) == 0).flatten().tolist()
    frequencies = torch.where(
        visits > 0,
        counts / visits.clamp_min(1.0),
        torch.full_like(counts, 1.0 / ds.num_actions),
    )
    for cell in unvisited:
        msg = f"propensity: state cell {cell} is never visited; using uniform"
        warnings.warn(msg, PositivityWarning)
    return EmpiricalPropensity(enumeration, frequencies, floor, unvisited)


def _logistic(
    ds: OfflineDataset,
    floor: float,
    basis: Optional[FeatureBasis],
    ridge: float,
    num_steps: int,
    quiet: bool,
) -> LogisticPropensity:
    batch = ds.transitions()
    if basis is None:
        basis = PolynomialBasis.standardized(batch.states, degree=1)
    if basis.is_state_action:
        raise ValueError("The logistic propensity model needs a state basis.")
    features = basis(batch.states)

    def criterion(weight: torch.Tensor) -> torch.Tensor:
        logits = features @ weight
        return F.cross_entropy(logits, batch.actions) + ridge * torch.sum(weight ** 2)

    init = torch.zeros((basis.num_features, ds.num_actions), dtype=torch.float64)
    result = parameter_optimization(
        [init],
        criterion,
        num_steps=num_steps,
        tol=1e-8,
        name="Propensity fit",
        quiet=quiet,
    )
    return LogisticPropensity(basis, result.params[0], floor=floor)


def estimate_propensity(
    ds: OfflineDataset,
    kind: str = "empirical",
    floor: float = DEFAULT_FLOOR,
    policy: Optional[StochasticPolicy] = None,
    enumeration: Optional[StateEnumeration] = None,
    basis: Optional[FeatureBasis] = None,
    ridge: float = 1e-4,
    num_steps: int = 100,
    quiet: bool = True,
) -> PropensityModel:
    r"""Estimate the behavior policy of an observational dataset.

    Args:
        ds: Offline dataset.
        kind: ``"known"`` wraps ``policy`` unchanged, ``"empirical"`` uses per-cell
            action frequencies, ``"logistic"`` fits a multinomial logistic model by
            maximum likelihood.
        floor: Lower bound of the estimated probabilities. Defaults to ``0.01``.
        policy: Behavior policy. Required for ``kind="known"``.
        enumeration: Optional state enumeration for ``kind="empirical"``. Defaults to
            the unique states of ``ds``.
        basis: Optional state basis for ``kind="logistic"``. Defaults to standardized
            linear features.
        ridge: Ridge penalty of the logistic fit. Keeps the weights finite if an action
            is perfectly predictable.
        num_steps: Maximum number of optimizer steps of the logistic fit.
        quiet: If ``True``, no progress bar is shown.

    Estimated probabilities are shrunk towards uniform by :func:`apply_floor` rather
    than clipped: every probability becomes :math:`f + (1 - A f) p`, so rows that are
    already above the floor change as well, e.g. a frequency of ``0.5`` with two
    actions stays ``0.5`` while ``0.9`` becomes ``0.9 - 0.8 f``. ``kind="known"`` is
    never floored.

    A :class:`~pyregime.PositivityWarning` is emitted for every unvisited cell and if
    the floor is active on the observed states.
    """
    kind = verify_str_arg(kind, "kind", ("known", "empirical", "logistic"))
    if kind == "known":
        if policy is None:
            raise ValueError("kind='known' needs the behavior policy.")
        return KnownPropensity(policy)

    _verify_floor(floor, ds.num_actions)
    model: PropensityModel
    if kind == "empirical":
        model = _empirical(ds, floor, enumeration)
        raw = model.frequencies
    else:
        model = _logistic(ds, floor, basis, ridge, num_steps, quiet)
        raw = torch.softmax(model.basis(ds.transitions().states) @ model.weight, dim=1)

    if floor > 0.0 and bool(torch.any(raw < floor)):
        msg = (
            f"propensity: estimated probabilities below the floor {floor} were raised; "
            f"the importance weights are bounded by {1.0 / floor:.0f}"
        )
        warnings.warn(msg, PositivityWarning)
    return model
