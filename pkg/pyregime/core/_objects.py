from abc import ABC
from collections import OrderedDict
from typing import Any, Dict, Iterator, Optional, Sequence, Tuple, cast

import torch

from pyregime.meta import is_scalar_tensor
from pyregime.misc import build_complex_obj_repr

__all__ = ["ComplexObject", "LossDict"]


class ComplexObject(ABC):
    r"""Object with a complex representation. See
    :func:`pyregime.misc.build_complex_obj_repr` for details.

    Subclasses extend :meth:`_properties` and :meth:`_named_children` of their
    superclass rather than replacing them.
    """
    _STR_INDENT = 2

    def _properties(self) -> Dict[str, Any]:
        return OrderedDict()

    def properties(self) -> Dict[str, Any]:
        return self._properties()

    def _named_children(self) -> Iterator[Tuple[str, Any]]:
        return iter(())

    def named_children(self) -> Iterator[Tuple[str, Any]]:
        yield from self._named_children()

    def __repr__(self) -> str:
        return build_complex_obj_repr(
            type(self).__name__,
            properties=self.properties(),
            named_children=tuple(self.named_children()),
            num_indent=self._STR_INDENT,
        )


class LossDict(OrderedDict):
    r"""Named scalar terms of a fitting objective, e.g. the kernel statistics of the
    temporal consistency and the action value errors. The objective is the sum of all
    terms.

    Args:
        terms: Optional named terms.
    """

    def __init__(self, terms: Sequence[Tuple[str, torch.Tensor]] = ()) -> None:
        super().__init__()
        for name, term in terms:
            self[name] = term

    def __setitem__(self, name: str, term: torch.Tensor) -> None:
        if not isinstance(term, torch.Tensor):
            raise TypeError(
                f"A loss term has to be a scalar torch.Tensor, but got {type(term)}."
            )
        if not is_scalar_tensor(term):
            raise TypeError(f"The loss term {name} is not a scalar.")
        if name in self:
            raise KeyError(f"The loss term {name} is already set.")
        super().__setitem__(name, term)

    def total(self) -> torch.Tensor:
        if not self:
            raise ValueError("The objective has no terms.")
        return cast(torch.Tensor, sum(self.values()))

    def backward(self, *args: Any, **kwargs: Any) -> None:
        self.total().backward(*args, **kwargs)

    def __float__(self) -> float:
        return float(self.total())

    def to_floats(self, total: Optional[str] = None) -> Dict[str, float]:
        r"""Detached term values.

        Args:
            total: If given, the sum of all terms is added under this name.
        """
        dct = OrderedDict((name, float(term)) for name, term in self.items())
        if total is not None:
            dct[total] = float(self)
        return dct

    def __str__(self) -> str:
        width = max(map(len, self.keys()))
        return "\n".join(
            f"{name:<{width}}: {float(term):.3e}" for name, term in self.items()
        )
