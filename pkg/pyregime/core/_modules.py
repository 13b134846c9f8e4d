from typing import Dict, Tuple, cast

import torch
from torch import nn

from ._objects import ComplexObject

__all__ = ["Module"]


class Module(nn.Module, ComplexObject):
    r""":class:`torch.nn.Module` with the representation of
    :class:`pyregime.ComplexObject` for objectives that are evaluated on a fixed
    dataset.

    The per-transition tensors of the dataset are registered with
    :meth:`register_data`. They move with the module, e.g. under ``.to(device)``, but
    are not part of its ``state_dict``.
    """
    _buffers: Dict[str, torch.Tensor]

    def register_data(self, **tensors: torch.Tensor) -> None:
        for name, tensor in tensors.items():
            self.register_buffer(name, tensor, persistent=False)

    @property
    def data_names(self) -> Tuple[str, ...]:
        return tuple(
            name
            for name in self._buffers.keys()
            if name in self._non_persistent_buffers_set
        )

    def __repr__(self) -> str:
        return ComplexObject.__repr__(self)

    def torch_repr(self) -> str:
        return cast(str, nn.Module.__repr__(self))
