import contextlib
import warnings
from typing import (
    Any,
    Dict,
    Iterator,
    Optional,
    Sequence,
    Tuple,
    Type,
    Union,
)

import torch

__all__ = [
    "as_tensor",
    "get_generator",
    "verify_str_arg",
    "verify_discount",
    "build_complex_obj_repr",
    "suppress_warnings",
]


def as_tensor(x: Any, dtype: torch.dtype = torch.float64) -> torch.Tensor:
    r"""Converts ``x`` into a :class:`~torch.Tensor` of the package wide dtype. Tensors
    that already match are returned without copy.
    """
    if isinstance(x, torch.Tensor):
        return x if x.dtype == dtype else x.to(dtype)
    return torch.as_tensor(x, dtype=dtype)


def get_generator(
    seed: Optional[Union[int, torch.Generator]] = None
) -> torch.Generator:
    r"""Returns a seeded :class:`torch.Generator`.

    Args:
        seed: If :class:`torch.Generator`, it is returned unchanged. If ``None``, the
            generator is seeded non-deterministically.
    """
    if isinstance(seed, torch.Generator):
        return seed

    generator = torch.Generator()
    if seed is None:
        generator.seed()
    else:
        generator.manual_seed(int(seed))
    return generator


def verify_str_arg(
    arg: Any, param: Optional[str] = None, valid_args: Optional[Sequence[str]] = None
) -> str:
    r"""Checks that ``arg`` is a string and, if ``valid_args`` is given, one of them.

    Raises:
        ValueError: If the check fails. The message names ``param`` if given.
    """
    name = "The argument" if param is None else param
    if not isinstance(arg, str):
        raise ValueError(f"{name} has to be a str, but got {type(arg).__name__}.")
    if valid_args is not None and arg not in valid_args:
        choices = ", ".join(repr(valid_arg) for valid_arg in valid_args)
        raise ValueError(f"{name} has to be one of {choices}, but got {arg!r}.")
    return arg


def verify_discount(gamma: float, finite_horizon: bool = False) -> float:
    r"""Checks the discount factor. Infinite-horizon computations require
    :math:`0 \le \gamma < 1`, finite-horizon ones allow :math:`\gamma = 1`.
    """
    gamma = float(gamma)
    upper_ok = gamma <= 1.0 if finite_horizon else gamma < 1.0
    if not (gamma >= 0.0 and upper_ok):
        interval = "[0, 1]" if finite_horizon else "[0, 1)"
        msg = f"The discount factor gamma has to be in {interval}, but got {gamma}."
        raise ValueError(msg)
    return gamma


def build_complex_obj_repr(
    name: str,
    properties: Optional[Dict[str, Any]] = None,
    named_children: Sequence[Tuple[str, Any]] = (),
    line_length: int = 80,
    num_indent: int = 2,
) -> str:
    r"""Builds ``name(key=value, ...)``. The properties move to separate lines if they
    do not fit into ``line_length`` or if a value spans multiple lines. Every named
    child is appended as an indented ``(child_name): repr`` block.
    """
    pad = " " * num_indent
    items = [f"{key}={value}" for key, value in (properties or {}).items()]
    body = ", ".join(items)
    overhead = num_indent if named_children else len(name) + 2
    if "\n" in body or len(body) + overhead > line_length:
        body = ",\n".join(items)
    elif not named_children:
        return f"{name}({body})"

    lines = [f"{name}("]
    lines.extend(pad + line for line in body.splitlines())
    for child_name, child in named_children:
        first, *rest = str(child).splitlines()
        lines.append(f"{pad}({child_name}): {first}")
        lines.extend(pad + line for line in rest)
    lines.append(")")
    return "\n".join(lines)


@contextlib.contextmanager
def suppress_warnings(*categories: Type[Warning]) -> Iterator[None]:
    r"""Ignores warnings of the given categories, :class:`UserWarning` if none are
    given.
    """
    with warnings.catch_warnings():
        for category in categories or (UserWarning,):
            warnings.simplefilter("ignore", category)
        yield
