__all__ = [
    "DatasetError",
    "UnderdeterminedError",
    "DivergenceError",
    "PositivityWarning",
    "ConvergenceWarning",
    "RegularizationWarning",
    "ClippingWarning",
]


class DatasetError(ValueError):
    r"""Raised for structurally invalid data, e.g. mismatching trajectory lengths,
    non-finite entries, or states outside a tabular enumeration.
    """


class UnderdeterminedError(ValueError):
    pass


class DivergenceError(RuntimeError):
    r"""Raised if a semi-gradient iteration leaves the finite regime."""


class PositivityWarning(UserWarning):
    r"""Some action is (empirically) never chosen in some state."""


class ConvergenceWarning(UserWarning):
    r"""An iterative solver stopped before reaching its tolerance. The best iterate is
    returned.
    """


class RegularizationWarning(UserWarning):
    pass


class ClippingWarning(UserWarning):
    pass
