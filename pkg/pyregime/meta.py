import torch

__all__ = ["is_scalar_tensor", "is_pmf"]


def is_scalar_tensor(x: torch.Tensor) -> bool:
    return x.dim() == 0


def is_pmf(x: torch.Tensor, atol: float = 1e-9) -> bool:
    r"""Checks if the last dimension of ``x`` holds probability mass functions, i.e.
    nonnegative entries that sum to one within ``atol``.
    """
    if x.numel() == 0:
        return False
    nonneg = bool(torch.all(x >= 0.0))
    normalized = bool(torch.all(torch.abs(x.sum(-1) - 1.0) <= atol))
    return nonneg and normalized
