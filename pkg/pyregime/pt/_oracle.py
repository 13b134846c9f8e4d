import warnings
from typing import NamedTuple

import torch

from pyregime.core import ConvergenceWarning
from pyregime.misc import verify_discount
from pyregime.optim import OptimProgressBar
from pyregime.tabular import TabularMDP, q_values

from .functional import proximal_bellman_value, sparse_policy

__all__ = ["ProximalValueIterationResult", "proximal_value_iteration"]


class ProximalValueIterationResult(NamedTuple):
    values: torch.Tensor
    q_values: torch.Tensor
    policy: torch.Tensor
    num_iter: int


def proximal_value_iteration(
    mdp: TabularMDP,
    gamma: float,
    lam: float,
    tol: float = 1e-12,
    max_iter: int = 100_000,
    quiet: bool = True,
) -> ProximalValueIterationResult:
    r"""Iterates the proximal Bellman operator
    :math:`V \leftarrow \mathcal{B}_\lambda V` from :math:`V = 0`.
    :math:`\mathcal{B}_\lambda` is a :math:`\gamma`-contraction in the sup norm, so the
    fixed point :math:`V_\lambda^*` is reached geometrically.

    Returns:
        :math:`V_\lambda^*`, :math:`Q_\lambda^*` and the sparse proximal policy
        :math:`\pi_\lambda^*` of shape :math:`(S, A)`.
    """
    gamma = verify_discount(gamma)
    values = torch.zeros(mdp.num_states, dtype=torch.float64)
    num_iter = 0
    with OptimProgressBar(
        "Proximal value iteration", max_iter, quiet=quiet
    ) as progress_bar:
        for num_iter in range(1, max_iter + 1):
            new_values = proximal_bellman_value(q_values(mdp, values, gamma), lam)
            residual = float(torch.max(torch.abs(new_values - values)))
            values = new_values
            progress_bar.update(loss=residual)
            if residual <= tol:
                break
        else:
            msg = (
                f"Proximal value iteration did not reach tol={tol} in {max_iter} "
                f"iterations."
            )
            warnings.warn(msg, ConvergenceWarning)

    qs = q_values(mdp, values, gamma)
    return ProximalValueIterationResult(values, qs, sparse_policy(qs, lam), num_iter)
