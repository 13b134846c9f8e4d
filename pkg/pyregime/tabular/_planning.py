import warnings
from typing import NamedTuple, Union

import torch

from pyregime.core import (
    ConvergenceWarning,
    StochasticPolicy,
    TabularPolicy,
    argmax_lowest,
)
from pyregime.misc import as_tensor, verify_discount
from pyregime.optim import OptimProgressBar

from ._mdp import TabularMDP

__all__ = [
    "q_values",
    "bellman_optimality_operator",
    "bellman_evaluation_operator",
    "ValueIterationResult",
    "value_iteration",
    "policy_table",
    "policy_evaluation",
    "FiniteHorizonResult",
    "finite_horizon_dp",
]

PolicyLike = Union[StochasticPolicy, torch.Tensor]


def _check_values(mdp: TabularMDP, values: torch.Tensor) -> torch.Tensor:
    values = as_tensor(values).flatten()
    if values.numel() != mdp.num_states:
        msg = (
            f"Expected a value table with {mdp.num_states} entries, "
            f"but got {values.numel()}."
        )
        raise ValueError(msg)
    return values


def q_values(mdp: TabularMDP, values: torch.Tensor, gamma: float) -> torch.Tensor:
    r""":math:`Q(s, a) = \sum_{s'} P[s, a, s'] (R[s, a, s'] + \gamma V(s'))`, shape
    :math:`(S, A)`.
    """
    values = _check_values(mdp, values)
    return mdp.expected_reward() + gamma * torch.matmul(mdp.transition, values)


def bellman_optimality_operator(
    mdp: TabularMDP, values: torch.Tensor, gamma: float
) -> torch.Tensor:
    r"""Bellman optimality operator

    .. math::

        (\mathcal{B} V)(s) = \max_a \sum_{s'} P[s, a, s'] (R[s, a, s'] + \gamma V(s'))
    """
    return torch.max(q_values(mdp, values, gamma), dim=1).values


def policy_table(mdp: TabularMDP, policy: PolicyLike) -> torch.Tensor:
    if isinstance(policy, StochasticPolicy):
        table = policy.table(mdp.enumeration)
    else:
        table = as_tensor(policy)
    if tuple(table.size()) != (mdp.num_states, mdp.num_actions):
        msg = (
            f"Expected a policy table of shape {(mdp.num_states, mdp.num_actions)}, "
            f"but got {tuple(table.size())}."
        )
        raise ValueError(msg)
    return table


def bellman_evaluation_operator(
    mdp: TabularMDP, values: torch.Tensor, gamma: float, policy: PolicyLike
) -> torch.Tensor:
    table = policy_table(mdp, policy)
    return torch.sum(table * q_values(mdp, values, gamma), dim=1)


class ValueIterationResult(NamedTuple):
    values: torch.Tensor
    q_values: torch.Tensor
    actions: torch.Tensor
    num_iter: int

    @property
    def policy(self) -> TabularPolicy:
        return TabularPolicy.deterministic(self.actions, self.q_values.size(1))


def value_iteration(
    mdp: TabularMDP,
    gamma: float,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    quiet: bool = True,
) -> ValueIterationResult:
    r"""Iterates :math:`V \leftarrow \mathcal{B} V` from :math:`V = 0` until
    :math:`\|\mathcal{B} V - V\|_\infty \le` ``tol``.

    Returns:
        Optimal values :math:`V^*`, :math:`Q^*` and the greedy actions (lowest index on
        ties).
    """
    gamma = verify_discount(gamma)
    if tol <= 0.0:
        raise ValueError(f"tol has to be positive, but got {tol}.")

    values = torch.zeros(mdp.num_states, dtype=torch.float64)
    num_iter = 0
    with OptimProgressBar("Value iteration", max_iter, quiet=quiet) as progress_bar:
        for num_iter in range(1, max_iter + 1):
            new_values = bellman_optimality_operator(mdp, values, gamma)
            residual = float(torch.max(torch.abs(new_values - values)))
            values = new_values
            progress_bar.update(loss=residual)
            # the residual of the new iterate is at most gamma * residual
            if residual <= tol:
                break
        else:
            msg = f"Value iteration did not reach tol={tol} in {max_iter} iterations."
            warnings.warn(msg, ConvergenceWarning)

    qs = q_values(mdp, values, gamma)
    return ValueIterationResult(values, qs, argmax_lowest(qs), num_iter)


def policy_evaluation(
    mdp: TabularMDP, policy: PolicyLike, gamma: float
) -> torch.Tensor:
    r"""Solves :math:`V = r_\pi + \gamma P_\pi V` with a direct linear solve.

    Raises:
        RuntimeError: If the residual of the solution exceeds ``1e-10``.
    """
    gamma = verify_discount(gamma)
    table = policy_table(mdp, policy)
    r_pi = torch.sum(table * mdp.expected_reward(), dim=1)
    p_pi = torch.einsum("sa,sat->st", table, mdp.transition)

    system = torch.eye(mdp.num_states, dtype=torch.float64) - gamma * p_pi
    values = torch.linalg.solve(system, r_pi)

    residual = float(torch.max(torch.abs(r_pi + gamma * p_pi @ values - values)))
    if residual > 1e-10 * max(1.0, float(torch.max(torch.abs(values)))):
        msg = f"Policy evaluation failed with a residual of {residual:.3e}."
        raise RuntimeError(msg)
    return values


class FiniteHorizonResult(NamedTuple):
    values: torch.Tensor
    q_values: torch.Tensor
    actions: torch.Tensor


def finite_horizon_dp(
    mdp: TabularMDP, horizon: int, gamma: float = 1.0
) -> FiniteHorizonResult:
    r"""Exact finite-horizon dynamic programming with stages
    :math:`0, \dots, T - 1` and terminal value :math:`V_T = 0`.

    Returns:
        Values of shape :math:`(T + 1, S)`, action values of shape :math:`(T, S, A)`
        and optimal actions of shape :math:`(T, S)`.
    """
    gamma = verify_discount(gamma, finite_horizon=True)
    if horizon < 1:
        raise ValueError(f"horizon has to be positive, but got {horizon}.")

    values = torch.zeros((horizon + 1, mdp.num_states), dtype=torch.float64)
    qs = torch.zeros((horizon, mdp.num_states, mdp.num_actions), dtype=torch.float64)
    for stage in reversed(range(horizon)):
        qs[stage] = q_values(mdp, values[stage + 1], gamma)
        values[stage] = torch.max(qs[stage], dim=1).values
    return FiniteHorizonResult(values, qs, argmax_lowest(qs))
