import warnings
from typing import Any, NamedTuple, Optional, Union

import torch

from pyregime.core import (
    ConvergenceWarning,
    DatasetError,
    FeatureBasis,
    LinearFunctional,
    OfflineDataset,
    StochasticPolicy,
    TransitionBatch,
    TransitionSample,
)
from pyregime.misc import as_tensor, verify_discount, verify_str_arg
from pyregime.optim import OptimProgressBar, StepSchedule, as_step_schedule
from pyregime.tabular import TabularMDP, policy_table

__all__ = [
    "bellman_residuals",
    "empirical_msbe",
    "rg_update",
    "RGFitResult",
    "fit_rg",
    "tabular_msbe",
    "MSBEDecomposition",
    "double_sampling_decomposition",
]

ValuesLike = Union[LinearFunctional, torch.Tensor]


def bellman_residuals(
    model: LinearFunctional, batch: TransitionBatch, gamma: float
) -> torch.Tensor:
    r"""Per-transition residuals :math:`r + \gamma V_\theta(s') - V_\theta(s)`."""
    return batch.rewards + gamma * model(batch.next_states) - model(batch.states)


def empirical_msbe(model: LinearFunctional, ds: OfflineDataset, gamma: float) -> float:
    r"""One-sample empirical mean squared Bellman error

    .. math::

        \frac{1}{m} \sum_{i=1}^m (R_i + \gamma V_\theta(s'_i) - V_\theta(s_i))^2

    over all ``m`` transitions of ``ds``. This is the evaluation residual of the policy
    that generated the data.
    """
    batch = ds.transitions()
    if len(batch) == 0:
        raise DatasetError("empirical_msbe needs at least one transition.")
    return float(torch.mean(bellman_residuals(model, batch, gamma) ** 2))


def rg_update(
    model: LinearFunctional, sample: TransitionSample, alpha: float, gamma: float
) -> LinearFunctional:
    r"""Full gradient step on :math:`\frac{1}{2} \delta^2` with the residual
    :math:`\delta = r + \gamma V_\theta(s') - V_\theta(s)`:

    .. math::

        \theta' = \theta - \alpha \delta (\gamma \phi(s') - \phi(s))

    In contrast to TD(0) the successor features are differentiated as well.
    """
    features = model.gradient(sample.state)
    next_features = model.gradient(sample.next_state)
    residual = (
        sample.reward + gamma * (next_features @ model.theta) - features @ model.theta
    )
    return model.with_theta(
        model.theta - alpha * residual * (gamma * next_features - features)
    )


class RGFitResult(NamedTuple):
    model: LinearFunctional
    msbe: float
    grad_norm: float
    num_iter: int
    converged: bool


def fit_rg(
    ds: OfflineDataset,
    basis: FeatureBasis,
    gamma: float,
    schedule: Optional[Union[float, StepSchedule]] = None,
    max_iter: int = 100_000,
    tol: float = 1e-8,
    theta: Optional[Any] = None,
    quiet: bool = True,
) -> RGFitResult:
    r"""Residual gradient descent on the empirical mean squared Bellman error.

    The objective :math:`\frac{1}{2m} \|r + D \theta\|^2` with
    :math:`D = \gamma \Phi' - \Phi` is quadratic, so the gradient
    :math:`H \theta + b` is evaluated from the precomputed :math:`H = D^\top D / m` and
    :math:`b = D^\top r / m`.

    Args:
        ds: Offline dataset.
        basis: State basis of the value model.
        gamma: Discount factor. Has to be smaller than one.
        schedule: Optional step size or step schedule. If omitted, the constant step
            :math:`1 / L` with :math:`L` the largest eigenvalue of :math:`H` is used.
        max_iter: Maximum number of gradient steps.
        tol: Tolerance of the gradient norm.
        theta: Optional initial weights.
        quiet: If ``True``, no progress bar is shown.

    Returns:
        Fitted model together with the reached empirical MSBE, gradient norm and
        whether the tolerance was met. If it was not, a
        :class:`~pyregime.ConvergenceWarning` is emitted.
    """
    gamma = verify_discount(gamma)
    if gamma >= 1.0:
        raise ValueError("fit_rg needs a discount factor smaller than one.")
    batch = ds.transitions()
    if len(batch) == 0:
        raise DatasetError("fit_rg needs at least one transition.")

    model = LinearFunctional(basis, theta)
    diff = gamma * basis(batch.next_states) - basis(batch.states)
    num_samples = len(batch)
    hessian = diff.t() @ diff / num_samples
    offset = diff.t() @ batch.rewards / num_samples

    if schedule is None:
        curvature = float(torch.linalg.eigvalsh(hessian).max())
        step_schedule: StepSchedule = as_step_schedule(
            1.0 / curvature if curvature > 0.0 else 1.0
        )
    else:
        step_schedule = as_step_schedule(schedule)

    theta = model.theta
    grad = hessian @ theta + offset
    grad_norm = float(torch.linalg.norm(grad))
    num_iter = 0
    with OptimProgressBar("Residual gradient", max_iter, quiet=quiet) as progress_bar:
        while grad_norm > tol and num_iter < max_iter:
            theta = theta - step_schedule(num_iter) * grad
            grad = hessian @ theta + offset
            grad_norm = float(torch.linalg.norm(grad))
            num_iter += 1
            progress_bar.update(loss=grad_norm)

    converged = grad_norm <= tol
    if not converged:
        msg = (
            f"Residual gradient descent stopped after {num_iter} iterations with a "
            f"gradient norm of {grad_norm:.3e} > {tol:.1e}."
        )
        warnings.warn(msg, ConvergenceWarning)

    model = model.with_theta(theta)
    return RGFitResult(
        model, empirical_msbe(model, ds, gamma), grad_norm, num_iter, converged
    )


def _value_table(mdp: TabularMDP, values: ValuesLike) -> torch.Tensor:
    if isinstance(values, LinearFunctional):
        values = values(mdp.enumeration.states)
    values = as_tensor(values).flatten()
    if values.numel() != mdp.num_states:
        msg = (
            f"Expected a value table with {mdp.num_states} entries, "
            f"but got {values.numel()}."
        )
        raise ValueError(msg)
    return values


def _state_distribution(
    mdp: TabularMDP, state_distribution: Optional[Any]
) -> torch.Tensor:
    if state_distribution is None:
        return torch.full(
            (mdp.num_states,), 1.0 / mdp.num_states, dtype=torch.float64
        )
    return as_tensor(state_distribution).flatten()


def _behavior_table(
    mdp: TabularMDP, policy: Optional[Union[StochasticPolicy, torch.Tensor]]
) -> torch.Tensor:
    if policy is None:
        return torch.full(
            (mdp.num_states, mdp.num_actions),
            1.0 / mdp.num_actions,
            dtype=torch.float64,
        )
    return policy_table(mdp, policy)


def tabular_msbe(
    mdp: TabularMDP,
    values: ValuesLike,
    gamma: float,
    policy: Optional[Union[StochasticPolicy, torch.Tensor]] = None,
    state_distribution: Optional[Any] = None,
    variant: str = "evaluation",
) -> float:
    r"""Population mean squared Bellman error :math:`\sum_s d(s) ((\mathcal{B} V)(s) -
    V(s))^2` computed by exact enumeration.

    Args:
        mdp: Tabular MDP.
        values: Value table or linear model over the enumerated states.
        gamma: Discount factor.
        policy: Policy of the ``"evaluation"`` variant. Defaults to uniform.
        state_distribution: Weights :math:`d(s)`. Defaults to uniform.
        variant: ``"evaluation"`` uses the Bellman evaluation operator of ``policy``,
            ``"optimality"`` the Bellman optimality operator with :math:`\max_a`.
    """
    variant = verify_str_arg(variant, "variant", ("evaluation", "optimality"))
    values = _value_table(mdp, values)
    weights = _state_distribution(mdp, state_distribution)
    q = mdp.expected_reward() + gamma * torch.matmul(mdp.transition, values)
    if variant == "evaluation":
        backup = torch.sum(_behavior_table(mdp, policy) * q, dim=1)
    else:
        backup = torch.max(q, dim=1).values
    return float(torch.sum(weights * (backup - values) ** 2))


class MSBEDecomposition(NamedTuple):
    population_msbe: float
    expected_empirical_msbe: float
    variance_term: float


def double_sampling_decomposition(
    mdp: TabularMDP,
    values: ValuesLike,
    gamma: float,
    policy: Optional[Union[StochasticPolicy, torch.Tensor]] = None,
    state_distribution: Optional[Any] = None,
) -> MSBEDecomposition:
    r"""Exact decomposition of the expected one-sample MSBE

    .. math::

        \mathbb{E}\left[\widehat{\text{MSBE}}\right]
        = \text{MSBE} + \mathbb{E}_s\left[\operatorname{Var}(\hat{\mathcal{B}} V(s) | s)
        \right]

    where :math:`\hat{\mathcal{B}} V(s) = R + \gamma V(S')` is the sampled backup with
    :math:`A \sim \pi(\cdot | s)` and :math:`S' \sim P(\cdot | s, A)`. Minimizing the
    one-sample objective therefore also minimizes the variance term, which vanishes only
    for deterministic transitions.

    Raises:
        RuntimeError: If the identity is violated beyond ``1e-12`` relative to the
            magnitude of the terms.
    """
    values = _value_table(mdp, values)
    weights = _state_distribution(mdp, state_distribution)
    table = _behavior_table(mdp, policy)

    # probability and sampled backup of every (s, a, s')
    probs = table.unsqueeze(2) * mdp.transition
    backups = mdp.successor_reward() + gamma * values.view(1, 1, -1)

    mean_backup = torch.sum(probs * backups, dim=(1, 2))
    residuals = backups - values.view(-1, 1, 1)

    population = float(torch.sum(weights * (mean_backup - values) ** 2))
    expected_empirical = float(
        torch.sum(weights * torch.sum(probs * residuals ** 2, dim=(1, 2)))
    )
    deviations = backups - mean_backup.view(-1, 1, 1)
    variance = float(
        torch.sum(weights * torch.sum(probs * deviations ** 2, dim=(1, 2)))
    )

    scale = max(1.0, abs(expected_empirical))
    if abs(expected_empirical - population - variance) > 1e-12 * scale:
        msg = (
            f"MSBE decomposition violated: {expected_empirical:.17g} != "
            f"{population:.17g} + {variance:.17g}"
        )
        raise RuntimeError(msg)
    return MSBEDecomposition(population, expected_empirical, variance)
