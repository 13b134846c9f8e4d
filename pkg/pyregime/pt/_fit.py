import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import torch
from torch import optim
from torch.optim.optimizer import Optimizer

from pyregime.core import (
    ConvergenceWarning,
    FeatureBasis,
    LinearFunctional,
    OfflineDataset,
    PositivityWarning,
    TabularIndicatorBasis,
    validate_dataset,
)
from pyregime.misc import (
    get_generator,
    suppress_warnings,
    verify_discount,
    verify_str_arg,
)
from pyregime.optim import (
    OptimProgressBar,
    decaying_lr_scheduler,
    default_parameter_optimizer,
    parameter_optimization,
)
from pyregime.tabular import empirical_mdp

from ._kernel import GaussianKernel, KernelSpec
from ._loss import PTObjective, kernel_u_loss
from ._model import PTModel
from ._oracle import proximal_value_iteration
from ._proximity import ProximitySpec
from .functional import proximal_bellman_value

__all__ = ["PTConfig", "PTFitResult", "fit_pt"]


@dataclass(frozen=True)
class PTConfig:
    r"""Configuration of :func:`fit_pt`.

    Args:
        kernel: Kernel configuration.
        optimizer: ``"lbfgs"`` or ``"gd"``, i.e. gradient descent with separate step
            sizes for the value and the action value weights that decay as
            :math:`1 / (1 + \text{decay} \cdot k)`.
        max_iter: Maximum number of optimizer steps. Defaults to ``100`` for
            ``"lbfgs"`` and ``3000`` for ``"gd"``.
        value_lr: Step size of the value weights for ``"gd"``.
        policy_lr: Step size of the action value weights for ``"gd"``.
        decay: Step size decay for ``"gd"``.
        tol: Gradient norm tolerance.
        statistic: Kernel statistic that is minimized, ``"v"`` or ``"u"``. See
            :func:`~pyregime.pt.u_statistic`.
        cross_validate: If ``True`` and the grid has more than one entry, select
            :math:`\lambda` by cross-validation.
        num_folds: Number of trajectory folds.
        seed: Seed of the fold assignment.
        quiet: If ``True``, no progress bars are shown.
    """
    kernel: KernelSpec = field(default_factory=KernelSpec)
    optimizer: str = "lbfgs"
    max_iter: Optional[int] = None
    value_lr: float = 1e-3
    policy_lr: float = 1e-3
    decay: float = 1e-3
    tol: float = 1e-6
    statistic: str = "v"
    cross_validate: bool = True
    num_folds: int = 5
    seed: int = 0
    quiet: bool = True

    def __post_init__(self) -> None:
        verify_str_arg(self.optimizer, "optimizer", ("lbfgs", "gd"))
        verify_str_arg(self.statistic, "statistic", ("u", "v"))
        if self.num_folds < 2:
            msg = f"num_folds has to be at least 2, but got {self.num_folds}."
            raise ValueError(msg)

    @property
    def num_steps(self) -> int:
        if self.max_iter is not None:
            return self.max_iter
        return 100 if self.optimizer == "lbfgs" else 3000


class PTFitResult(NamedTuple):
    model: PTModel
    loss: float
    lam: float
    cv_losses: Dict[float, float]
    converged: bool
    num_steps: int
    loss_terms: Dict[str, float]


def _optimizer_getter(config: PTConfig) -> Any:
    if config.optimizer == "lbfgs":
        return default_parameter_optimizer

    def get_optimizer(params: Sequence[torch.Tensor]) -> Optimizer:
        lrs = (config.value_lr, config.policy_lr)
        return optim.SGD(
            [{"params": [param], "lr": lr} for param, lr in zip(params, lrs)],
            lr=config.value_lr,
        )

    return get_optimizer


def _fitted_proximal_iteration(
    objective: PTObjective, lam: float, max_iter: int = 500, tol: float = 1e-10
) -> Tuple[torch.Tensor, torch.Tensor]:
    r"""Warm start of the joint mode. Alternates the least squares regression of the
    one-sample targets :math:`r + \gamma V(s')` on the observed action value features
    and the least squares projection of the proximal values
    :math:`\max_\pi \langle Q(s, \cdot), \pi \rangle + \lambda \sum_a d(\pi_a)` onto
    the value features.

    The result is compared with the start at :math:`V = 0` and the one with the
    smaller objective is returned.
    """
    num_samples = objective.rewards.numel()
    observed = objective.q_features[torch.arange(num_samples), objective.actions]
    q_solve = torch.linalg.pinv(observed)
    v_solve = torch.linalg.pinv(objective.features)

    def regress(v_theta: torch.Tensor) -> torch.Tensor:
        targets = objective.rewards + objective.gamma * (
            objective.next_features @ v_theta
        )
        return q_solve @ targets

    v_theta = torch.zeros(objective.features.size(1), dtype=torch.float64)
    values = objective.features @ v_theta
    for _ in range(max_iter):
        q_values = objective.q_features @ regress(v_theta)
        new_v_theta = v_solve @ proximal_bellman_value(q_values, lam)
        new_values = objective.features @ new_v_theta
        if not bool(torch.all(torch.isfinite(new_values))):
            v_theta = torch.zeros_like(v_theta)
            break
        change = float(torch.max(torch.abs(new_values - values)))
        v_theta, values = new_v_theta, new_values
        if change <= tol * max(1.0, float(torch.max(torch.abs(values)))):
            break

    zeros = torch.zeros_like(v_theta)
    candidates = [(v_theta, regress(v_theta)), (zeros, regress(zeros))]
    with torch.no_grad():
        return min(candidates, key=lambda params: float(objective(*params).total()))


def _fit_single(
    ds: OfflineDataset,
    basis: FeatureBasis,
    q_basis: Optional[FeatureBasis],
    gamma: float,
    lam: float,
    kernel: GaussianKernel,
    config: PTConfig,
) -> Tuple[PTModel, bool, int, Dict[str, float]]:
    proximity = ProximitySpec(lam)
    params: List[torch.Tensor]
    if q_basis is None:
        assert isinstance(basis, TabularIndicatorBasis)
        empirical = empirical_mdp(ds, basis.enumeration)
        objective = PTObjective(
            ds,
            basis,
            gamma,
            proximity,
            kernel,
            empirical=empirical,
            statistic=config.statistic,
        )
        # warm start at the proximal fixed point of the empirical model
        oracle = proximal_value_iteration(empirical.mdp, gamma, lam)
        cell_features = basis(basis.enumeration.states)
        params = [
            torch.linalg.lstsq(
                cell_features, oracle.values.unsqueeze(1), driver="gelsd"
            ).solution.squeeze(1)
        ]
    else:
        objective = PTObjective(
            ds,
            basis,
            gamma,
            proximity,
            kernel,
            q_basis=q_basis,
            statistic=config.statistic,
        )
        params = list(_fitted_proximal_iteration(objective, lam))

    lr_scheduler = None
    if config.optimizer == "gd":

        def lr_scheduler(optimizer: Optimizer) -> Any:
            return decaying_lr_scheduler(optimizer, config.decay)

    result = parameter_optimization(
        params,
        lambda *thetas: objective(*thetas).total(),
        optimizer=_optimizer_getter(config),
        num_steps=config.num_steps,
        lr_scheduler=lr_scheduler,
        tol=config.tol,
        name=f"pT fit (lambda={lam:g})",
        quiet=config.quiet,
    )

    with torch.no_grad():
        loss_terms = objective(*result.params).to_floats(total="objective")

    v_theta = result.params[0]
    if q_basis is None:
        with torch.no_grad():
            q_table = objective.q_table(v_theta)
        q_model = LinearFunctional(
            basis.with_actions(ds.num_actions), q_table.t().flatten()
        )
    else:
        q_model = LinearFunctional(q_basis, result.params[1])
    model = PTModel(
        LinearFunctional(basis, v_theta), q_model, gamma, proximity, kernel=kernel
    )
    return model, result.converged, result.num_steps, loss_terms


def _cross_validate(
    ds: OfflineDataset,
    basis: FeatureBasis,
    q_basis: Optional[FeatureBasis],
    gamma: float,
    lambda_grid: Sequence[float],
    kernel: GaussianKernel,
    config: PTConfig,
) -> Dict[float, float]:
    num_trajectories = ds.num_trajectories
    if num_trajectories < 2:
        raise ValueError("Cross-validation needs at least two trajectories.")
    num_folds = min(config.num_folds, num_trajectories)
    permutation = torch.randperm(num_trajectories, generator=get_generator(config.seed))
    folds = torch.tensor_split(permutation, num_folds)

    cv_losses: Dict[float, float] = {}
    with OptimProgressBar(
        "Cross-validation", len(lambda_grid) * num_folds, quiet=config.quiet
    ) as progress_bar:
        for lam in lambda_grid:
            losses = []
            for idx, held_out in enumerate(folds):
                train = torch.cat(
                    [fold for jdx, fold in enumerate(folds) if jdx != idx]
                )
                with suppress_warnings(ConvergenceWarning, PositivityWarning):
                    model = _fit_single(
                        ds.subset(train), basis, q_basis, gamma, lam, kernel, config
                    )[0]
                try:
                    loss = kernel_u_loss(model, ds.subset(held_out), kernel)
                except ValueError:
                    # no held-out trajectory with two transitions
                    pass
                else:
                    losses.append(float(loss))
                progress_bar.update()
            cv_losses[lam] = sum(losses) / len(losses) if losses else math.inf
    return cv_losses


def fit_pt(
    ds: OfflineDataset,
    basis: FeatureBasis,
    gamma: float,
    lambda_grid: Sequence[float],
    config: Optional[PTConfig] = None,
    q_basis: Optional[FeatureBasis] = None,
) -> PTFitResult:
    r"""Proximal temporal consistency learning.

    For a :class:`~pyregime.TabularIndicatorBasis` without ``q_basis`` the action
    values are the exact expectations under the empirical model of ``ds`` (tabular
    mode). Otherwise :math:`Q_\lambda` is a linear model on ``q_basis`` (defaults to the
    state-action version of ``basis``) that is fitted jointly (joint mode).

    If ``lambda_grid`` has more than one entry, :math:`\lambda` is selected by the
    held-out U-statistic of a trajectory wise k-fold cross-validation. The returned
    loss is the U-statistic of the fitted model on ``ds``.

    Args:
        ds: Offline dataset.
        basis: State basis of :math:`V_\lambda`.
        gamma: Discount factor. Has to be smaller than one.
        lambda_grid: Candidate regularization strengths.
        config: Optional configuration.
        q_basis: Optional state-action basis of :math:`Q_\lambda`.
    """
    if config is None:
        config = PTConfig()
    gamma = verify_discount(gamma)
    lambda_grid = [float(lam) for lam in lambda_grid]
    if not lambda_grid:
        raise ValueError("lambda_grid has to be non-empty.")
    for lam in lambda_grid:
        ProximitySpec(lam)
    if basis.is_state_action:
        raise ValueError("basis has to be a state basis.")
    if q_basis is None and not isinstance(basis, TabularIndicatorBasis):
        q_basis = basis.with_actions(ds.num_actions)
    validate_dataset(ds)

    batch = ds.transitions()
    kernel = config.kernel.fit(batch.states, batch.actions, ds.num_actions)

    cv_losses: Dict[float, float] = {}
    lam = lambda_grid[0]
    if len(lambda_grid) > 1 and config.cross_validate:
        cv_losses = _cross_validate(
            ds, basis, q_basis, gamma, lambda_grid, kernel, config
        )
        # ties go to the earlier grid entry
        lam = min(lambda_grid, key=lambda candidate: cv_losses[candidate])

    model, converged, num_steps, loss_terms = _fit_single(
        ds, basis, q_basis, gamma, lam, kernel, config
    )
    loss = float(kernel_u_loss(model, ds, kernel))
    return PTFitResult(model, loss, lam, cv_losses, converged, num_steps, loss_terms)
