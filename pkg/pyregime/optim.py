import sys
import warnings
from abc import ABC, abstractmethod
from typing import (
    Any,
    Callable,
    Iterable,
    List,
    NamedTuple,
    Optional,
    Sequence,
    Union,
)

from tqdm.auto import tqdm

import torch
from torch import optim
from torch.optim.lr_scheduler import LambdaLR
from torch.optim.optimizer import Optimizer

import pyregime

__all__ = [
    "OptimProgressBar",
    "StepSchedule",
    "ConstantStep",
    "RobbinsMonroStep",
    "default_step_schedule",
    "as_step_schedule",
    "default_parameter_optimizer",
    "decaying_lr_scheduler",
    "OptimizationResult",
    "parameter_optimization",
]


class OptimProgressBar(tqdm):
    def __init__(
        self,
        name: str,
        total_or_iterable: Union[int, Iterable],
        quiet: bool = False,
        **kwargs: Any,
    ) -> None:
        iterable = (
            range(total_or_iterable)
            if isinstance(total_or_iterable, int)
            else total_or_iterable
        )
        super().__init__(
            desc=name, iterable=iterable, disable=quiet, file=sys.stderr, **kwargs,
        )

    def update(
        self, n: int = 1, loss: Optional[Union[float, pyregime.LossDict]] = None
    ) -> None:
        if loss is not None:
            self.set_postfix(loss=f"{float(loss):.3e}", refresh=False)
        super().update(n)


class StepSchedule(ABC):
    r"""Step size :math:`\alpha_k` of the ``k``-th update, starting at ``k = 0``."""

    @abstractmethod
    def __call__(self, step: int) -> float:
        pass

    def __repr__(self) -> str:
        props = ", ".join(f"{key}={value}" for key, value in vars(self).items())
        return f"{type(self).__name__}({props})"


class ConstantStep(StepSchedule):
    def __init__(self, alpha: float) -> None:
        if alpha <= 0.0:
            raise ValueError(f"The step size has to be positive, but got {alpha}.")
        self.alpha = float(alpha)

    def __call__(self, step: int) -> float:
        return self.alpha


class RobbinsMonroStep(StepSchedule):
    r""":math:`\alpha_k = a / (k + b)`, which satisfies :math:`\sum_k \alpha_k = \infty`
    and :math:`\sum_k \alpha_k^2 < \infty`.
    """

    def __init__(self, a: float, b: float) -> None:
        if a <= 0.0 or b <= 0.0:
            raise ValueError("a and b have to be positive.")
        self.a = float(a)
        self.b = float(b)

    def __call__(self, step: int) -> float:
        return self.a / (step + self.b)


def default_step_schedule() -> RobbinsMonroStep:
    r""":math:`\alpha_k = 0.5 / (1 + k / 1000)`."""
    return RobbinsMonroStep(500.0, 1000.0)


def as_step_schedule(
    schedule: Optional[Union[float, StepSchedule]]
) -> StepSchedule:
    if schedule is None:
        return default_step_schedule()
    if isinstance(schedule, StepSchedule):
        return schedule
    return ConstantStep(float(schedule))


def default_parameter_optimizer(params: Sequence[torch.Tensor]) -> optim.LBFGS:
    r"""
    Args:
        params: Parameters to be optimized.

    Returns:
        :class:`torch.optim.LBFGS` optimizer with a learning rate of ``1.0`` and a
        strong Wolfe line search.
    """
    return optim.LBFGS(
        params,
        lr=1.0,
        max_iter=20,
        history_size=20,
        tolerance_grad=1e-12,
        tolerance_change=1e-15,
        line_search_fn="strong_wolfe",
    )


def decaying_lr_scheduler(optimizer: Optimizer, decay: float) -> LambdaLR:
    r"""Scales the initial learning rates by :math:`1 / (1 + \text{decay} \cdot k)`."""
    return LambdaLR(optimizer, lambda step: 1.0 / (1.0 + decay * step))


class OptimizationResult(NamedTuple):
    params: List[torch.Tensor]
    loss: float
    grad_norm: float
    num_steps: int
    converged: bool


def parameter_optimization(
    params: Sequence[torch.Tensor],
    criterion: Callable[..., torch.Tensor],
    optimizer: Optional[
        Union[Optimizer, Callable[[Sequence[torch.Tensor]], Optimizer]]
    ] = None,
    num_steps: int = 500,
    lr_scheduler: Optional[Callable[[Optimizer], Any]] = None,
    tol: float = 1e-8,
    name: str = "Parameter optimization",
    quiet: bool = True,
    warn: bool = True,
) -> OptimizationResult:
    r"""Minimize ``criterion(*params)`` with integrated progress reporting.

    Every evaluation of the criterion is tracked and the parameters with the lowest
    finite loss are returned. The optimization stops early once the gradient norm at
    the best evaluated point is at most ``tol``.

    Args:
        params: Initial parameters. They are copied and not modified in-place.
        criterion: Callable that maps the parameters to a scalar loss.
        optimizer: Optional optimizer getter. If omitted,
            :func:`default_parameter_optimizer` is used.
        num_steps: Maximum number of optimizer steps. Defaults to ``500``.
        lr_scheduler: Optional getter for a learning rate scheduler. ``step()`` is
            invoked after every optimizer step.
        tol: Gradient norm tolerance.
        name: Description of the progress bar.
        quiet: If ``True``, no progress bar is shown. Defaults to ``True``.
        warn: If ``True``, a :class:`~pyregime.ConvergenceWarning` is emitted if the
            tolerance is not reached.
    """
    if optimizer is None:
        optimizer = default_parameter_optimizer
    params = [param.detach().clone().requires_grad_(True) for param in params]
    if isinstance(optimizer, Optimizer):
        msg = "optimizer has to be passed as getter, since the parameters are copied."
        raise RuntimeError(msg)
    optimizer = optimizer(params)
    scheduler = lr_scheduler(optimizer) if lr_scheduler is not None else None

    best_loss = float("inf")
    best_grad_norm = float("inf")
    best_params = [param.detach().clone() for param in params]
    converged = False

    def closure() -> torch.Tensor:
        nonlocal best_loss, best_grad_norm, best_params, converged
        optimizer.zero_grad()  # type: ignore[union-attr]
        loss = criterion(*params)
        loss.backward()

        value = float(loss.detach())
        grads = [param.grad for param in params if param.grad is not None]
        grad_norm = float(torch.sqrt(sum(torch.sum(grad ** 2) for grad in grads)))
        if value < best_loss or (value == best_loss and grad_norm < best_grad_norm):
            best_loss = value
            best_grad_norm = grad_norm
            best_params = [param.detach().clone() for param in params]
            converged = grad_norm <= tol
        return loss

    step = 0
    last_best = float("inf")
    with OptimProgressBar(name, num_steps, quiet=quiet) as progress_bar:
        for step in range(1, num_steps + 1):
            loss = optimizer.step(closure)
            if scheduler is not None:
                scheduler.step()
            progress_bar.update(loss=float(loss.detach()))

            if converged:
                break
            # LBFGS stalled
            if isinstance(optimizer, optim.LBFGS) and best_loss >= last_best:
                break
            last_best = best_loss
            if not torch.isfinite(loss):
                break
            if not all(bool(torch.all(torch.isfinite(p))) for p in params):
                break

    if not converged:
        # the final iterate has not been evaluated yet
        closure()

    if warn and not converged:
        msg = (
            f"{name} did not reach a gradient norm of {tol:.1e} in {step} steps. "
            f"Returning the best iterate with loss {best_loss:.3e} and gradient norm "
            f"{best_grad_norm:.3e}."
        )
        warnings.warn(msg, pyregime.ConvergenceWarning)

    return OptimizationResult(best_params, best_loss, best_grad_norm, step, converged)
