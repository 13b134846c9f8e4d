from typing import Any, Dict, Optional, Tuple

import torch

import pyregime
from pyregime.core import FeatureBasis, OfflineDataset
from pyregime.misc import verify_str_arg
from pyregime.tabular import EmpiricalMDP

from ._kernel import GaussianKernel, KernelSpec
from ._model import PTModel, pt_errors
from ._proximity import ProximitySpec

__all__ = [
    "u_statistic",
    "pair_weights",
    "quadratic_form",
    "kernel_u_loss",
    "PTObjective",
]


def u_statistic(
    errors: torch.Tensor,
    embeddings: torch.Tensor,
    trajectory_ids: torch.Tensor,
    stages: torch.Tensor,
    kernel: GaussianKernel,
    statistic: str = "u",
) -> torch.Tensor:
    r"""Trajectory based kernel quadratic form of the errors.

    For every trajectory the kernel weighted products
    :math:`e_i K(z_i, z_j) e_j` are averaged over the ordered pairs :math:`i \ne j` of
    its transitions (``statistic="u"``) or over all pairs including :math:`i = j`
    (``statistic="v"``). The result is the mean over the trajectories.

    The U-statistic is unbiased but can be negative. The V-statistic is a positive
    semi-definite quadratic form and thus bounded from below.

    Raises:
        ValueError: If ``statistic="u"`` and no trajectory has at least two
            transitions.
    """
    traj_idcs, weights = pair_weights(
        embeddings, trajectory_ids, stages, kernel, statistic=statistic
    )
    return quadratic_form(errors, traj_idcs, stages, weights)


def pair_weights(
    embeddings: torch.Tensor,
    trajectory_ids: torch.Tensor,
    stages: torch.Tensor,
    kernel: GaussianKernel,
    statistic: str = "u",
) -> Tuple[torch.Tensor, torch.Tensor]:
    r"""Weights of the error products in :func:`u_statistic`. They only depend on the
    embedded inputs and can be reused for any errors on the same transitions.

    Returns:
        Trajectory index of every transition and the weights of shape
        :math:`(N, H, H)` for :math:`N` trajectories of at most :math:`H` transitions.
    """
    statistic = verify_str_arg(statistic, "statistic", ("u", "v"))
    _, traj_idcs = torch.unique(trajectory_ids, return_inverse=True)
    lengths = torch.bincount(traj_idcs)
    num_trajectories = int(lengths.numel())
    horizon = int(lengths.max())

    padded_embeddings = embeddings.new_zeros(
        (num_trajectories, horizon, embeddings.size(-1))
    )
    padded_embeddings[traj_idcs, stages] = embeddings
    valid = torch.zeros(
        (num_trajectories, horizon), dtype=torch.bool, device=embeddings.device
    )
    valid[traj_idcs, stages] = True

    mask = valid.unsqueeze(2) & valid.unsqueeze(1)
    if statistic == "u":
        mask = mask & ~torch.eye(horizon).bool().unsqueeze(0)
        num_pairs = lengths * (lengths - 1)
        usable = lengths >= 2
        if not bool(torch.any(usable)):
            msg = (
                "The U-statistic needs at least one trajectory with two or more "
                "transitions."
            )
            raise ValueError(msg)
    else:
        num_pairs = lengths ** 2
        usable = lengths >= 1

    # every usable trajectory contributes the mean over its pairs
    scale = torch.where(
        usable,
        1.0 / num_pairs.clamp_min(1).to(embeddings.dtype),
        torch.zeros((), dtype=embeddings.dtype),
    ) / int(usable.sum())
    gram = kernel.gram(padded_embeddings, padded_embeddings)
    weights = gram * mask * scale.view(-1, 1, 1)
    return traj_idcs, weights


def quadratic_form(
    errors: torch.Tensor,
    traj_idcs: torch.Tensor,
    stages: torch.Tensor,
    weights: torch.Tensor,
) -> torch.Tensor:
    r""":math:`\sum_n \sum_{i, j} e_{n i} W_{n i j} e_{n j}` of the errors padded per
    trajectory. See :func:`pair_weights`.
    """
    padded_errors = errors.new_zeros(weights.size()[:2])
    padded_errors = padded_errors.index_put((traj_idcs, stages), errors)
    return torch.einsum("ni,nij,nj->", padded_errors, weights, padded_errors)


def kernel_u_loss(
    model: PTModel,
    ds: OfflineDataset,
    kernel: Optional[GaussianKernel] = None,
    statistic: str = "u",
) -> torch.Tensor:
    r"""Kernel embedded loss of the temporal consistency errors of ``model`` on ``ds``.
    See :func:`u_statistic` for details.

    Args:
        model: Proximal temporal consistency model.
        ds: Offline dataset.
        kernel: Optional fitted kernel. Defaults to the kernel of ``model`` or, if it
            has none, to the median heuristic on ``ds``.
        statistic: ``"u"`` (default) or ``"v"``.
    """
    batch = ds.transitions()
    if kernel is None:
        kernel = model.kernel
    if kernel is None:
        kernel = KernelSpec().fit(batch.states, batch.actions, ds.num_actions)
    errors = pt_errors(
        model.q_values(batch.states),
        batch.actions,
        batch.rewards,
        model.values(batch.states),
        model.values(batch.next_states),
        model.gamma,
        model.proximity,
    )
    return u_statistic(
        errors,
        kernel.embed(batch.states, batch.actions),
        batch.trajectory_ids,
        batch.stages,
        kernel,
        statistic=statistic,
    )


class PTObjective(pyregime.Module):
    r"""Fitting objective of proximal temporal consistency learning as a function of
    the value weights and, in joint mode, the action value weights.

    In tabular mode the action values are the exact expectations
    :math:`Q_\lambda = \hat{r} + \gamma \hat{P} V_\lambda` under the empirical model
    and the objective is the kernel statistic of the temporal consistency errors.
    Otherwise :math:`Q_\lambda` has its own weights and the objective additionally
    contains the kernel statistic of the action value errors
    :math:`r + \gamma V_\lambda(s') - Q_\lambda(s, a)`.

    Args:
        ds: Offline dataset.
        v_basis: State basis of :math:`V_\lambda`.
        gamma: Discount factor.
        proximity: Proximity configuration.
        kernel: Fitted kernel.
        empirical: Empirical MDP. Selects tabular mode.
        q_basis: State-action basis of :math:`Q_\lambda`. Selects joint mode.
        statistic: ``"u"`` or ``"v"``. See :func:`u_statistic`.
    """

    def __init__(
        self,
        ds: OfflineDataset,
        v_basis: FeatureBasis,
        gamma: float,
        proximity: ProximitySpec,
        kernel: GaussianKernel,
        empirical: Optional[EmpiricalMDP] = None,
        q_basis: Optional[FeatureBasis] = None,
        statistic: str = "v",
    ) -> None:
        super().__init__()
        if (empirical is None) == (q_basis is None):
            raise ValueError("Exactly one of empirical and q_basis has to be given.")
        self.gamma = gamma
        self.proximity = proximity
        self.kernel = kernel
        self.empirical = empirical
        self.q_basis = q_basis
        self.statistic = verify_str_arg(statistic, "statistic", ("u", "v"))

        batch = ds.transitions()
        traj_idcs, weights = pair_weights(
            kernel.embed(batch.states, batch.actions),
            batch.trajectory_ids,
            batch.stages,
            kernel,
            statistic=self.statistic,
        )
        self.register_data(
            rewards=batch.rewards,
            actions=batch.actions,
            traj_idcs=traj_idcs,
            stages=batch.stages,
            pair_weights=weights,
            features=v_basis(batch.states),
            next_features=v_basis(batch.next_states),
        )
        if empirical is not None:
            enumeration = empirical.mdp.enumeration
            self.register_data(
                cells=enumeration.cells(batch.states),
                cell_features=v_basis(enumeration.states),
            )
        else:
            assert q_basis is not None
            self.register_data(q_features=q_basis.all_actions(batch.states))

    @property
    def is_tabular(self) -> bool:
        return self.empirical is not None

    def q_table(self, v_theta: torch.Tensor) -> torch.Tensor:
        r"""Exact action values :math:`\hat{r} + \gamma \hat{P} V_\lambda` of all cells
        of the empirical model, shape :math:`(S, A)`.
        """
        assert self.empirical is not None
        mdp = self.empirical.mdp
        cell_values = self.cell_features @ v_theta
        return mdp.expected_reward() + self.gamma * torch.matmul(
            mdp.transition, cell_values
        )

    def _statistic(self, errors: torch.Tensor) -> torch.Tensor:
        return quadratic_form(errors, self.traj_idcs, self.stages, self.pair_weights)

    def forward(
        self, v_theta: torch.Tensor, q_theta: Optional[torch.Tensor] = None
    ) -> pyregime.LossDict:
        values = self.features @ v_theta
        next_values = self.next_features @ v_theta
        if self.is_tabular:
            q_values = self.q_table(v_theta)[self.cells]
        else:
            if q_theta is None:
                raise ValueError("Joint mode needs the action value weights.")
            q_values = self.q_features @ q_theta

        losses = pyregime.LossDict()
        losses["temporal_consistency"] = self._statistic(
            pt_errors(
                q_values,
                self.actions,
                self.rewards,
                values,
                next_values,
                self.gamma,
                self.proximity,
            )
        )
        if not self.is_tabular:
            observed = q_values.gather(1, self.actions.unsqueeze(1)).squeeze(1)
            losses["action_value"] = self._statistic(
                self.rewards + self.gamma * next_values - observed
            )
        return losses

    def _properties(self) -> Dict[str, Any]:
        dct = super()._properties()
        dct["mode"] = "tabular" if self.is_tabular else "joint"
        dct["lam"] = self.proximity.lam
        dct["statistic"] = self.statistic
        return dct
