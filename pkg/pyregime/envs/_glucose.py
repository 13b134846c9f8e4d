import math
from collections import OrderedDict
from typing import Any, Dict, Optional, Tuple

import torch

from pyregime.core import EpsilonSoftPolicy, FunctionPolicy, StochasticPolicy
from pyregime.misc import as_tensor, get_generator

from ._env import Environment

__all__ = ["glycemic_reward", "GlucoseEnv"]

GLUCOSE_RANGE = (20.0, 600.0)
TARGET_RANGE = (80.0, 140.0)


def glycemic_reward(glucose: Any) -> torch.Tensor:
    r"""Index of glycemic control

    .. math::

        R(g) = -\frac{1}{30}\left(\mathbb{1}\{g > 140\} |g - 140|^{1.1}
            + \mathbb{1}\{g < 80\} (g - 80)^2\right)

    which vanishes on :math:`[80, 140]` mg/dL and penalizes hypoglycemia harder than
    hyperglycemia.

    Args:
        glucose: Glucose level(s) in mg/dL.

    Raises:
        ValueError: If any glucose level is not finite.
    """
    glucose = as_tensor(glucose)
    if not bool(torch.all(torch.isfinite(glucose))):
        raise ValueError("glucose levels have to be finite")
    low, high = TARGET_RANGE
    hyper = torch.clamp(glucose - high, min=0.0) ** 1.1
    hypo = torch.clamp(low - glucose, min=0.0) ** 2
    return -(hyper + hypo) / 30.0


class GlucoseEnv(Environment):
    r"""Simulated glucose dose finding with the state (glucose in mg/dL, activity,
    carbohydrates in g) and the dose levels :math:`0, \dots, 13` as actions.

    Given the state :math:`(g, u, c)` and the dose level :math:`d` the next glucose
    level is

    .. math::

        g' = g + \beta_c c - \beta_d d - \beta_u u - \kappa (g - g_0) + \epsilon,
        \quad \epsilon \sim \mathcal{N}(0, \sigma^2)

    clipped to :math:`[20, 600]`. Activity and carbohydrates are exogenous: the
    activity is uniform on :math:`[0, u_{\max}]` and a meal with carbohydrates uniform
    on ``meal_carbs`` happens with probability ``meal_prob``. The reward is
    :func:`glycemic_reward` of :math:`g'`.
    """

    def __init__(
        self,
        num_actions: int = 14,
        carb_effect: float = 0.35,
        dose_effect: float = 8.0,
        activity_effect: float = 0.2,
        reversion: float = 0.1,
        setpoint: float = 120.0,
        noise: float = 15.0,
        max_activity: float = 50.0,
        meal_prob: float = 0.3,
        meal_carbs: Tuple[float, float] = (20.0, 100.0),
        initial_mean: float = 150.0,
        initial_std: float = 30.0,
    ) -> None:
        super().__init__(3, num_actions)
        self.carb_effect = float(carb_effect)
        self.dose_effect = float(dose_effect)
        self.activity_effect = float(activity_effect)
        self.reversion = float(reversion)
        self.setpoint = float(setpoint)
        self.noise = float(noise)
        self.max_activity = float(max_activity)
        self.meal_prob = float(meal_prob)
        self.meal_carbs = (float(meal_carbs[0]), float(meal_carbs[1]))
        self.initial_mean = float(initial_mean)
        self.initial_std = float(initial_std)

        if not all(math.isfinite(value) for value in self.parameters().values()):
            raise ValueError("The dynamics parameters have to be finite.")
        if self.noise < 0.0 or self.initial_std < 0.0 or self.max_activity < 0.0:
            raise ValueError("noise, initial_std and max_activity have to be >= 0.")
        if self.dose_effect <= 0.0:
            raise ValueError(f"dose_effect has to be positive, but got {dose_effect}.")
        if not 0.0 <= self.meal_prob <= 1.0:
            raise ValueError(f"meal_prob has to be in [0, 1], but got {meal_prob}.")
        if self.meal_carbs[0] > self.meal_carbs[1]:
            raise ValueError("meal_carbs has to be an interval (low, high).")

    def parameters(self) -> Dict[str, float]:
        dct = OrderedDict(
            (name, getattr(self, name))
            for name in (
                "carb_effect",
                "dose_effect",
                "activity_effect",
                "reversion",
                "setpoint",
                "noise",
                "max_activity",
                "meal_prob",
                "initial_mean",
                "initial_std",
            )
        )
        dct["meal_carbs_low"], dct["meal_carbs_high"] = self.meal_carbs
        return dct

    def _exogenous(
        self, num: int, generator: torch.Generator
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        activity = self.max_activity * torch.rand(
            num, generator=generator, dtype=torch.float64
        )
        meal = torch.rand(num, generator=generator, dtype=torch.float64) < (
            self.meal_prob
        )
        low, high = self.meal_carbs
        carbs = low + (high - low) * torch.rand(
            num, generator=generator, dtype=torch.float64
        )
        return activity, torch.where(meal, carbs, torch.zeros_like(carbs))

    def initial_states(
        self, num: int, generator: Optional[torch.Generator] = None
    ) -> torch.Tensor:
        generator = get_generator(generator)
        glucose = self.initial_mean + self.initial_std * torch.randn(
            num, generator=generator, dtype=torch.float64
        )
        glucose = glucose.clamp(*GLUCOSE_RANGE)
        activity, carbs = self._exogenous(num, generator)
        return torch.stack((glucose, activity, carbs), dim=1)

    def mean_next_glucose(
        self, states: torch.Tensor, doses: torch.Tensor
    ) -> torch.Tensor:
        glucose, activity, carbs = as_tensor(states).unbind(1)
        return (
            glucose
            + self.carb_effect * carbs
            - self.dose_effect * doses.to(torch.float64)
            - self.activity_effect * activity
            - self.reversion * (glucose - self.setpoint)
        )

    def step(
        self,
        states: torch.Tensor,
        actions: torch.Tensor,
        generator: Optional[torch.Generator] = None,
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        generator = get_generator(generator)
        states = as_tensor(states)
        actions = self._check_actions(actions)
        num = states.size(0)

        noise = self.noise * torch.randn(num, generator=generator, dtype=torch.float64)
        glucose = (self.mean_next_glucose(states, actions) + noise).clamp(
            *GLUCOSE_RANGE
        )
        activity, carbs = self._exogenous(num, generator)
        next_states = torch.stack((glucose, activity, carbs), dim=1)
        return next_states, glycemic_reward(glucose)

    @property
    def reward_bound(self) -> float:
        return float(torch.max(torch.abs(glycemic_reward(GLUCOSE_RANGE))))

    def dosing_heuristic(self, target: float = 110.0) -> StochasticPolicy:
        r"""Deterministic policy that picks the dose level whose expected next glucose
        level is closest to ``target``.
        """

        def probs(states: torch.Tensor) -> torch.Tensor:
            zero = torch.zeros(states.size(0), dtype=torch.long)
            excess = self.mean_next_glucose(states, zero) - target
            doses = torch.round(excess / self.dose_effect).clamp(
                0, self.num_actions - 1
            )
            return torch.nn.functional.one_hot(
                doses.to(torch.long), self.num_actions
            ).to(torch.float64)

        return FunctionPolicy(probs, self.num_actions)

    def default_behavior(self) -> StochasticPolicy:
        return EpsilonSoftPolicy(self.dosing_heuristic(), 0.3)

    def _properties(self) -> Dict[str, Any]:
        dct = super()._properties()
        dct.update(self.parameters())
        return dct
