import hashlib
import json
from typing import Any, Dict, FrozenSet, List, Literal, Mapping, Optional, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    PositiveFloat,
    PositiveInt,
    field_validator,
    model_validator,
)

__all__ = [
    "METHODS",
    "RunConfig",
    "parse_config_file",
    "load_config",
    "config_hash",
]

METHODS = ("backward_induction", "td_on", "td_off", "rg", "ggq", "vlearn", "pt")

# knobs that only make sense for some methods
_METHOD_KEYS: Dict[str, FrozenSet[str]] = {
    "lambda_grid": frozenset({"pt"}),
    "bandwidth": frozenset({"pt"}),
    "zeta": frozenset({"pt"}),
    "cv": frozenset({"pt"}),
    "num_folds": frozenset({"pt"}),
    "optimizer": frozenset({"pt"}),
    "value_lr": frozenset({"pt"}),
    "policy_lr": frozenset({"pt"}),
    "decay": frozenset({"pt"}),
    "step_size": frozenset({"td_on", "td_off"}),
    "epochs": frozenset({"td_on", "td_off"}),
    "cap": frozenset({"td_off"}),
    "propensity": frozenset({"td_off", "vlearn"}),
    "floor": frozenset({"td_off", "vlearn"}),
    "damping": frozenset({"ggq"}),
    "window": frozenset({"backward_induction"}),
}


class RunConfig(BaseModel):
    r"""Resolved configuration of a command line run.

    Unknown keys are rejected. Method specific knobs that are set explicitly for
    another method are rejected as well, e.g. a ``lambda_grid`` with
    ``method=td_on``.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    method: Literal[
        "backward_induction", "td_on", "td_off", "rg", "ggq", "vlearn", "pt"
    ] = "pt"
    gamma: float = 0.9
    seed: int = 0
    n_trajectories: Optional[PositiveInt] = None
    stages: Optional[PositiveInt] = None
    num_actions: Optional[PositiveInt] = None

    basis: Literal["tabular", "polynomial", "ordinal", "radial"] = "ordinal"
    degree: int = Field(default=2, ge=0)
    num_centers: PositiveInt = 3

    max_iter: Optional[PositiveInt] = None
    tol: Optional[PositiveFloat] = None

    lambda_grid: List[PositiveFloat] = Field(
        default_factory=lambda: [0.1, 0.5, 1.0], min_length=1
    )
    bandwidth: Union[Literal["median"], PositiveFloat] = "median"
    zeta: PositiveFloat = 1.0
    cv: bool = True
    num_folds: int = Field(default=5, ge=2)
    optimizer: Literal["lbfgs", "gd"] = "lbfgs"
    value_lr: PositiveFloat = 1e-3
    policy_lr: PositiveFloat = 1e-3
    decay: NonNegativeFloat = 1e-3

    step_size: Optional[PositiveFloat] = None
    epochs: PositiveInt = 1
    cap: PositiveFloat = 100.0
    propensity: Literal["empirical", "logistic"] = "logistic"
    floor: NonNegativeFloat = 0.01
    damping: float = Field(default=0.5, gt=0.0, le=1.0)
    window: Optional[PositiveInt] = None

    env: Literal["glucose", "chain"] = "glucose"
    chain_states: int = Field(default=5, ge=2)
    chain_success: float = Field(default=0.9, ge=0.0, le=1.0)
    carb_effect: float = 0.35
    dose_effect: PositiveFloat = 8.0
    activity_effect: float = 0.2
    reversion: float = 0.1
    noise: NonNegativeFloat = 15.0
    meal_prob: float = Field(default=0.3, ge=0.0, le=1.0)
    behavior_epsilon: float = Field(default=0.3, ge=0.0, le=1.0)
    m: PositiveInt = 1000

    @field_validator("lambda_grid", mode="before")
    @classmethod
    def _split_list(cls, value: Any) -> Any:
        if isinstance(value, str):
            return [item.strip() for item in value.split(",") if item.strip()]
        return value

    @field_validator("window", mode="before")
    @classmethod
    def _full_window(cls, value: Any) -> Any:
        # the full history
        if isinstance(value, str) and value.strip().lower() in {"full", "none"}:
            return None
        return value

    @model_validator(mode="after")
    def _check_method(self) -> "RunConfig":
        upper_ok = self.method == "backward_induction"
        if not (0.0 <= self.gamma < 1.0 or (upper_ok and self.gamma == 1.0)):
            interval = "[0, 1]" if upper_ok else "[0, 1)"
            msg = (
                f"gamma has to be in {interval} for method={self.method}, "
                f"but got {self.gamma}."
            )
            raise ValueError(msg)
        for key in sorted(self.model_fields_set):
            methods = _METHOD_KEYS.get(key)
            if methods is not None and self.method not in methods:
                msg = f"{key} is not valid for method={self.method}."
                raise ValueError(msg)
        return self


def parse_config_file(file: str) -> Dict[str, str]:
    r"""Reads a flat ``key=value`` file. Blank lines and everything after ``#`` are
    ignored.
    """
    values: Dict[str, str] = {}
    with open(file, "r") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                msg = f"Expected 'key=value' in {file} at line {lineno}, got '{line}'."
                raise ValueError(msg)
            key, value = (part.strip() for part in line.split("=", 1))
            if key in values:
                raise ValueError(f"Duplicate key '{key}' in {file} at line {lineno}.")
            values[key] = value
    return values


def load_config(
    file: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None
) -> RunConfig:
    r"""Merges the config file and the command line overrides, which take precedence.
    Overrides that are ``None`` are ignored.
    """
    values: Dict[str, Any] = {} if file is None else dict(parse_config_file(file))
    if overrides:
        values.update(
            {key: value for key, value in overrides.items() if value is not None}
        )
    return RunConfig.model_validate(values)


def config_hash(config: RunConfig) -> str:
    r"""First 16 hex digits of the SHA-256 of the canonical JSON of ``config``."""
    canonical = json.dumps(
        config.model_dump(mode="json"), sort_keys=True, separators=(",", ":")
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
