import json
import os
from collections import OrderedDict
from typing import Any, Callable, Dict, NamedTuple, Optional

import torch

import pyregime
from pyregime.core import (
    LinearFunctional,
    SoftmaxPolicy,
    StochasticPolicy,
    basis_from_dict,
)
from pyregime.estimating import GGQModel
from pyregime.pt import PTModel
from pyregime.tabular import BackwardInductionResult, StageRule

from ._config import METHODS, RunConfig, config_hash

__all__ = [
    "TOOL",
    "build_artifact",
    "write_artifact",
    "read_artifact",
    "LoadedModel",
    "load_model",
]

TOOL = "pyregime"

_KEYS = (
    "tool",
    "version",
    "config_hash",
    "method",
    "config",
    "state_dim",
    "num_actions",
    "basis",
    "parameters",
    "diagnostics",
)


def build_artifact(
    config: RunConfig,
    state_dim: int,
    num_actions: int,
    basis: Dict[str, Any],
    parameters: Dict[str, Any],
    diagnostics: Dict[str, Any],
) -> Dict[str, Any]:
    return OrderedDict(
        [
            ("tool", TOOL),
            ("version", pyregime.__version__),
            ("config_hash", config_hash(config)),
            ("method", config.method),
            ("config", config.model_dump(mode="json")),
            ("state_dim", state_dim),
            ("num_actions", num_actions),
            ("basis", basis),
            ("parameters", parameters),
            ("diagnostics", diagnostics),
        ]
    )


def write_artifact(artifact: Dict[str, Any], file: str) -> str:
    r"""Writes the model document with sorted keys, so identical inputs give
    byte-identical files.
    """
    directory = os.path.dirname(file)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(file, "w") as fh:
        fh.write(json.dumps(artifact, sort_keys=True, indent=2))
        fh.write("\n")
    return file


def read_artifact(file: str) -> Dict[str, Any]:
    with open(file, "r") as fh:
        try:
            artifact = json.load(fh)
        except json.JSONDecodeError as error:
            raise ValueError(f"{file} is not a model file: {error}") from error
    if not isinstance(artifact, dict) or artifact.get("tool") != TOOL:
        raise ValueError(f"{file} is not a {TOOL} model file.")
    missing = [key for key in _KEYS if key not in artifact]
    if missing:
        raise ValueError(f"The model file {file} lacks the keys {missing}.")
    if artifact["method"] not in METHODS:
        raise ValueError(f"Unknown method '{artifact['method']}' in {file}.")
    return artifact


class LoadedModel(NamedTuple):
    method: str
    state_dim: int
    num_actions: int
    policy: Optional[StochasticPolicy]
    values: Optional[Callable[[Any], torch.Tensor]]
    pt_model: Optional[PTModel] = None


def _backward_induction(artifact: Dict[str, Any]) -> StochasticPolicy:
    parameters = artifact["parameters"]
    state_basis = (
        None if artifact["basis"] is None else basis_from_dict(artifact["basis"])
    )
    rules = [
        StageRule(
            rule["stage"],
            torch.tensor(rule["theta"], dtype=torch.float64),
            artifact["num_actions"],
            state_basis=state_basis,
            window=parameters["window"],
        )
        for rule in parameters["rules"]
    ]
    return BackwardInductionResult(rules).first_stage_policy()


def load_model(artifact: Dict[str, Any]) -> LoadedModel:
    r"""Rebuilds the fitted model of a model document.

    Value methods (``td_on``, ``td_off`` and ``rg``) have no policy, and the policy
    methods have no value function except for ``vlearn`` and ``pt``.
    """
    method = artifact["method"]
    parameters = artifact["parameters"]
    state_dim = artifact["state_dim"]
    num_actions = artifact["num_actions"]

    if method in ("td_on", "td_off", "rg"):
        basis = basis_from_dict(artifact["basis"])
        model = LinearFunctional(basis, parameters["theta"])
        return LoadedModel(method, state_dim, num_actions, None, model)
    if method == "backward_induction":
        policy = _backward_induction(artifact)
        return LoadedModel(method, state_dim, num_actions, policy, None)
    if method == "ggq":
        policy = GGQModel.from_dict(parameters).greedy_policy()
        return LoadedModel(method, state_dim, num_actions, policy, None)
    if method == "vlearn":
        basis = basis_from_dict(artifact["basis"])
        policy = SoftmaxPolicy(
            basis.with_actions(num_actions), parameters["policy_theta"]
        )
        values = LinearFunctional.from_dict(parameters["value_model"])
        return LoadedModel(method, state_dim, num_actions, policy, values)

    pt_model = PTModel.from_dict(parameters)
    return LoadedModel(
        method,
        state_dim,
        num_actions,
        pt_model.policy(),
        pt_model.values,
        pt_model=pt_model,
    )
