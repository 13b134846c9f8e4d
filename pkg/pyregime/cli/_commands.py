import argparse
import json
import os
import sys
import warnings
from collections import OrderedDict
from typing import Any, Dict, List, Optional, Tuple, cast

import pandas as pd

import torch

import pyregime
from pyregime.core import (
    EpsilonSoftPolicy,
    FeatureBasis,
    OfflineDataset,
    OrdinalPolynomialBasis,
    PolynomialBasis,
    RadialGridBasis,
    SoftmaxPolicy,
    StateEnumeration,
    StochasticPolicy,
    TabularIndicatorBasis,
    UniformPolicy,
    ValidationReport,
    argmax_lowest,
    home,
    validate_dataset,
)
from pyregime.envs import (
    ChainEnv,
    Environment,
    GlucoseEnv,
    generate_dataset,
    mc_value,
)
from pyregime.estimating import (
    GGQConfig,
    SoftmaxPolicyClass,
    estimate_propensity,
    solve_ggq,
    solve_vlearning,
)
from pyregime.misc import as_tensor, get_generator
from pyregime.pt import KernelSpec, PTConfig, fit_pt, value_lower_bound
from pyregime.pt import predict as pt_predict
from pyregime.residual import empirical_msbe, fit_rg
from pyregime.tabular import backward_induction, chain_mdp
from pyregime.td import run_td

from ._artifact import TOOL, build_artifact, load_model, read_artifact, write_artifact
from ._config import RunConfig, config_hash, load_config
from ._io import StackedData, read_stacked, write_stacked

__all__ = [
    "ingest",
    "build_basis",
    "build_env",
    "fit_model",
    "validate",
    "fit",
    "predict",
    "evaluate",
    "simulate",
    "export",
]


def _config(args: argparse.Namespace) -> RunConfig:
    overrides = {
        "seed": args.seed,
        "n_trajectories": args.n,
        "stages": args.stages,
        "num_actions": args.num_actions,
        "m": getattr(args, "m", None),
    }
    return load_config(args.config, overrides)


def _header(config: RunConfig) -> Dict[str, Any]:
    return OrderedDict(
        [
            ("tool", TOOL),
            ("version", pyregime.__version__),
            ("config_hash", config_hash(config)),
        ]
    )


def _emit(record: Dict[str, Any]) -> None:
    print(json.dumps(record, sort_keys=True))


def _output(args: argparse.Namespace, default: str) -> str:
    file = args.out if args.out is not None else os.path.join(home(), default)
    directory = os.path.dirname(file)
    if directory:
        os.makedirs(directory, exist_ok=True)
    return file


def ingest(
    states_file: str,
    actions_file: str,
    rewards_file: str,
    n: Optional[int] = None,
    stages: Optional[int] = None,
    num_actions: Optional[int] = None,
) -> Tuple[StackedData, ValidationReport]:
    r"""Reads a stacked dataset and validates it. See
    :func:`~pyregime.cli.read_stacked` for the layout.
    """
    data = read_stacked(
        states_file, actions_file, rewards_file, n, stages, num_actions=num_actions
    )
    return data, validate_dataset(data.dataset)


def _ingest(
    args: argparse.Namespace, config: RunConfig
) -> Tuple[StackedData, ValidationReport]:
    if args.data is None or args.actions is None or args.rewards is None:
        raise ValueError("--data, --actions and --rewards are required.")
    return ingest(
        args.data,
        args.actions,
        args.rewards,
        config.n_trajectories,
        config.stages,
        num_actions=config.num_actions,
    )


def build_basis(config: RunConfig, ds: OfflineDataset) -> FeatureBasis:
    r"""State basis fixed from the states of ``ds``."""
    batch = ds.transitions()
    states = torch.cat((batch.states, batch.next_states))
    if config.basis == "tabular":
        return TabularIndicatorBasis(StateEnumeration.from_states(states))
    if config.basis == "radial":
        return RadialGridBasis.from_quantiles(states, config.num_centers)
    if config.basis == "ordinal":
        return OrdinalPolynomialBasis.standardized(states, config.degree)
    return PolynomialBasis.standardized(states, config.degree)


def build_env(config: RunConfig) -> Environment:
    if config.env == "chain":
        return ChainEnv(chain_mdp(config.chain_states, success=config.chain_success))
    return GlucoseEnv(
        carb_effect=config.carb_effect,
        dose_effect=config.dose_effect,
        activity_effect=config.activity_effect,
        reversion=config.reversion,
        noise=config.noise,
        meal_prob=config.meal_prob,
    )


def _behavior(env: Environment, config: RunConfig) -> StochasticPolicy:
    if isinstance(env, GlucoseEnv):
        return EpsilonSoftPolicy(env.dosing_heuristic(), config.behavior_epsilon)
    return env.default_behavior()


def _given(**kwargs: Any) -> Dict[str, Any]:
    return {key: value for key, value in kwargs.items() if value is not None}


def _propensity(
    config: RunConfig, ds: OfflineDataset, basis: FeatureBasis, quiet: bool
) -> StochasticPolicy:
    if config.propensity == "empirical":
        enumeration = (
            basis.enumeration if isinstance(basis, TabularIndicatorBasis) else None
        )
        return estimate_propensity(
            ds, kind="empirical", floor=config.floor, enumeration=enumeration
        )
    return estimate_propensity(ds, kind="logistic", floor=config.floor, quiet=quiet)


def fit_model(
    config: RunConfig, ds: OfflineDataset, basis: FeatureBasis, quiet: bool = True
) -> Tuple[Dict[str, Any], Dict[str, Any]]:
    r"""Dispatches to the estimator selected by ``config.method``.

    Returns:
        Fitted parameters and fit diagnostics as JSON compatible dictionaries.
    """
    method = config.method
    gamma = config.gamma

    if method == "backward_induction":
        result = backward_induction(
            ds,
            horizon=config.stages,
            state_basis=basis,
            window=config.window,
            gamma=gamma,
        )
        parameters = OrderedDict(
            [
                ("window", config.window),
                ("rules", [rule.to_dict() for rule in result.rules]),
            ]
        )
        return parameters, {"num_stages": len(result.rules)}

    if method in ("td_on", "td_off"):
        target: Optional[StochasticPolicy] = None
        behavior: Optional[StochasticPolicy] = None
        if method == "td_off":
            target = UniformPolicy(ds.num_actions)
            behavior = _propensity(config, ds, basis, quiet)
        state = run_td(
            ds,
            basis,
            gamma,
            schedule=config.step_size,
            target=target,
            behavior=behavior,
            epochs=config.epochs,
            cap=config.cap,
            quiet=quiet,
        )
        diagnostics = OrderedDict(
            [
                ("num_updates", state.step),
                ("clip_events", state.clip_events),
                ("msbe", empirical_msbe(state.model, ds, gamma)),
            ]
        )
        return {"theta": state.theta.tolist()}, diagnostics

    if method == "rg":
        rg_result = fit_rg(
            ds,
            basis,
            gamma,
            quiet=quiet,
            **_given(max_iter=config.max_iter, tol=config.tol),
        )
        diagnostics = OrderedDict(
            [
                ("msbe", rg_result.msbe),
                ("grad_norm", rg_result.grad_norm),
                ("num_iter", rg_result.num_iter),
                ("converged", rg_result.converged),
            ]
        )
        return {"theta": rg_result.model.theta.tolist()}, diagnostics

    if method == "ggq":
        ggq_config = GGQConfig(
            damping=config.damping,
            **_given(max_iter=config.max_iter, tol=config.tol),
        )
        ggq_result = solve_ggq(ds, basis, gamma, ggq_config, quiet=quiet)
        diagnostics = OrderedDict(
            [
                ("residual_norm", ggq_result.residual_norm),
                ("num_iter", ggq_result.num_iter),
                ("converged", ggq_result.converged),
            ]
        )
        return dict(ggq_result.model.to_dict()), diagnostics

    if method == "vlearn":
        propensity = _propensity(config, ds, basis, quiet)
        policy_class = SoftmaxPolicyClass(basis.with_actions(ds.num_actions))
        vl_result = solve_vlearning(
            ds, policy_class, basis, gamma, propensity, quiet=quiet
        )
        policy = cast(SoftmaxPolicy, vl_result.policy)
        parameters = OrderedDict(
            [
                ("value_model", vl_result.model.to_dict()),
                ("policy_theta", policy.theta.tolist()),
            ]
        )
        return parameters, {"value": vl_result.value}

    pt_config = PTConfig(
        kernel=KernelSpec(bandwidth=config.bandwidth, zeta=config.zeta),
        optimizer=config.optimizer,
        max_iter=config.max_iter,
        value_lr=config.value_lr,
        policy_lr=config.policy_lr,
        decay=config.decay,
        cross_validate=config.cv,
        num_folds=config.num_folds,
        seed=config.seed,
        quiet=quiet,
        **_given(tol=config.tol),
    )
    pt_result = fit_pt(ds, basis, gamma, config.lambda_grid, pt_config)
    cv_losses = pt_result.cv_losses
    diagnostics = OrderedDict(
        [
            ("loss", pt_result.loss),
            ("lambda", pt_result.lam),
            ("cv_losses", {repr(lam): loss for lam, loss in cv_losses.items()}),
            ("converged", pt_result.converged),
            ("num_steps", pt_result.num_steps),
            ("loss_terms", pt_result.loss_terms),
        ]
    )
    return dict(pt_result.model.to_dict()), diagnostics


def validate(args: argparse.Namespace) -> None:
    config = _config(args)
    data, report = _ingest(args, config)
    record = _header(config)
    record["num_trajectories"] = data.dataset.num_trajectories
    record["num_transitions"] = data.dataset.num_transitions
    record["report"] = report.to_dict()
    _emit(record)


def fit(args: argparse.Namespace) -> None:
    config = _config(args)
    ds = _ingest(args, config)[0].dataset
    basis = build_basis(config, ds)

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        parameters, diagnostics = fit_model(config, ds, basis, quiet=not args.verbose)
    diagnostics["warnings"] = [
        f"{warning.category.__name__}: {warning.message}" for warning in caught
    ]

    artifact = build_artifact(
        config,
        ds.state_dim,
        ds.num_actions,
        basis.to_dict(),
        parameters,
        diagnostics,
    )
    file = write_artifact(artifact, _output(args, "model.json"))
    for warning in caught:
        warnings.warn(str(warning.message), warning.category)

    record = _header(config)
    record["method"] = config.method
    record["model"] = file
    _emit(record)


def _parse_state(state: str) -> torch.Tensor:
    try:
        values = [float(value) for value in state.split(",") if value.strip()]
    except ValueError as error:
        raise ValueError(f"--state has to be comma separated numbers: {error}")
    return as_tensor(values)


def predict(args: argparse.Namespace) -> None:
    r"""Treatment probabilities and the recommended treatment of a single state. The
    recommended treatment is reported 1-based.
    """
    if args.model is None or args.state is None:
        raise ValueError("--model and --state are required.")
    artifact = read_artifact(args.model)
    loaded = load_model(artifact)
    state = _parse_state(args.state)
    if state.numel() != loaded.state_dim:
        msg = (
            f"The state has dimension {state.numel()}, but the model expects "
            f"{loaded.state_dim}."
        )
        raise ValueError(msg)

    record: Dict[str, Any] = OrderedDict(
        [
            ("tool", TOOL),
            ("version", pyregime.__version__),
            ("config_hash", artifact["config_hash"]),
            ("method", loaded.method),
            ("state", state.tolist()),
        ]
    )
    if loaded.values is not None:
        record["value"] = float(loaded.values(state.unsqueeze(0))[0])
    if loaded.pt_model is not None:
        prediction = pt_predict(loaded.pt_model, state)
        record["prob"] = prediction.probs.tolist()
        record["recommend_trt"] = int(prediction.recommended) + 1
    elif loaded.policy is not None:
        probs = loaded.policy.probs(state.unsqueeze(0))
        record["prob"] = probs[0].tolist()
        record["recommend_trt"] = int(argmax_lowest(probs)[0]) + 1
    _emit(record)


def evaluate(args: argparse.Namespace) -> None:
    r"""Monte-Carlo comparison of the learned policy with the behavior and the uniform
    policy. All policies are evaluated with the same seed.
    """
    if args.model is None:
        raise ValueError("--model is required.")
    config = _config(args)
    artifact = read_artifact(args.model)
    loaded = load_model(artifact)
    if loaded.policy is None:
        msg = f"method={loaded.method} fits a value function and has no policy."
        raise ValueError(msg)
    if loaded.method == "backward_induction":
        msg = (
            "The stage specific rules of backward_induction are not a stationary "
            "policy and cannot be evaluated here."
        )
        raise ValueError(msg)

    env = build_env(config)
    if env.state_dim != loaded.state_dim or env.num_actions != loaded.num_actions:
        msg = (
            f"The environment has state_dim={env.state_dim} and "
            f"num_actions={env.num_actions}, but the model "
            f"{loaded.state_dim} and {loaded.num_actions}."
        )
        raise ValueError(msg)

    policies = (
        ("learned", loaded.policy),
        ("behavior", _behavior(env, config)),
        ("uniform", UniformPolicy(env.num_actions)),
    )
    quiet = not args.verbose
    rows: List[Dict[str, Any]] = []
    for name, policy in policies:
        estimate = mc_value(
            env, policy, None, config.gamma, m=config.m, seed=config.seed, quiet=quiet
        )
        rows.append(
            OrderedDict(
                [("policy", name), ("mean", estimate.mean), ("se", estimate.se)]
            )
        )
    baseline = rows[1]["mean"]
    for row in rows:
        row["improvement"] = row["mean"] - baseline

    if loaded.pt_model is not None:
        states = env.initial_states(config.m, get_generator(config.seed))
        bound = float(torch.mean(value_lower_bound(loaded.pt_model, states)))
        for row in rows:
            row["value_lower_bound"] = bound if row["policy"] == "learned" else None

    report = pd.DataFrame(rows)
    for key, value in _header(config).items():
        report[key] = value
    file = _output(args, "evaluation.csv")
    report.to_csv(file, index=False)
    report.to_csv(sys.stdout, index=False)


def simulate(args: argparse.Namespace) -> None:
    config = _config(args)
    env = build_env(config)
    ds = generate_dataset(
        env,
        _behavior(env, config),
        n=config.n_trajectories or 15,
        T=config.stages or 48,
        seed=config.seed,
        quiet=not args.verbose,
    )
    columns = (
        ["glucose", "activity", "carbs"] if isinstance(env, GlucoseEnv) else None
    )
    files = write_stacked(ds, _output(args, "simulated"), state_columns=columns)

    record = _header(config)
    record["files"] = list(files)
    record["num_trajectories"] = ds.num_trajectories
    record["stages"] = ds[0].num_stages
    _emit(record)


def export(args: argparse.Namespace) -> None:
    config = _config(args)
    data, _ = _ingest(args, config)
    files = write_stacked(
        data.dataset, _output(args, "exported"), state_columns=data.state_columns
    )
    record = _header(config)
    record["files"] = list(files)
    _emit(record)
