from typing import List, NamedTuple, Optional, Sequence, Tuple

import pandas as pd

import torch

from pyregime.core import DatasetError, OfflineDataset, Trajectory

__all__ = [
    "ACTION_COLUMN",
    "REWARD_COLUMN",
    "StackedData",
    "read_stacked",
    "stacked_paths",
    "write_stacked",
]

ACTION_COLUMN = "A"
REWARD_COLUMN = "R"


class StackedData(NamedTuple):
    dataset: OfflineDataset
    state_columns: List[str]


def _read_numeric(file: str, block: str) -> pd.DataFrame:
    frame = pd.read_csv(file, dtype=str, keep_default_na=False)
    if frame.columns.empty:
        raise DatasetError(f"The {block} file {file} has no header row.")
    numeric = frame.apply(pd.to_numeric, errors="coerce")
    missing = frame.apply(lambda column: column.str.strip().str.lower()).isin(
        ("", "nan")
    )
    bad = numeric.isna() & ~missing
    if bool(bad.to_numpy().any()):
        row, col = next(zip(*bad.to_numpy().nonzero()))
        msg = (
            f"non-numeric cell '{frame.iat[row, col]}' in the {block} block at "
            f"row {row + 1}, column '{frame.columns[col]}'"
        )
        raise DatasetError(msg)
    return numeric


def _infer_counts(
    num_state_rows: int, num_action_rows: int, n: Optional[int], stages: Optional[int]
) -> Tuple[int, int]:
    if n is None and stages is None:
        raise ValueError("At least one of n and stages has to be given.")
    if n is None:
        assert stages is not None
        n = num_action_rows // stages if num_action_rows % stages == 0 else -1
        if n < 1:
            msg = (
                f"actions block has {num_action_rows} rows, which is not a positive "
                f"multiple of stages={stages}"
            )
            raise DatasetError(msg)
    if stages is None:
        stages = num_state_rows // n - 1 if num_state_rows % n == 0 else -1
        if stages < 1:
            msg = (
                f"states block has {num_state_rows} rows, which does not give a "
                f"positive number of stages for n={n}"
            )
            raise DatasetError(msg)
    return n, stages


def _check_rows(block: str, frame: pd.DataFrame, expected: int, n: int, T: int) -> None:
    if len(frame) != expected:
        msg = (
            f"{block} block has {len(frame)} rows, but n={n} and stages={T} "
            f"need {expected}"
        )
        raise DatasetError(msg)


def read_stacked(
    states_file: str,
    actions_file: str,
    rewards_file: str,
    n: Optional[int] = None,
    stages: Optional[int] = None,
    num_actions: Optional[int] = None,
) -> StackedData:
    r"""Reads a dataset in the stacked layout.

    Rows ``t * n + 1, ..., (t + 1) * n`` of the states file hold the states of stage
    ``t`` of the trajectories ``1, ..., n``. The actions and rewards files follow the
    same layout with one stage less. Every file has a header row. Actions are 0-based
    indices in the first column of the actions file, rewards the first column of the
    rewards file.

    Args:
        states_file: Comma separated states file.
        actions_file: Comma separated actions file.
        rewards_file: Comma separated rewards file.
        n: Number of trajectories. Inferred from ``stages`` if omitted.
        stages: Number of stages. Inferred from ``n`` if omitted.
        num_actions: Size of the action set. If given, larger actions are rejected.

    Raises:
        DatasetError: If a cell is non-numeric, an action is not a valid index or the
            row counts do not match ``n`` and ``stages``.
    """
    states = _read_numeric(states_file, "states")
    actions = _read_numeric(actions_file, "actions").iloc[:, 0]
    rewards = _read_numeric(rewards_file, "rewards").iloc[:, 0]

    n, stages = _infer_counts(len(states), len(actions), n, stages)
    _check_rows("states", states, n * (stages + 1), n, stages)
    _check_rows("actions", actions, n * stages, n, stages)
    _check_rows("rewards", rewards, n * stages, n, stages)

    values = actions.to_numpy()
    for row, value in enumerate(values, 1):
        if pd.isna(value):
            raise DatasetError(f"missing action at row {row}")
        if value != round(value):
            raise DatasetError(f"non-integer action at row {row}")
        if value < 0 or (num_actions is not None and value >= num_actions):
            raise DatasetError(f"action out of range at row {row}")

    state_tensor = torch.as_tensor(states.to_numpy(dtype="float64")).reshape(
        stages + 1, n, -1
    )
    action_tensor = torch.as_tensor(values.astype("int64")).reshape(stages, n)
    reward_tensor = torch.as_tensor(rewards.to_numpy(dtype="float64")).reshape(
        stages, n
    )
    trajectories = [
        Trajectory(state_tensor[:, idx], action_tensor[:, idx], reward_tensor[:, idx])
        for idx in range(n)
    ]
    dataset = OfflineDataset(trajectories, num_actions=num_actions)
    return StackedData(dataset, [str(column) for column in states.columns])


def stacked_paths(prefix: str) -> Tuple[str, str, str]:
    return f"{prefix}_states.csv", f"{prefix}_actions.csv", f"{prefix}_rewards.csv"


def write_stacked(
    dataset: OfflineDataset,
    prefix: str,
    state_columns: Optional[Sequence[str]] = None,
) -> Tuple[str, str, str]:
    r"""Writes ``dataset`` in the stacked layout of :func:`read_stacked` to
    ``<prefix>_states.csv``, ``<prefix>_actions.csv`` and ``<prefix>_rewards.csv``.

    Raises:
        ValueError: If the trajectories have different lengths.
    """
    stages = dataset[0].num_stages
    if any(traj.num_stages != stages for traj in dataset):
        raise ValueError("The stacked layout needs trajectories of equal length.")
    if state_columns is None:
        state_columns = [f"x{idx + 1}" for idx in range(dataset.state_dim)]

    # stage-major: (T + 1, n, p)
    states = torch.stack([traj.states for traj in dataset], dim=1)
    actions = torch.stack([traj.actions for traj in dataset], dim=1)
    rewards = torch.stack([traj.rewards for traj in dataset], dim=1)

    states_file, actions_file, rewards_file = stacked_paths(prefix)
    pd.DataFrame(
        states.flatten(0, 1).numpy(), columns=list(state_columns)
    ).to_csv(states_file, index=False)
    pd.DataFrame({ACTION_COLUMN: actions.flatten().numpy()}).to_csv(
        actions_file, index=False
    )
    pd.DataFrame({REWARD_COLUMN: rewards.flatten().numpy()}).to_csv(
        rewards_file, index=False
    )
    return states_file, actions_file, rewards_file
