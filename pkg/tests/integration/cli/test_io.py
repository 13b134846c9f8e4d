import pytest

import torch

import pyregime
from pyregime import cli, envs


@pytest.fixture
def write_files(tmp_path):
    def factory(states, actions, rewards):
        files = []
        for name, text in (
            ("states", states),
            ("actions", actions),
            ("rewards", rewards),
        ):
            file = tmp_path / f"{name}.csv"
            file.write_text(text)
            files.append(str(file))
        return files

    return factory


@pytest.fixture
def stacked_files(write_files):
    # n=2, stages=2
    return write_files(
        "x1,x2\n1,10\n2,20\n3,30\n4,40\n5,50\n6,60\n",
        "A\n0\n1\n1\n0\n",
        "R\n0.5\n-1\n2\n0\n",
    )


def test_read_stacked(stacked_files):
    data = cli.read_stacked(*stacked_files, n=2)
    ds = data.dataset
    assert data.state_columns == ["x1", "x2"]
    assert ds.num_trajectories == 2
    assert ds.num_actions == 2
    assert torch.equal(
        ds[0].states,
        torch.tensor([[1.0, 10.0], [3.0, 30.0], [5.0, 50.0]], dtype=torch.float64),
    )
    assert ds[1].actions.tolist() == [1, 0]
    assert ds[1].rewards.tolist() == [-1.0, 0.0]


def test_read_stacked_infer_n(stacked_files):
    data = cli.read_stacked(*stacked_files, stages=2)
    assert data.dataset.num_trajectories == 2


def test_read_stacked_counts_missing(stacked_files):
    with pytest.raises(ValueError):
        cli.read_stacked(*stacked_files)


def test_read_stacked_row_mismatch(stacked_files):
    with pytest.raises(pyregime.DatasetError, match="rows"):
        cli.read_stacked(*stacked_files, n=3)


def test_read_stacked_non_numeric(write_files):
    files = write_files("x\n1\nfoo\n3\n4\n", "A\n0\n1\n", "R\n0\n0\n")
    with pytest.raises(pyregime.DatasetError, match="non-numeric cell 'foo'"):
        cli.read_stacked(*files, n=2)


def test_read_stacked_action_out_of_range(stacked_files):
    with pytest.raises(pyregime.DatasetError, match="action out of range"):
        cli.read_stacked(*stacked_files, n=2, num_actions=1)


def test_read_stacked_non_integer_action(write_files):
    files = write_files("x\n1\n2\n3\n4\n", "A\n0.5\n1\n", "R\n0\n0\n")
    with pytest.raises(pyregime.DatasetError, match="non-integer"):
        cli.read_stacked(*files, n=2)


def test_write_stacked(tmp_path):
    ds = envs.generate_dataset(envs.GlucoseEnv(), n=3, T=4, seed=0)
    prefix = str(tmp_path / "sim")
    files = cli.write_stacked(ds, prefix, state_columns=["g", "u", "c"])
    assert files == cli.stacked_paths(prefix)

    data = cli.read_stacked(*files, n=3, num_actions=14)
    assert data.state_columns == ["g", "u", "c"]
    for expected, actual in zip(ds, data.dataset):
        torch.testing.assert_close(actual.states, expected.states)
        assert torch.equal(actual.actions, expected.actions)
        torch.testing.assert_close(actual.rewards, expected.rewards)


def test_write_stacked_unequal_lengths(tmp_path):
    ds = pyregime.OfflineDataset(
        [
            pyregime.Trajectory([0.0, 1.0], [0], [1.0]),
            pyregime.Trajectory([0.0, 1.0, 0.0], [0, 1], [1.0, 0.0]),
        ]
    )
    with pytest.raises(ValueError):
        cli.write_stacked(ds, str(tmp_path / "out"))


def test_ingest(write_files):
    files = write_files("x\n1\n2\n3\n4\n", "A\n0\n1\n", "R\n1\n0\n")

    data, report = cli.ingest(*files, n=2, stages=1)
    ds = data.dataset

    assert ds.num_trajectories == 2
    assert ds.num_transitions == 2
    assert [len(traj) for traj in ds] == [1, 1]
    assert report.action_counts.tolist() == [1, 1]
    assert report.ok


def test_ingest_action_out_of_range(write_files):
    files = write_files("x\n1\n2\n3\n4\n", "A\n0\n2\n", "R\n1\n0\n")
    with pytest.raises(pyregime.DatasetError, match="row 2"):
        cli.ingest(*files, n=2, stages=1, num_actions=2)
