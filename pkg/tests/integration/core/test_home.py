from os import path

import pyregime

from tests.mocks import patch_home


def test_home_default(mocker):
    mocker.patch.dict("os.environ", clear=True)
    actual = pyregime.home()
    desired = path.expanduser(path.join("~", ".cache", "pyregime"))
    assert actual == desired


def test_home_env(mocker, tmp_path):
    patch_home(tmp_path, mocker=mocker)
    assert pyregime.home() == str(tmp_path)
