import importlib
import pkgutil
import re
import sys

import pytest

from tests.mocks import patch_imports

# https://www.python.org/dev/peps/pep-0440/#appendix-b-parsing-version-strings-with-regular-expressions
CANONICAL_VERSION = re.compile(
    r"^([1-9][0-9]*!)?(0|[1-9][0-9]*)(\.(0|[1-9][0-9]*))*((a|b|rc)(0|[1-9][0-9]*))?(\.post(0|[1-9][0-9]*))?(\.dev(0|[1-9][0-9]*))?$"
)
DEV_SUFFIX = re.compile(r"\+g[\da-f]{7}([.]\d{14})?")


def public_modules():
    import pyregime

    for info in pkgutil.walk_packages(pyregime.__path__, prefix="pyregime."):
        if not any(part.startswith("_") for part in info.name.split(".")):
            yield info.name


@pytest.mark.parametrize("name", list(public_modules()))
def test_importability(name):
    importlib.import_module(name)


@pytest.mark.parametrize(
    "name", ("optim", "tabular", "td", "residual", "estimating", "pt", "envs")
)
def test_subpackage_attributes(name):
    import pyregime

    assert getattr(pyregime, name) is sys.modules[f"pyregime.{name}"]


def test_cli_not_imported(mocker):
    patch_imports("pyregime", lambda name, fromlist, level: False, mocker=mocker)

    import pyregime  # noqa: F401

    assert "pyregime.cli" not in sys.modules


def test_version_installed():
    import pyregime

    version = pyregime.__version__
    match = DEV_SUFFIX.search(version)
    if match is not None:
        version = version[: match.start()]
    assert CANONICAL_VERSION.match(version) is not None


def test_version_not_installed(mocker):
    def fails(name, fromlist, level):
        return name == "_version" and fromlist == ("version",)

    patch_imports("pyregime", fails, mocker=mocker)

    import pyregime

    assert pyregime.__version__ == "UNKNOWN"
