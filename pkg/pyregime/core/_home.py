import os

__all__ = ["home"]


def home() -> str:
    r"""Local directory to save fitted models, simulated data and evaluation reports.
    Defaults to ``~/.cache/pyregime`` but can be overwritten with the
    ``PYREGIME_HOME`` environment variable.
    """
    return os.getenv(
        "PYREGIME_HOME", os.path.expanduser(os.path.join("~", ".cache", "pyregime"))
    )
