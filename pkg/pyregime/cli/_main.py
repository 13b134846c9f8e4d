import argparse
import sys
import warnings
from typing import Callable, Dict, List, Optional

import pyregime
from pyregime.core import ConvergenceWarning

from ._commands import evaluate, export, fit, predict, simulate, validate

__all__ = ["make_parser", "main"]

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NOT_CONVERGED = 2

_COMMANDS: Dict[str, Callable[[argparse.Namespace], None]] = {
    "validate": validate,
    "fit": fit,
    "predict": predict,
    "evaluate": evaluate,
    "simulate": simulate,
    "export": export,
}

_HELP = {
    "validate": "read a stacked dataset and print the validation report",
    "fit": "fit a model and write the model file",
    "predict": "print the treatment probabilities of a state (1-based treatments)",
    "evaluate": "compare the learned policy with the behavior policy by Monte-Carlo",
    "simulate": "generate a stacked dataset from a simulated environment",
    "export": "read a stacked dataset and write it back",
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pyregime",
        description="Offline learning of dynamic treatment regimes.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {pyregime.__version__}"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, command in _COMMANDS.items():
        subparser = subparsers.add_parser(name, help=_HELP[name])
        subparser.set_defaults(run=command)
        subparser.add_argument("--config", help="flat key=value config file")
        subparser.add_argument("--data", help="stacked states file")
        subparser.add_argument("--actions", help="stacked actions file")
        subparser.add_argument("--rewards", help="stacked rewards file")
        subparser.add_argument("--n", type=int, help="number of trajectories")
        subparser.add_argument("--stages", type=int, help="number of stages")
        subparser.add_argument("--num-actions", type=int, help="size of the action set")
        subparser.add_argument("--model", help="model file")
        subparser.add_argument("--state", help="comma separated state vector")
        subparser.add_argument("--m", type=int, help="Monte-Carlo replications")
        subparser.add_argument("--seed", type=int, help="random seed")
        subparser.add_argument("--out", help="output file or prefix")
        subparser.add_argument(
            "--verbose", action="store_true", help="show progress bars"
        )
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    r"""Runs a command and returns the exit code: ``0`` on success, ``1`` on invalid
    input or configuration, and ``2`` if an estimator did not converge. In the latter
    case the outputs are still written.
    """
    args = make_parser().parse_args(argv)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            args.run(args)
        except (ValueError, OSError) as error:
            print(f"error: {error}", file=sys.stderr)
            return EXIT_INVALID
        finally:
            for warning in caught:
                print(
                    f"{warning.category.__name__}: {warning.message}", file=sys.stderr
                )

    if any(issubclass(warning.category, ConvergenceWarning) for warning in caught):
        return EXIT_NOT_CONVERGED
    return EXIT_OK
