import contextlib
import os
import shutil
from os import path

import igittigitt

__all__ = ["watch_dir", "finite_difference_gradient"]


PROJECT_ROOT = path.abspath(path.join(path.dirname(__file__), ".."))


def _ignore_parser():
    parser = igittigitt.IgnoreParser()
    parser.parse_rule_files(PROJECT_ROOT)
    return parser


def _snapshot(top, parser):
    entries = set()
    for root, dirs, files in os.walk(top):
        dirs[:] = [
            dir
            for dir in dirs
            if dir != ".git" and not parser.match(path.join(root, dir))
        ]
        entries.update(path.join(root, dir) for dir in dirs)
        entries.update(
            path.join(root, file)
            for file in files
            if not parser.match(path.join(root, file))
        )
    return entries


@contextlib.contextmanager
def watch_dir(top):
    r"""Removes everything that is created below ``top`` while the context is active.
    Relative paths are resolved against the project root. Paths that git ignores are
    left alone.
    """
    top = path.join(PROJECT_ROOT, top)
    parser = _ignore_parser()
    before = _snapshot(top, parser)
    try:
        yield
    finally:
        # children sort after their parents
        for entry in sorted(_snapshot(top, parser) - before, reverse=True):
            if path.isdir(entry) and not path.islink(entry):
                shutil.rmtree(entry, ignore_errors=True)
            else:
                with contextlib.suppress(FileNotFoundError):
                    os.remove(entry)


def finite_difference_gradient(fn, theta, eps=1e-6):
    grad = theta.new_zeros(theta.size())
    for idx in range(theta.numel()):
        step = theta.new_zeros(theta.size())
        step.view(-1)[idx] = eps
        grad.view(-1)[idx] = (fn(theta + step) - fn(theta - step)) / (2.0 * eps)
    return grad
