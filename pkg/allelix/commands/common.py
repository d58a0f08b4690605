import logging
import os
from contextlib import contextmanager
from pathlib import Path

from allelix.errors import AllelixError, CorruptStore
from allelix.store.project import (MANIFEST, load_project, log_entry, project_dir, project_lock,
                                   save_project)

logger = logging.getLogger(__name__)


def print_success(text):
    print(f"✓ {text}")


def print_warning(text):
    print(f"⚠ {text}")


def print_error(text):
    print(f"✗ {text}")


def relative(path, base):
    """Path as recorded in the reproduce log: relative to the project's parent"""
    return os.path.relpath(Path(path).resolve(), Path(base).resolve())


def require(project, *tables):
    for key in tables:
        if not project.has(key):
            raise AllelixError(f"project {project.name} has no {key} table yet")


@contextmanager
def session(project_arg, verb, args=(), inputs=(), fresh=None):
    """Lock, load (or start from ``fresh``), then save and log on success.

    Exactly one reproduce-log entry is appended per successful command.
    """
    path = project_dir(project_arg)
    base = path.parent
    if fresh is None and not (path / MANIFEST).is_file():
        raise CorruptStore(f"{path} is not a project (no {MANIFEST})")
    with project_lock(path):
        project = fresh if fresh is not None else load_project(path)
        yield project
        project.log.append(log_entry(verb, path, list(args), list(inputs), base))
        save_project(project, base)
