"""On-disk project store: versioned TSV tables, a checksummed manifest,
an advisory lock and the append-only reproduce log.
"""
import hashlib
import json
import logging
import os
import shutil
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List

import pandas as pd

from config import Config
from allelix import __version__
from allelix.errors import CorruptStore, HashMismatch, ProjectLocked, VersionMismatch

logger = logging.getLogger(__name__)

TABLES = ('counts', 'samples', 'estimates', 'raw_scores', 'combined', 'difftest')
MANIFEST = 'manifest.json'
LOG_FILE = 'reproduce.json'
LOCK_FILE = '.lock'


def project_dir(name):
    path = Path(name)
    if path.name.endswith(Config.PROJECT_SUFFIX):
        return path
    return path.with_name(path.name + Config.PROJECT_SUFFIX)


def project_name(path):
    name = Path(path).name
    return name[:-len(Config.PROJECT_SUFFIX)] if name.endswith(Config.PROJECT_SUFFIX) else name


def hash_file(path, chunk=1 << 20):
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for block in iter(lambda: handle.read(chunk), b''):
            digest.update(block)
    return digest.hexdigest()


def _normalize(frame):
    frame = frame.reset_index(drop=True).copy()
    for column in frame.columns:
        if frame[column].dtype == object:
            frame[column] = frame[column].map(lambda v: '' if v is None or (isinstance(v, float) and v != v) else str(v))
    return frame


@dataclass
class Project:
    """Persisted workflow state; tables are absent until the verb producing them runs"""
    name: str
    settings: Dict = field(default_factory=dict)
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    log: List[Dict] = field(default_factory=list)

    def __post_init__(self):
        self.name = project_name(self.name)
        for key in list(self.tables):
            self.set_table(key, self.tables[key])

    def set_table(self, key, frame):
        if key not in TABLES:
            raise KeyError(f"unknown table {key!r}")
        self.tables[key] = _normalize(frame)

    def table(self, key):
        return self.tables.get(key)

    def has(self, key):
        return key in self.tables

    def drop(self, *keys):
        for key in keys:
            self.tables.pop(key, None)

    def same_as(self, other):
        if (self.name, self.settings) != (other.name, other.settings):
            return False
        if set(self.tables) != set(other.tables):
            return False
        return all(self.tables[k].equals(other.tables[k]) and
                   list(self.tables[k].dtypes.astype(str)) == list(other.tables[k].dtypes.astype(str))
                   for k in self.tables)


def _write_table(frame, path):
    frame.to_csv(path, sep='\t', index=False, float_format=lambda v: repr(float(v)), na_rep='', lineterminator='\n')


def _read_table(path, columns):
    dtypes = dict(columns)
    float_cols = [c for c, t in dtypes.items() if t.startswith('float')]
    other = {c: ('str' if t == 'object' else t) for c, t in dtypes.items() if c not in float_cols}
    try:
        frame = pd.read_csv(path, sep='\t', dtype={**other, **{c: 'float64' for c in float_cols}},
                            keep_default_na=False, na_values={c: [''] for c in float_cols},
                            float_precision='round_trip')
    except (ValueError, pd.errors.ParserError) as exc:
        raise CorruptStore(f"cannot parse {path}: {exc}") from exc
    if list(frame.columns) != [c for c, _ in columns]:
        raise CorruptStore(f"{path} columns differ from the manifest")
    return _normalize(frame)


def save_project(project, root='.'):
    """Write every table, the manifest and the log; returns the project directory"""
    target = Path(root) / project_dir(project.name).name
    target.mkdir(parents=True, exist_ok=True)
    tables = {}
    for key in TABLES:
        path = target / f'{key}.tsv'
        frame = project.tables.get(key)
        if frame is None:
            if path.exists():
                path.unlink()
            continue
        _write_table(frame, path)
        tables[key] = {
            'file': path.name,
            'sha256': hash_file(path),
            'rows': int(len(frame)),
            'columns': [[c, str(t)] for c, t in frame.dtypes.items()],
        }
    manifest = {
        'format_version': Config.STORE_FORMAT_VERSION,
        'package_version': __version__,
        'name': project.name,
        'settings': project.settings,
        'tables': tables,
    }
    (target / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + '\n')
    write_log(target, project.log)
    logger.debug(f"Saved project {project.name} to {target}")
    return target


def load_project(name):
    """Load and verify a project.

    Raises:
        CorruptStore: missing or unparsable manifest, checksum or row-count mismatch
        VersionMismatch: store written with a different format version
    """
    path = project_dir(name)
    manifest_path = path / MANIFEST
    if not manifest_path.is_file():
        raise CorruptStore(f"{path} is not a project (no {MANIFEST})")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise CorruptStore(f"unreadable manifest in {path}: {exc}") from exc
    version = manifest.get('format_version')
    if version != Config.STORE_FORMAT_VERSION:
        raise VersionMismatch(f"{path} has store format {version}, expected {Config.STORE_FORMAT_VERSION}")
    tables = {}
    for key, meta in manifest.get('tables', {}).items():
        table_path = path / meta['file']
        if not table_path.is_file():
            raise CorruptStore(f"missing table {table_path}")
        if hash_file(table_path) != meta['sha256']:
            raise CorruptStore(f"checksum mismatch for {table_path}")
        frame = _read_table(table_path, meta['columns'])
        if len(frame) != meta['rows']:
            raise CorruptStore(f"{table_path} holds {len(frame)} rows, manifest says {meta['rows']}")
        tables[key] = frame
    return Project(manifest.get('name', project_name(path)), manifest.get('settings', {}), tables, read_log(path))


def read_log(path):
    log_path = project_dir(path) / LOG_FILE
    if not log_path.exists():
        return []
    try:
        return json.loads(log_path.read_text())
    except json.JSONDecodeError as exc:
        raise CorruptStore(f"unreadable reproduce log {log_path}: {exc}") from exc


def write_log(path, entries):
    (project_dir(path) / LOG_FILE).write_text(json.dumps(entries, indent=2) + '\n')


def log_entry(verb, project, args, inputs, base=None):
    """Command descriptor: verb, project, remaining arguments and input hashes.

    Input paths are stored relative to ``base`` (the project's parent directory)
    so a moved project tree still replays.
    """
    base = Path(base or '.').resolve()
    recorded = []
    for path in inputs:
        resolved = Path(path).resolve()
        recorded.append({'path': os.path.relpath(resolved, base), 'sha256': hash_file(resolved)})
    return {
        'verb': verb,
        'project': project_name(project),
        'args': [str(a) for a in args],
        'inputs': recorded,
        'timestamp': datetime.now(timezone.utc).isoformat(timespec='seconds'),
    }


def append_log(project, entry):
    project.log.append(entry)


@contextmanager
def project_lock(name):
    """Advisory lock held for one command; a second holder gets ProjectLocked"""
    path = project_dir(name)
    path.mkdir(parents=True, exist_ok=True)
    lock = path / LOCK_FILE
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ProjectLocked(f"{path} is in use by another command (remove {lock} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield path
    finally:
        lock.unlink(missing_ok=True)


def verify_inputs(entries, base):
    base = Path(base)
    for entry in entries:
        for item in entry.get('inputs', []):
            path = base / item['path']
            actual = hash_file(path) if path.is_file() else 'missing'
            if actual != item['sha256']:
                raise HashMismatch(path, item['sha256'], actual)


def reproduce(log_path, runner, target=None):
    """Replay a reproduce log.

    Args:
        log_path: reproduce.json of a project
        runner: callable taking an argv list, returning an exit status
        target: optional project name to replay into instead of the logged one

    Returns:
        Path of the replayed project directory
    """
    log_path = Path(log_path).resolve()
    try:
        entries = json.loads(log_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptStore(f"unreadable reproduce log {log_path}: {exc}") from exc
    base = log_path.parent.parent
    verify_inputs(entries, base)
    name = target or (entries[0]['project'] if entries else project_name(log_path.parent))
    if not entries:
        destination = base / project_dir(name).name
        if destination.exists():
            shutil.rmtree(destination)
        logger.info(f"Empty reproduce log, writing empty project {name}")
        return save_project(Project(name), base)

    cwd = os.getcwd()
    os.chdir(base)
    try:
        for entry in entries:
            argv = [entry['verb'], name, *entry['args']]
            if entry['verb'] == 'create' and '--overwrite' not in argv:
                argv.append('--overwrite')
            logger.info(f"Replaying: {' '.join(argv)}")
            status = runner(argv)
            if status:
                raise CorruptStore(f"replay of {entry['verb']} failed with exit status {status}")
    finally:
        os.chdir(cwd)
    return base / project_dir(name).name
