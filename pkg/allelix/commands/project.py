"""create and reproduce"""
import logging
import shutil

from allelix.commands.common import print_success, print_warning, relative, session
from allelix.errors import AllelixError
from allelix.store.ingest import discover, ingest
from allelix.store.project import Project, project_dir, reproduce

logger = logging.getLogger(__name__)


def register(subparsers):
    create = subparsers.add_parser('create', help='Ingest count files into a new project')
    create.add_argument('project', help='Project name or path (".mixproj" is appended)')
    create.add_argument('inputs', nargs='+', help='Count files or folders')
    create.add_argument('--format', choices=['tsv', 'vcf'], default='tsv', help='Input format')
    create.add_argument('--bad', dest='bad_file', help='BAD intervals: chr, start, end, bad')
    create.add_argument('--truncation', '-l', type=int, help='Drop records with a count below l')
    create.add_argument('--overwrite', action='store_true', help='Replace an existing project')
    create.set_defaults(handler=run_create)

    replay = subparsers.add_parser('reproduce', help='Replay a project reproduce log')
    replay.add_argument('log', help='Path to <project>.mixproj/reproduce.json')
    replay.add_argument('--into', help='Replay into this project name instead')
    replay.set_defaults(handler=run_reproduce)


def run_create(args, config):
    path = project_dir(args.project)
    if path.exists():
        if not args.overwrite:
            raise AllelixError(f"{path} already exists (use --overwrite)")
        shutil.rmtree(path)
    l = args.truncation if args.truncation is not None else config.TRUNCATION
    result = ingest(args.inputs, args.format, args.bad_file, l, config.THREADS)
    if result.records.empty:
        print_warning("No records survived filtering")

    base = path.parent
    hashed = discover(args.inputs, args.format) + ([args.bad_file] if args.bad_file else [])
    logged = [relative(p, base) for p in args.inputs] + ['--format', args.format, '--truncation', str(l)]
    if args.bad_file:
        logged += ['--bad', relative(args.bad_file, base)]

    project = Project(path.name, settings={'format': args.format, 'truncation': l})
    project.set_table('counts', result.records)
    project.set_table('samples', result.samples)
    with session(path, 'create', logged, hashed, fresh=project):
        pass
    print_success(f"Created {path} with {len(result.records)} records "
                  f"({result.records['snv_id'].nunique()} SNVs, {len(result.samples)} samples)")
    return 0


def run_reproduce(args, config):
    from allelix.commands import main
    target = reproduce(args.log, runner=main, target=args.into)
    print_success(f"Reproduced {target}")
    return 0
