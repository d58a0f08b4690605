"""fit, test, combine and difftest"""
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from allelix.analysis.difftest import TestMethod, difftest_all
from allelix.analysis.fit import EstimateTable, FitSettings, fit_global
from allelix.analysis.scoring import combine_group, score_unique, bh_adjust
from allelix.commands.common import print_success, print_warning, relative, require, session
from allelix.models.distributions import ModelKind
from allelix.models.window import CountTable
from allelix.store.ingest import read_group_file
from allelix.store.project import project_dir

logger = logging.getLogger(__name__)

MODEL_CHOICES = [kind.value for kind in ModelKind]


def register(subparsers):
    fit = subparsers.add_parser('fit', help='Fit sliding-window mixture models')
    fit.add_argument('project')
    fit.add_argument('model', choices=MODEL_CHOICES, help='Base distribution')
    fit.add_argument('--alpha', type=float, help='MAP penalty strength on kappa (BetaNB)')
    fit.add_argument('--window-size', '-m', type=int, help='Minimum observations per window')
    fit.add_argument('--truncation', '-l', type=int, help='Left truncation threshold')
    fit.add_argument('--std-errors', action='store_true', help='Estimate standard errors')
    fit.set_defaults(handler=run_fit)

    test = subparsers.add_parser('test', help='Score every observation against the fitted windows')
    test.add_argument('project')
    test.set_defaults(handler=run_test)

    combine = subparsers.add_parser('combine', help='Combine p-values and effect sizes per SNV')
    combine.add_argument('project')
    combine.add_argument('groups', nargs='*',
                         help='Group files (sample names or glob patterns); default: one group of all samples')
    combine.set_defaults(handler=run_combine)

    diff = subparsers.add_parser('difftest', help='Differential allele-specificity between two groups')
    diff.add_argument('project')
    diff.add_argument('control', help='Control group file')
    diff.add_argument('test', help='Test group file')
    diff.add_argument('--method', choices=[m.value for m in TestMethod], default=TestMethod.WALD.value)
    diff.set_defaults(handler=run_difftest)


def _counts(project):
    return CountTable(project.table('counts').assign(n=1))


def _estimates(project):
    settings = project.settings
    return EstimateTable.from_frame(project.table('estimates'), settings['model'], settings['fit_truncation'])


def run_fit(args, config):
    settings = FitSettings(
        model_kind=args.model,
        m=args.window_size if args.window_size is not None else config.WINDOW_SIZE,
        alpha=args.alpha if args.alpha is not None else config.ALPHA,
        l=args.truncation if args.truncation is not None else config.TRUNCATION,
        optimizer_tol=config.OPTIMIZER_TOL,
        max_evals=config.MAX_EVALS,
        estimate_se=args.std_errors,
    )
    logged = [settings.model_kind.value, '--window-size', str(settings.m), '--alpha', repr(settings.alpha),
              '--truncation', str(settings.l)] + (['--std-errors'] if args.std_errors else [])
    with session(args.project, 'fit', logged) as project:
        require(project, 'counts')
        estimates = fit_global(_counts(project), settings)
        project.set_table('estimates', estimates.to_frame())
        project.drop('raw_scores', 'combined', 'difftest')
        project.settings.update({
            'model': settings.model_kind.value, 'window_size': settings.m, 'alpha': settings.alpha,
            'fit_truncation': settings.l, 'std_errors': settings.estimate_se,
            'optimizer_tol': settings.optimizer_tol, 'max_evals': settings.max_evals,
        })
    failed = int((~np.isfinite(estimates.to_frame()['loglik'])).sum())
    if failed:
        print_warning(f"{failed} windows failed to fit")
    print_success(f"Fitted {len(estimates)} windows with {settings.model_kind.value}")
    return 0


def run_test(args, config):
    with session(args.project, 'test') as project:
        require(project, 'counts', 'estimates')
        scores = score_unique(_counts(project), _estimates(project), config.THREADS)
        project.set_table('raw_scores', scores)
        project.drop('combined', 'difftest')
    print_success(f"Scored {len(scores)} unique count tuples")
    return 0


def _groups(project, files):
    if not files:
        return {'all': project.table('samples')['sample'].tolist()}
    return {Path(f).stem: read_group_file(f, project.table('samples')) for f in files}


def run_combine(args, config):
    base = project_dir(args.project).parent
    logged = [relative(f, base) for f in args.groups]
    with session(args.project, 'combine', logged, args.groups) as project:
        require(project, 'counts', 'raw_scores')
        records = project.table('counts')
        frames = []
        for name, samples in _groups(project, args.groups).items():
            frames.append(combine_group(records[records['sample'].isin(samples)], project.table('raw_scores'), name))
        combined = pd.concat(frames, ignore_index=True)
        project.set_table('combined', combined)
    print_success(f"Combined {len(combined)} SNV-group scores across {len(frames)} groups")
    return 0


def run_difftest(args, config):
    base = project_dir(args.project).parent
    logged = [relative(args.control, base), relative(args.test, base), '--method', args.method]
    with session(args.project, 'difftest', logged, [args.control, args.test]) as project:
        require(project, 'counts', 'estimates')
        records = project.table('counts')
        samples = project.table('samples')
        control = records[records['sample'].isin(read_group_file(args.control, samples))]
        test = records[records['sample'].isin(read_group_file(args.test, samples))]
        result = difftest_all(control, test, _estimates(project), TestMethod(args.method))
        with np.errstate(divide='ignore'):
            result['fdr'] = bh_adjust(np.log(result['final_pval'].to_numpy(dtype=float)))
        project.set_table('difftest', result)
    print_success(f"Tested {len(result)} SNVs ({args.method})")
    return 0
