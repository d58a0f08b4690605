"""export and visualize: read-only views of a project"""
import logging
from pathlib import Path

import numpy as np

from allelix.analysis.fit import EstimateTable
from allelix.commands.common import print_success, print_warning, require
from allelix.models.window import CountTable
from allelix.store.project import load_project
from allelix.utils.report import write_diagnostics

logger = logging.getLogger(__name__)

EXPORT_FORMAT = '%.6g'
SELECTORS = ('all', 'params', 'scores', 'difftest')


def register(subparsers):
    export = subparsers.add_parser('export', help='Write result tables as TSV')
    export.add_argument('what', choices=SELECTORS, help='Which tables to export')
    export.add_argument('project')
    export.add_argument('out_dir')
    export.set_defaults(handler=run_export)

    viz = subparsers.add_parser('visualize', help='Diagnostic PDF plus the plotted data as TSV')
    viz.add_argument('project')
    viz.add_argument('out_dir')
    viz.set_defaults(handler=run_visualize)


def _write(frame, path):
    frame.to_csv(path, sep='\t', index=False, float_format=EXPORT_FORMAT, lineterminator='\n')
    return path


def raw_score_export(project):
    """Per-observation raw scores joined from the unique-tuple score table"""
    merged = project.table('counts').merge(project.table('raw_scores'), on=['ref', 'alt', 'bad'], how='inner')
    for side in ('ref', 'alt'):
        merged[f'pval_{side}'] = np.exp(merged[f'log_pval_{side}'])
        merged[f'log10_pval_{side}'] = merged[f'log_pval_{side}'] / np.log(10.0)
    columns = ['snv_id', 'chr', 'pos', 'ref_base', 'alt_base', 'sample', 'ref', 'alt', 'bad',
               'pval_ref', 'pval_alt', 'log10_pval_ref', 'log10_pval_alt', 'es_ref', 'es_alt']
    return merged[columns].sort_values(['chr', 'pos', 'snv_id', 'sample']).reset_index(drop=True)


def combined_export(project):
    frame = project.table('combined').copy()
    index = project.table('counts')[['snv_id', 'chr', 'pos', 'ref_base', 'alt_base']].drop_duplicates('snv_id')
    frame = frame.merge(index, on='snv_id', how='left')
    for column in ('log_pval_ref', 'log_pval_alt', 'log_final_pval'):
        name = column.replace('log_', '')
        frame[name] = np.exp(frame[column])
        frame[f'log10_{name}'] = frame[column] / np.log(10.0)
    columns = ['group', 'snv_id', 'chr', 'pos', 'ref_base', 'alt_base', 'n_obs',
               'pval_ref', 'pval_alt', 'es_ref', 'es_alt', 'final_pval', 'final_es', 'final_side',
               'log10_final_pval', 'fdr_ref', 'fdr_alt', 'fdr_final', 'degenerate_weights']
    return frame[columns]


def export_tables(project, what, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if what in ('all', 'params'):
        require(project, 'estimates')
        written.append(_write(project.table('estimates'), out_dir / 'params.tsv'))
    if what in ('all', 'scores'):
        if project.has('raw_scores'):
            written.append(_write(raw_score_export(project), out_dir / 'raw_scores.tsv'))
        elif what == 'scores':
            require(project, 'raw_scores')
        if project.has('combined'):
            written.append(_write(combined_export(project), out_dir / 'combined.tsv'))
    if what in ('all', 'difftest'):
        if what == 'difftest':
            require(project, 'difftest')
        if project.has('difftest'):
            written.append(_write(project.table('difftest'), out_dir / 'difftest.tsv'))
    return written


def run_export(args, config):
    project = load_project(args.project)
    written = export_tables(project, args.what, args.out_dir)
    if not written:
        print_warning(f"Nothing to export from {project.name}")
    for path in written:
        print_success(f"Wrote {path}")
    return 0


def run_visualize(args, config):
    project = load_project(args.project)
    require(project, 'counts', 'estimates')
    counts = CountTable(project.table('counts').assign(n=1)).filtered(project.settings['fit_truncation'])
    estimates = EstimateTable.from_frame(project.table('estimates'), project.settings['model'],
                                         project.settings['fit_truncation'])
    for path in write_diagnostics(project.name, project.settings, estimates, counts, args.out_dir):
        print_success(f"Wrote {path}")
    return 0
