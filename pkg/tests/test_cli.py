import os

import numpy as np
import pandas as pd
import pytest

from allelix.commands import main
from allelix.store.project import load_project
from tests.conftest import truncated_nb, write_tsv

SAMPLES = ('s1', 's2', 's3')


def run(*argv):
    return main(['--log-level', 'WARNING', '--threads', '1', *map(str, argv)])


@pytest.fixture(scope='module')
def workspace(tmp_path_factory):
    """Three samples sharing 300 balanced SNVs, taken through create, fit, test, combine and difftest"""
    root = tmp_path_factory.mktemp('cli')
    rng = np.random.default_rng(7)
    (root / 'data').mkdir()
    for sample in SAMPLES:
        alt = rng.integers(10, 31, size=300)
        ref = truncated_nb(rng, alt, 0.5, 5)
        rows = [('chr1', 1000 + i, '', 'A', 'G', int(x), int(y)) for i, (x, y) in enumerate(zip(ref, alt))]
        write_tsv(root / 'data' / f'{sample}.tsv', rows)
    (root / 'ctrl.txt').write_text('s1\ns2\n')
    (root / 'treat.txt').write_text('s3*\n')
    cwd = os.getcwd()
    os.chdir(root)
    try:
        statuses = [
            run('create', 'demo', 'data', '--truncation', 5),
            run('fit', 'demo', 'NB', '--window-size', 1000),
            run('test', 'demo'),
            run('combine', 'demo'),
            run('difftest', 'demo', 'ctrl.txt', 'treat.txt'),
        ]
    finally:
        os.chdir(cwd)
    assert statuses == [0] * 5
    return root


class TestUsage:
    def test_no_verb(self, capsys):
        assert main([]) == 2

    def test_unknown_model(self, workspace, monkeypatch, capsys):
        monkeypatch.chdir(workspace)
        assert run('fit', 'demo', 'Gamma') == 2

    def test_version(self, capsys):
        assert main(['--version']) == 0
        assert 'allelix' in capsys.readouterr().out

    def test_missing_project(self, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        assert run('test', 'nowhere') == 4
        assert 'CorruptStore' in capsys.readouterr().err

    def test_empty_input(self, tmp_path, monkeypatch):
        (tmp_path / 'data').mkdir()
        monkeypatch.chdir(tmp_path)
        assert run('create', 'demo', 'data') == 1

    def test_create_refuses_existing(self, workspace, monkeypatch):
        monkeypatch.chdir(workspace)
        assert run('create', 'demo', 'data') == 1

    def test_locked(self, workspace, monkeypatch):
        monkeypatch.chdir(workspace)
        lock = workspace / 'demo.mixproj' / '.lock'
        lock.write_text('1')
        try:
            assert run('test', 'demo') == 6
        finally:
            lock.unlink()


class TestWorkflow:
    def test_tables_present(self, workspace):
        project = load_project(workspace / 'demo')
        for key in ('counts', 'samples', 'estimates', 'raw_scores', 'combined', 'difftest'):
            assert project.has(key)
        assert project.settings['model'] == 'NB'
        assert project.table('samples')['sample'].tolist() == list(SAMPLES)
        assert [entry['verb'] for entry in project.log] == ['create', 'fit', 'test', 'combine', 'difftest']

    def test_balanced_data_fits_near_half(self, workspace):
        estimates = load_project(workspace / 'demo').table('estimates')
        assert np.isfinite(estimates['loglik']).mean() > 0.9
        np.testing.assert_allclose(estimates['p'], 0.5)
        assert set(estimates['orientation']) == {'ref', 'alt'}

    def test_combined_pvalues_valid(self, workspace):
        combined = load_project(workspace / 'demo').table('combined')
        assert combined['snv_id'].nunique() == len(combined)
        assert (combined['log_final_pval'] <= 0).all()
        assert (combined['group'] == 'all').all()

    def test_export_all(self, workspace, monkeypatch, capsys):
        monkeypatch.chdir(workspace)
        assert run('export', 'all', 'demo', 'out') == 0
        written = sorted(p.name for p in (workspace / 'out').iterdir())
        assert written == ['combined.tsv', 'difftest.tsv', 'params.tsv', 'raw_scores.tsv']
        raw = pd.read_csv(workspace / 'out' / 'raw_scores.tsv', sep='\t')
        assert 0 < len(raw) <= len(load_project(workspace / 'demo').table('counts'))
        assert raw['pval_ref'].between(0, 1).all()

    def test_export_selector(self, workspace, monkeypatch):
        monkeypatch.chdir(workspace)
        assert run('export', 'params', 'demo', 'params_only') == 0
        assert [p.name for p in (workspace / 'params_only').iterdir()] == ['params.tsv']

    def test_visualize(self, workspace, monkeypatch):
        monkeypatch.chdir(workspace)
        assert run('visualize', 'demo', 'plots') == 0
        assert (workspace / 'plots' / 'diagnostics.pdf').stat().st_size > 0
        rfit = pd.read_csv(workspace / 'plots' / 'rfit.tsv', sep='\t')
        assert set(rfit['orientation']) == {'ref', 'alt'}

    def test_reproduce_identical_exports(self, workspace, monkeypatch):
        monkeypatch.chdir(workspace)
        assert run('reproduce', 'demo.mixproj/reproduce.json', '--into', 'copy') == 0
        assert run('export', 'all', 'demo', 'first') == 0
        assert run('export', 'all', 'copy', 'second') == 0
        for name in ('params.tsv', 'raw_scores.tsv', 'combined.tsv', 'difftest.tsv'):
            assert (workspace / 'first' / name).read_text() == (workspace / 'second' / name).read_text()
        demo, copy = load_project(workspace / 'demo'), load_project(workspace / 'copy')
        assert copy.settings == demo.settings
        for key in demo.tables:
            pd.testing.assert_frame_equal(copy.table(key), demo.table(key))

    def test_reproduce_detects_edited_input(self, workspace, monkeypatch):
        monkeypatch.chdir(workspace)
        data = workspace / 'data' / 's1.tsv'
        original = data.read_text()
        data.write_text(original + 'chr9\t5\t\tA\tG\t9\t9\n')
        try:
            assert run('reproduce', 'demo.mixproj/reproduce.json', '--into', 'broken') == 5
        finally:
            data.write_text(original)
