import numpy as np
import pandas as pd
import pytest

from allelix.errors import DomainError, EmptyDataset, EmptyWindow
from allelix.models.window import CountTable, Orientation, build_window


def uniform_rows(lo, hi, per_row=100, bad=1.0):
    """One (ref=15, alt=value) row per fixed value, each with per_row observations"""
    alt = np.arange(lo, hi + 1)
    return CountTable.from_pairs(np.full(alt.shape, 15), alt, bad=bad, n=np.full(alt.shape, per_row))


class TestCountTable:
    def test_deduplicates(self):
        table = CountTable.from_pairs([10, 10, 12], [8, 8, 8])
        assert len(table) == 2
        assert table.n_obs == 3
        row = table.frame[(table.frame['ref'] == 10)].iloc[0]
        assert row['n'] == 2

    def test_order_independent(self, rng):
        ref = rng.integers(5, 40, size=200)
        alt = rng.integers(5, 40, size=200)
        perm = rng.permutation(200)
        a = CountTable.from_pairs(ref, alt)
        b = CountTable.from_pairs(ref[perm], alt[perm])
        pd.testing.assert_frame_equal(a.frame, b.frame)

    def test_filtered(self):
        table = CountTable.from_pairs([3, 10, 10], [10, 4, 10]).filtered(5)
        assert table.n_obs == 1

    def test_bads_partition(self):
        frame = pd.DataFrame({'ref': [10, 11, 12], 'alt': [9, 9, 9], 'bad': [1.0, 2.0, 2.0], 'n': [1, 1, 1]})
        table = CountTable(frame)
        assert table.bads == [1.0, 2.0]
        assert table.for_bad(2.0).n_obs == 2

    def test_missing_columns(self):
        with pytest.raises(DomainError):
            CountTable(pd.DataFrame({'ref': [1]}))

    def test_fixed_range(self):
        table = CountTable.from_pairs([10, 20], [7, 30])
        assert table.fixed_range(Orientation.REF) == (7, 30)
        assert table.fixed_range(Orientation.ALT) == (10, 20)
        with pytest.raises(EmptyDataset):
            CountTable.from_pairs([], []).fixed_range(Orientation.REF)


class TestOrientation:
    def test_columns(self):
        assert Orientation.REF.fixed_column == 'alt'
        assert Orientation.REF.variable_column == 'ref'
        assert Orientation.ALT.fixed_column == 'ref'


class TestBuildWindow:
    def test_symmetric_growth(self):
        window = build_window(uniform_rows(10, 30), Orientation.REF, 20, 450)
        assert (window.lo, window.hi) == (18, 22)
        assert window.n_obs == 500

    def test_single_row_is_enough(self):
        window = build_window(uniform_rows(10, 30, per_row=1000), Orientation.REF, 20, 450)
        assert (window.lo, window.hi) == (20, 20)
        assert window.n_obs == 1000

    def test_lower_bound_stops_at_truncation(self):
        table = uniform_rows(2, 30)
        window = build_window(table, Orientation.REF, 6, 1000, l=5)
        assert window.lo == 5
        assert window.n_obs >= 1000

    def test_exhausts_dataset(self):
        window = build_window(uniform_rows(10, 30), Orientation.REF, 20, 10 ** 6)
        assert (window.lo, window.hi) == (10, 30)
        assert window.n_obs == 2100

    def test_carries_observations(self):
        window = build_window(uniform_rows(10, 30), Orientation.REF, 12, 100)
        np.testing.assert_array_equal(window.fixed, [12.0])
        np.testing.assert_array_equal(window.variable, [15.0])
        assert window.n_unique == 1

    def test_signature_tracks_content(self):
        table = uniform_rows(10, 30)
        a = build_window(table, Orientation.REF, 20, 10 ** 6)
        b = build_window(table, Orientation.REF, 21, 10 ** 6)
        c = build_window(table, Orientation.REF, 20, 450)
        assert a.signature() == b.signature()
        assert a.signature() != c.signature()

    def test_empty(self):
        with pytest.raises(EmptyWindow):
            build_window(CountTable.from_pairs([], []), Orientation.REF, 5, 10)

    def test_bad_size(self):
        with pytest.raises(DomainError):
            build_window(uniform_rows(10, 30), Orientation.REF, 20, 0)
