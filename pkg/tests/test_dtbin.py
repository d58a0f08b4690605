import numpy as np
import pytest

from allelix.errors import DegenerateWindow, DomainError
from allelix.models.dtbin import DTBinParams, dtbin_fit, dtbin_loglik, dtbin_scan
from allelix.models.window import CountTable, Orientation


class TestDTBinFit:
    def test_recovers_size(self, rng):
        draws = rng.binomial(100, 0.5, size=10 ** 4)
        draws = draws[(draws >= 30) & (draws <= 70)]
        est = dtbin_fit(draws)
        assert 95 <= est.r <= 105
        assert (est.a, est.b) == (int(draws.min()), int(draws.max()))

    def test_doubling_scales_size(self, rng):
        draws = rng.binomial(100, 0.5, size=10 ** 4)
        single = dtbin_fit(draws).r
        doubled = dtbin_fit(2 * draws).r
        assert doubled / single == pytest.approx(2.0, rel=0.05)

    def test_weights_match_repetition(self, rng):
        counts = np.array([40, 45, 50, 55, 60])
        weights = np.array([3, 10, 20, 10, 3])
        weighted = dtbin_fit(counts, weights)
        repeated = dtbin_fit(np.repeat(counts, weights))
        assert weighted.r == pytest.approx(repeated.r, rel=1e-6)

    def test_constant_window(self):
        with pytest.raises(DegenerateWindow):
            dtbin_fit(np.full(50, 20))

    def test_loglik_penalizes_small_size(self):
        counts = np.array([30, 40, 50, 60, 70])
        weights = np.ones(5)
        assert dtbin_loglik(100.0, counts, weights, 30, 70) > dtbin_loglik(71.0, counts, weights, 30, 70)

    def test_params_validation(self):
        with pytest.raises(DomainError):
            DTBinParams(100.0, 50, 50)
        with pytest.raises(DomainError):
            DTBinParams(10.0, 5, 50)


class TestDTBinScan:
    def test_columns_and_rows(self, rng):
        alt = rng.integers(10, 20, size=600)
        ref = rng.binomial(2 * alt, 0.5)
        ref = np.maximum(ref, 1)
        frame = dtbin_scan(CountTable.from_pairs(ref, alt), Orientation.REF)
        assert list(frame.columns) == ['fixed_value', 'r', 'a', 'b', 'n']
        assert set(frame['fixed_value']) <= set(range(10, 20))
        assert (frame['r'] >= frame['b']).all()

    def test_skips_degenerate_table(self):
        frame = dtbin_scan(CountTable.from_pairs([10, 10, 10], [5, 6, 7]), Orientation.REF)
        assert frame.empty
