import math

import numpy as np
import pandas as pd
import pytest
from scipy import stats

from allelix.analysis.scoring import (
    COMBINED_COLUMNS, SCORE_COLUMNS, RawScore, ScoreCache, bh_adjust, combine_effect_sizes, combine_group,
    combine_log_pvalues, combine_pvalues, effect_size, mixture_right_tail_logp, score_group, score_observation,
    score_unique,
)
from allelix.errors import DegenerateWeights, DomainError, MissingEstimate
from allelix.models.distributions import DistributionSpec, right_tail_logp, truncated_mean
from allelix.models.mixture import LinearBias, build_mixture
from allelix.models.window import CountTable, Orientation
from tests.conftest import make_estimates, truncated_nb


def raw(log_ref, log_alt, es_ref=0.5, es_alt=-0.5, sample='s'):
    return RawScore('snv', sample, log_ref, log_alt, es_ref, es_alt)


class TestEffectSize:
    def test_identity(self):
        assert effect_size(20, 20.0) == 0.0

    def test_one_doubling(self):
        assert effect_size(10, 20.0) == pytest.approx(1.0)

    def test_mixture_mean(self):
        mean = 0.5 * 20.0 + 0.5 * 5.0
        assert effect_size(25, mean) == pytest.approx(-1.0)

    @pytest.mark.parametrize('observed,mean', [(0, 10.0), (10, 0.0), (-1, 5.0)])
    def test_domain(self, observed, mean):
        with pytest.raises(DomainError):
            effect_size(observed, mean)


class TestScoreObservation:
    def test_minimum_support(self, nb_estimates):
        score = score_observation(5, 20, nb_estimates, 1.0)
        assert score.log_pval_ref == 0.0
        assert score.pval_ref == 1.0

    def test_symmetric_fit(self, nb_estimates):
        score = score_observation(17, 17, nb_estimates, 1.0)
        assert score.log_pval_ref == score.log_pval_alt
        assert score.es_ref == score.es_alt

    def test_matches_distribution_tail(self, nb_estimates):
        score = score_observation(30, 15, nb_estimates, 1.0)
        spec = DistributionSpec.make('NB', 15.0, 0.5, l=5)
        assert score.log_pval_ref == pytest.approx(right_tail_logp(30, spec), rel=1e-6)
        assert score.es_ref == pytest.approx(math.log2(truncated_mean(spec)) - math.log2(30), rel=1e-10)
        alt_spec = DistributionSpec.make('NB', 30.0, 0.5, l=5)
        assert score.log_pval_alt == pytest.approx(right_tail_logp(15, alt_spec), rel=1e-6)

    def test_mixture_tail(self):
        estimates = make_estimates(w=0.7, bads=(2.0,))
        score = score_observation(40, 12, estimates, 2.0)
        mix = build_mixture(12, LinearBias(1.0, 0.0), 'NB', 2.0 / 3.0, 0.7, l=5)
        tails = [math.exp(right_tail_logp(40, spec)) for spec in mix.base]
        assert math.exp(score.log_pval_ref) == pytest.approx(0.7 * tails[0] + 0.3 * tails[1], rel=1e-9)
        assert mixture_right_tail_logp(40, mix) == pytest.approx(score.log_pval_ref, rel=1e-12)

    def test_below_truncation(self, nb_estimates):
        with pytest.raises(DomainError):
            score_observation(3, 20, nb_estimates, 1.0)

    def test_missing_estimate(self, nb_estimates):
        with pytest.raises(MissingEstimate):
            score_observation(20, 20, nb_estimates, 2.0)

    def test_cache_returns_same_object(self, nb_estimates):
        cache = ScoreCache(nb_estimates)
        assert cache.get(12, 30, 1.0) is cache.get(12, 30, 1.0)


class TestScoreUnique:
    def test_scores_each_tuple_once(self, nb_estimates):
        counts = CountTable.from_pairs([10, 10, 30, 4], [20, 20, 15, 12])
        frame = score_unique(counts, nb_estimates, threads=1)
        assert list(frame.columns) == SCORE_COLUMNS
        assert len(frame) == 2

    def test_threads_do_not_change_results(self, nb_estimates, rng):
        counts = CountTable.from_pairs(rng.integers(5, 60, 80), rng.integers(5, 60, 80))
        serial = score_unique(counts, nb_estimates, threads=1)
        parallel = score_unique(counts, nb_estimates, threads=4)
        pd.testing.assert_frame_equal(serial, parallel)

    def test_skips_uncovered_tuples(self):
        estimates = make_estimates(fixed=range(0, 50))
        counts = CountTable.from_pairs([10, 10], [20, 80])
        frame = score_unique(counts, estimates, threads=1)
        assert frame[['ref', 'alt']].values.tolist() == [[10, 20]]

    @pytest.mark.slow
    def test_null_mid_p_is_uniform(self, nb_estimates, rng):
        alt = rng.integers(80, 121, size=3000)
        ref = truncated_nb(rng, alt, 0.5, 5)
        cache = ScoreCache(nb_estimates)
        mid = [0.5 * (cache.get(x, y, 1.0).pval_ref + cache.get(x + 1, y, 1.0).pval_ref) for x, y in zip(ref, alt)]
        assert stats.kstest(mid, 'uniform').statistic < 0.06


class TestCombinePvalues:
    def test_half(self):
        assert combine_pvalues([0.5, 0.5, 0.5]) == pytest.approx(0.5, abs=1e-12)

    def test_single_study(self):
        assert combine_pvalues([0.1]) == pytest.approx(0.1, abs=0.02)

    def test_agreement_strengthens(self):
        assert combine_pvalues([0.05, 0.05, 0.05]) < 0.05

    def test_monotone(self):
        assert combine_pvalues([0.01, 0.3]) < combine_pvalues([0.02, 0.3])

    def test_log_scale_deep_tail(self):
        value = combine_log_pvalues([-2000.0, -3000.0])
        assert math.isfinite(value)
        assert value < math.log(1e-30)

    @pytest.mark.parametrize('pvals', [[], [0.0], [1.0], [0.5, 1.2]])
    def test_domain(self, pvals):
        with pytest.raises(DomainError):
            combine_pvalues(pvals)


class TestCombineEffectSizes:
    def test_weighted(self):
        assert combine_effect_sizes([1.0, 3.0], [math.exp(-1), math.exp(-3)]) == pytest.approx(2.5)

    def test_single(self):
        assert combine_effect_sizes([0.7], [0.2]) == pytest.approx(0.7)

    def test_equal_weights(self):
        assert combine_effect_sizes([1.0, 2.0, 6.0], [0.1, 0.1, 0.1]) == pytest.approx(3.0)

    def test_degenerate(self):
        with pytest.raises(DegenerateWeights):
            combine_effect_sizes([1.0, 2.0], [1.0, 1.0])

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            combine_effect_sizes([1.0, 2.0], [0.5])


class TestScoreGroup:
    def test_single_observation(self):
        rec = score_group('snv', [raw(math.log(0.01), math.log(0.4))], 'all')
        assert rec.final_side is Orientation.REF
        assert rec.final_pval == pytest.approx(0.01, abs=0.005)
        assert rec.final_es == pytest.approx(0.5)
        assert rec.log_final_pval == min(rec.log_comb_pval_ref, rec.log_comb_pval_alt)

    def test_repetition_strengthens(self):
        one = score_group('snv', [raw(math.log(0.01), math.log(0.4))], 'all')
        two = score_group('snv', [raw(math.log(0.01), math.log(0.4))] * 2, 'all')
        assert two.final_pval <= one.final_pval

    def test_tie_goes_to_ref(self):
        rec = score_group('snv', [raw(math.log(0.3), math.log(0.3), 0.2, -0.4)], 'all')
        assert rec.final_side is Orientation.REF
        assert rec.final_es == pytest.approx(0.2)

    def test_all_ones_flagged(self):
        rec = score_group('snv', [raw(0.0, math.log(0.2))], 'all')
        assert rec.degenerate_weights
        assert rec.comb_es_ref == 0.0
        assert rec.final_side is Orientation.ALT

    def test_accepts_frame(self):
        frame = pd.DataFrame({'log_pval_ref': [math.log(0.2)], 'log_pval_alt': [math.log(0.6)],
                              'es_ref': [1.0], 'es_alt': [-1.0]})
        assert score_group('snv', frame, 'g').n_obs == 1

    def test_empty(self):
        with pytest.raises(DomainError):
            score_group('snv', [], 'all')


class TestMultipleTesting:
    def test_bh(self):
        got = bh_adjust(np.log([0.01, 0.04, 0.03, 0.5]))
        np.testing.assert_allclose(got, [0.04, 0.04 * 4 / 3, 0.04 * 4 / 3, 0.5], rtol=1e-12)

    def test_empty(self):
        assert bh_adjust([]).size == 0


class TestCombineGroup:
    def test_groups_by_snv(self):
        records = pd.DataFrame({
            'snv_id': ['a', 'a', 'b', 'c'], 'ref': [30, 12, 8, 99], 'alt': [10, 12, 25, 99], 'bad': 1.0,
        })
        scores = pd.DataFrame({
            'ref': [30, 12, 8], 'alt': [10, 12, 25], 'bad': 1.0,
            'log_pval_ref': np.log([0.001, 0.5, 0.9]), 'log_pval_alt': np.log([0.9, 0.5, 0.002]),
            'es_ref': [-1.0, 0.0, 1.2], 'es_alt': [1.0, 0.0, -1.5],
        })
        frame = combine_group(records, scores, 'all')
        assert list(frame.columns) == COMBINED_COLUMNS
        assert frame['snv_id'].tolist() == ['a', 'b']
        assert frame['n_obs'].tolist() == [2, 1]
        assert frame['final_side'].tolist() == ['ref', 'alt']
        assert (frame['fdr_final'] >= np.exp(frame['log_final_pval'])).all()
