import numpy as np
import pandas as pd
import pytest
from scipy import stats

from allelix.analysis.difftest import (
    DIFFTEST_COLUMNS, P_BOUNDS, TestMethod as Method, difftest_all, difftest_snv, lrt, refit_p, wald_test,
)
from allelix.errors import DomainError, MissingEstimate, NestingViolation
from allelix.models.window import Orientation
from tests.conftest import make_estimates, simulate_observations


class TestWald:
    def test_equal_estimates(self):
        assert wald_test(0.6, 50.0, 0.6, 80.0) == 1.0

    def test_critical_value(self):
        # sqrt(1/200 + 1/200) = 0.1
        assert wald_test(0.7, 200.0, 0.7 - 0.1959964, 200.0) == pytest.approx(0.05, abs=1e-6)

    def test_less_information_weaker(self):
        strong = wald_test(0.7, 200.0, 0.6, 200.0)
        weak = wald_test(0.7, 100.0, 0.6, 100.0)
        assert weak > strong

    def test_non_positive_information(self):
        with pytest.raises(DomainError):
            wald_test(0.6, 0.0, 0.5, 10.0)


class TestLRT:
    def test_equal_likelihoods(self):
        assert lrt(-120.0, -120.0) == 1.0

    def test_critical_value(self):
        assert lrt(-100.0, -100.0 - 3.841459 / 2) == pytest.approx(0.05, abs=1e-6)

    def test_statistic_ten(self):
        assert lrt(-100.0, -105.0) == pytest.approx(stats.chi2.sf(10.0, 1), rel=1e-12)
        assert lrt(-100.0, -105.0) == pytest.approx(0.001565, abs=1e-6)

    def test_small_deficit_tolerated(self):
        assert lrt(-100.0, -100.0 + 5e-7) == 1.0

    def test_nesting_violation(self):
        with pytest.raises(NestingViolation):
            lrt(-100.0, -99.0)


class TestRefit:
    def test_balanced(self, rng, nb_estimates):
        obs = simulate_observations(rng, 2000, 0.5)
        fit = refit_p(obs, nb_estimates, Orientation.REF)
        assert fit.p_hat == pytest.approx(0.5, abs=0.02)
        assert fit.info > 0
        assert fit.n_obs == 2000
        assert not fit.boundary

    def test_recovers_shift(self, rng, nb_estimates):
        obs = simulate_observations(rng, 2000, 0.7)
        fit = refit_p(obs, nb_estimates, Orientation.REF)
        assert fit.p_hat == pytest.approx(0.7, abs=0.03)
        assert fit.se is not None and fit.se < 0.02

    def test_bounds(self, rng, nb_estimates):
        obs = simulate_observations(rng, 50, 0.5)
        fit = refit_p(obs, nb_estimates, Orientation.REF)
        assert P_BOUNDS[0] <= fit.p_hat <= P_BOUNDS[1]

    def test_uncovered_rows_dropped(self, rng):
        estimates = make_estimates(fixed=range(0, 21))
        obs = simulate_observations(rng, 200, 0.5, fixed_lo=10, fixed_hi=30)
        fit = refit_p(obs, estimates, Orientation.REF)
        assert fit.dropped == int((obs['alt'] > 20).sum())
        assert fit.n_obs + fit.dropped == 200

    def test_nothing_covered(self, rng):
        estimates = make_estimates(fixed=range(0, 5))
        obs = simulate_observations(rng, 20, 0.5)
        with pytest.raises(MissingEstimate):
            refit_p(obs, estimates, Orientation.REF)

    def test_empty(self, nb_estimates):
        with pytest.raises(DomainError):
            refit_p(pd.DataFrame(columns=['ref', 'alt', 'bad']), nb_estimates, Orientation.REF)


class TestDifftestSNV:
    def test_identical_groups_wald(self, rng, nb_estimates):
        obs = simulate_observations(rng, 200, 0.5)
        rec = difftest_snv('snv', obs, obs.copy(), nb_estimates, Method.WALD)
        assert rec.final_pval == pytest.approx(1.0, abs=1e-9)
        assert rec.p_control == rec.p_test

    def test_identical_groups_lrt(self, rng, nb_estimates):
        obs = simulate_observations(rng, 200, 0.5)
        rec = difftest_snv('snv', obs, obs.copy(), nb_estimates, Method.LRT)
        assert rec.final_pval == pytest.approx(1.0, abs=1e-4)

    @pytest.mark.parametrize('method', [Method.WALD, Method.LRT])
    def test_power(self, rng, nb_estimates, method):
        control = simulate_observations(rng, 1000, 0.5)
        test = simulate_observations(rng, 1000, 0.75)
        rec = difftest_snv('snv', control, test, nb_estimates, method)
        assert rec.final_pval < 1e-4
        assert rec.final_pval == min(rec.pval_side1, rec.pval_side2)
        assert rec.method is method

    def test_method_from_string(self, rng, nb_estimates):
        obs = simulate_observations(rng, 50, 0.5)
        assert difftest_snv('snv', obs, obs, nb_estimates, 'LRT').method is Method.LRT

    def test_needs_both_groups(self, rng, nb_estimates):
        obs = simulate_observations(rng, 50, 0.5)
        with pytest.raises(DomainError):
            difftest_snv('snv', obs, obs.iloc[:0], nb_estimates)


class TestDifftestAll:
    def test_shared_snvs_only(self, rng, nb_estimates):
        control = pd.concat([simulate_observations(rng, 40, 0.5).assign(snv_id='a'),
                             simulate_observations(rng, 40, 0.5).assign(snv_id='b')])
        test = pd.concat([simulate_observations(rng, 40, 0.5).assign(snv_id='a'),
                          simulate_observations(rng, 40, 0.5).assign(snv_id='c')])
        frame = difftest_all(control, test, nb_estimates)
        assert list(frame.columns) == DIFFTEST_COLUMNS
        assert frame['snv_id'].tolist() == ['a']
        assert frame['final_pval'].dtype == np.float64
        assert frame['method'].tolist() == ['wald']

    @pytest.mark.slow
    def test_null_calibration(self, rng, nb_estimates):
        pvals = []
        for _ in range(500):
            control = simulate_observations(rng, 30, 0.5, fixed_lo=20, fixed_hi=20)
            test = simulate_observations(rng, 30, 0.5, fixed_lo=20, fixed_hi=20)
            fit_c = refit_p(control, nb_estimates, Orientation.REF)
            fit_t = refit_p(test, nb_estimates, Orientation.REF)
            pooled = refit_p(pd.concat([control, test]), nb_estimates, Orientation.REF)
            pvals.append(lrt(fit_c.loglik + fit_t.loglik, pooled.loglik))
        assert stats.kstest(pvals, 'uniform').statistic < 0.1
