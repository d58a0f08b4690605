"""Differential allele-specificity between a control and a test group.

The window parameters (b, a, kappa, w) are frozen at their global-fit
values; only the mixture probability p is refitted per group.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numdifftools as ndt
import numpy as np
import pandas as pd
from scipy import stats
from scipy.optimize import minimize_scalar

from allelix.errors import AllelixError, DomainError, MissingEstimate, NestingViolation
from allelix.models.mixture import mixture_logpmf_array
from allelix.models.window import Orientation

logger = logging.getLogger(__name__)

P_BOUNDS = (0.01, 0.99)
_GRID = np.linspace(P_BOUNDS[0], P_BOUNDS[1], 99)
_CURVATURE_STEP = 1e-4
NESTING_TOL = 1e-6


class TestMethod(str, Enum):
    WALD = 'wald'
    LRT = 'lrt'


@dataclass(frozen=True)
class RefitResult:
    p_hat: float
    loglik: float
    info: float
    n_obs: int
    dropped: int = 0
    boundary: bool = False

    @property
    def se(self):
        return 1.0 / math.sqrt(self.info) if self.info > 0 else None


@dataclass(frozen=True)
class DiffTestRecord:
    snv_id: str
    p_control: float
    p_test: float
    se_control: Optional[float]
    se_test: Optional[float]
    statistic: float
    pval_side1: float
    pval_side2: float
    final_pval: float
    final_side: Orientation
    method: TestMethod


def _as_frame(observations):
    frame = pd.DataFrame(observations).copy()
    if 'n' not in frame.columns:
        frame['n'] = 1
    return frame


def _frozen_groups(frame, estimates, orientation):
    """Group observations by the window estimate that covers their fixed count"""
    orientation = Orientation(orientation)
    groups, dropped = {}, 0
    for row in frame.itertuples(index=False):
        fixed = int(getattr(row, orientation.fixed_column))
        variable = int(getattr(row, orientation.variable_column))
        try:
            est = estimates.lookup(orientation, float(row.bad), fixed)
        except MissingEstimate:
            dropped += int(row.n)
            continue
        key = (est.bad, est.fixed_value)
        entry = groups.setdefault(key, (est, [], [], []))
        entry[1].append(fixed)
        entry[2].append(variable)
        entry[3].append(float(row.n))
    if dropped:
        logger.warning(f"Dropped {dropped} {orientation.value} observations without a fitted window")
    return [(est, np.array(fx, dtype=float), np.array(vr, dtype=float), np.array(wt))
            for est, fx, vr, wt in groups.values()], dropped


def _group_loglik(p, groups, estimates):
    total = 0.0
    for est, fixed, variable, weight in groups:
        theta = est.theta
        try:
            values = mixture_logpmf_array(variable, fixed, theta.bias, estimates.kind,
                                          p, theta.w, theta.kappa, estimates.l)
        except (AllelixError, ValueError):
            return -np.inf
        total += float(np.dot(weight, values))
    return total if math.isfinite(total) else -np.inf


def refit_p(observations, estimates, orientation):
    """1-D maximum likelihood for p with every other window parameter frozen.

    Args:
        observations: records with ref, alt, bad and optional n columns
        estimates: EstimateTable from the global fit
        orientation: which conditional model to refit

    Returns:
        RefitResult with the MLE, its log-likelihood and observed information
    """
    frame = _as_frame(observations)
    if frame.empty:
        raise DomainError("refit_p needs at least one observation")
    groups, dropped = _frozen_groups(frame, estimates, orientation)
    if not groups:
        raise MissingEstimate(f"no {Orientation(orientation).value} observation has a fitted window")

    def objective(p):
        value = _group_loglik(p, groups, estimates)
        return -value if math.isfinite(value) else 1e300

    values = np.array([objective(p) for p in _GRID])
    best = int(np.argmin(values))
    lo = _GRID[max(best - 1, 0)]
    hi = _GRID[min(best + 1, len(_GRID) - 1)]
    res = minimize_scalar(objective, bounds=(lo, hi), method='bounded', options={'xatol': 1e-10})
    p_hat = float(res.x) if res.fun <= values[best] else float(_GRID[best])
    loglik = -objective(p_hat)

    h = min(_CURVATURE_STEP, p_hat - P_BOUNDS[0] / 2, (1.0 - P_BOUNDS[0] / 2) - p_hat)
    curvature = ndt.Derivative(objective, step=h, n=2, method='central')(p_hat)
    boundary = p_hat - P_BOUNDS[0] < 1e-3 or P_BOUNDS[1] - p_hat < 1e-3
    n_obs = int(sum(weight.sum() for _, _, _, weight in groups))
    return RefitResult(p_hat, loglik, float(curvature), n_obs, dropped, boundary)


def wald_test(p_c, info_c, p_t, info_t):
    """Two-sided normal p-value of (p_c - p_t) / sqrt(1/info_c + 1/info_t)"""
    if not (info_c > 0 and info_t > 0):
        raise DomainError(f"Wald test needs positive information, got {info_c}, {info_t}")
    z = (p_c - p_t) / math.sqrt(1.0 / info_c + 1.0 / info_t)
    return float(2.0 * stats.norm.sf(abs(z)))


def lrt(loglik_free, loglik_constrained):
    """Upper-tail chi2(1) p-value of 2 (free - constrained)"""
    diff = loglik_free - loglik_constrained
    if diff < -NESTING_TOL:
        raise NestingViolation(f"free log-likelihood {loglik_free} below constrained {loglik_constrained}")
    return float(stats.chi2.sf(max(0.0, 2.0 * diff), 1))


def _side(control, test, estimates, orientation, method):
    fit_c = refit_p(control, estimates, orientation)
    fit_t = refit_p(test, estimates, orientation)
    if method is TestMethod.WALD:
        if fit_c.info > 0 and fit_t.info > 0:
            statistic = (fit_c.p_hat - fit_t.p_hat) / math.sqrt(1.0 / fit_c.info + 1.0 / fit_t.info)
            pval = wald_test(fit_c.p_hat, fit_c.info, fit_t.p_hat, fit_t.info)
        else:
            logger.warning(f"{Orientation(orientation).value}: non-positive information, side reported as p = 1")
            statistic, pval = 0.0, 1.0
    else:
        pooled = refit_p(pd.concat([_as_frame(control), _as_frame(test)], ignore_index=True),
                         estimates, orientation)
        free = fit_c.loglik + fit_t.loglik
        statistic = max(0.0, 2.0 * (free - pooled.loglik))
        pval = lrt(free, pooled.loglik)
    return fit_c, fit_t, statistic, pval


def difftest_snv(snv_id, control_obs, test_obs, estimates, method=TestMethod.WALD):
    """Run the test on both conditional orientations and keep the smaller p-value"""
    method = TestMethod(str(method).lower() if not isinstance(method, TestMethod) else method)
    if len(control_obs) == 0 or len(test_obs) == 0:
        raise DomainError(f"SNV {snv_id} must be observed in both groups")
    sides = {o: _side(control_obs, test_obs, estimates, o, method) for o in (Orientation.REF, Orientation.ALT)}
    pval_ref, pval_alt = sides[Orientation.REF][3], sides[Orientation.ALT][3]
    final = Orientation.REF if pval_ref <= pval_alt else Orientation.ALT
    fit_c, fit_t, statistic, pval = sides[final]
    return DiffTestRecord(
        snv_id=snv_id, p_control=fit_c.p_hat, p_test=fit_t.p_hat,
        se_control=fit_c.se, se_test=fit_t.se, statistic=statistic,
        pval_side1=pval_ref, pval_side2=pval_alt, final_pval=min(pval_ref, pval_alt),
        final_side=final, method=method,
    )


DIFFTEST_COLUMNS = ['snv_id', 'p_control', 'p_test', 'se_control', 'se_test', 'statistic',
                    'pval_ref', 'pval_alt', 'final_pval', 'final_side', 'method']


def difftest_all(control, test, estimates, method=TestMethod.WALD):
    """Test every SNV observed in both groups.

    Args:
        control, test: observation frames with snv_id, ref, alt, bad columns

    Returns:
        DataFrame with one row per tested SNV
    """
    shared = sorted(set(control['snv_id']) & set(test['snv_id']))
    only = len(set(control['snv_id']) ^ set(test['snv_id']))
    if only:
        logger.warning(f"Skipping {only} SNVs observed in only one group")
    by_c, by_t = dict(tuple(control.groupby('snv_id'))), dict(tuple(test.groupby('snv_id')))
    rows = []
    for snv in shared:
        try:
            rec = difftest_snv(snv, by_c[snv], by_t[snv], estimates, method)
        except AllelixError as exc:
            logger.warning(f"Skipping {snv}: {exc}")
            continue
        rows.append({
            'snv_id': rec.snv_id, 'p_control': rec.p_control, 'p_test': rec.p_test,
            'se_control': rec.se_control, 'se_test': rec.se_test, 'statistic': rec.statistic,
            'pval_ref': rec.pval_side1, 'pval_alt': rec.pval_side2, 'final_pval': rec.final_pval,
            'final_side': rec.final_side.value, 'method': rec.method.value,
        })
    floats = ['p_control', 'p_test', 'se_control', 'se_test', 'statistic', 'pval_ref', 'pval_alt', 'final_pval']
    return pd.DataFrame(rows, columns=DIFFTEST_COLUMNS).astype({c: 'float64' for c in floats})
