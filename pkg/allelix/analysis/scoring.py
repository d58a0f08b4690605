"""P-values, effect sizes and their combination across samples.

P-values are carried as natural logarithms so that values far below the
double-precision range survive combination and storage.
"""
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import mpmath
import numpy as np
import pandas as pd
from scipy import stats

from config import Config
from allelix.errors import AllelixError, DegenerateWeights, DomainError
from allelix.models.distributions import right_tail_logp, truncated_mean
from allelix.models.mixture import build_mixture
from allelix.models.window import Orientation

logger = logging.getLogger(__name__)

# raw p-values of exactly 1 are pulled just inside (0, 1) before combining
LOG_P_CEILING = math.log1p(-1e-10)

SCORE_COLUMNS = ['ref', 'alt', 'bad', 'log_pval_ref', 'log_pval_alt', 'es_ref', 'es_alt']


@dataclass(frozen=True)
class RawScore:
    snv_id: str
    sample: str
    log_pval_ref: float
    log_pval_alt: float
    es_ref: float
    es_alt: float

    @property
    def pval_ref(self):
        return math.exp(self.log_pval_ref)

    @property
    def pval_alt(self):
        return math.exp(self.log_pval_alt)


@dataclass(frozen=True)
class ScoreRecord:
    snv_id: str
    group: str
    n_obs: int
    log_comb_pval_ref: float
    log_comb_pval_alt: float
    comb_es_ref: float
    comb_es_alt: float
    log_final_pval: float
    final_es: float
    final_side: Orientation
    degenerate_weights: bool = False

    @property
    def final_pval(self):
        return math.exp(self.log_final_pval)


def effect_size(observed, conditional_mean):
    """log2(E[x]) - log2(x); negative when the observed count exceeds expectation"""
    if not (observed > 0 and conditional_mean > 0):
        raise DomainError(f"effect size needs positive inputs, got {observed}, {conditional_mean}")
    return math.log2(conditional_mean) - math.log2(observed)


def mixture_right_tail_logp(x, mix):
    tails = [right_tail_logp(x, spec) for spec in mix.base]
    if mix.base[0] == mix.base[1] or mix.w == 1.0:
        return tails[0]
    if mix.w == 0.0:
        return tails[1]
    return float(np.logaddexp(math.log(mix.w) + tails[0], math.log1p(-mix.w) + tails[1]))


def _score_side(variable, fixed, bad, orientation, estimates):
    est = estimates.lookup(orientation, bad, fixed)
    theta = est.theta
    mix = build_mixture(fixed, theta.bias, estimates.kind, theta.mu_or_p, theta.w, theta.kappa, estimates.l)
    log_p = mixture_right_tail_logp(variable, mix)
    mean = mix.w * truncated_mean(mix.base[0]) + (1.0 - mix.w) * truncated_mean(mix.base[1])
    return log_p, effect_size(variable, mean)


def score_observation(x, y, estimates, bad, snv_id='', sample=''):
    """Score one (ref=x, alt=y) observation against both conditional fits"""
    if x < estimates.l or y < estimates.l:
        raise DomainError(f"counts ({x}, {y}) fall below the truncation threshold {estimates.l}")
    bad = bad.bad if hasattr(bad, 'bad') else float(bad)
    log_ref, es_ref = _score_side(x, y, bad, Orientation.REF, estimates)
    log_alt, es_alt = _score_side(y, x, bad, Orientation.ALT, estimates)
    return RawScore(snv_id, sample, log_ref, log_alt, es_ref, es_alt)


class ScoreCache:
    """Memoised scores of unique (x, y, BAD) tuples, safe to share across threads"""

    def __init__(self, estimates):
        self.estimates = estimates
        self._scores = {}
        self._lock = threading.Lock()

    def get(self, x, y, bad):
        key = (int(x), int(y), float(bad))
        with self._lock:
            cached = self._scores.get(key)
        if cached is not None:
            return cached
        score = score_observation(key[0], key[1], self.estimates, key[2])
        with self._lock:
            self._scores.setdefault(key, score)
        return score


def score_unique(counts, estimates, threads=None):
    """Score every unique (ref, alt, bad) tuple of a CountTable.

    Tuples without a covering estimate are logged and left out.
    """
    threads = threads or Config.THREADS
    cache = ScoreCache(estimates)
    frame = counts.filtered(estimates.l).frame
    keys = list(frame[['ref', 'alt', 'bad']].itertuples(index=False, name=None))

    def work(key):
        try:
            return key, cache.get(*key)
        except AllelixError as exc:
            logger.warning(f"Skipping ({key[0]}, {key[1]}) at BAD {key[2]}: {exc}")
            return key, None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, keys))
    else:
        results = [work(key) for key in keys]
    rows = [
        {'ref': k[0], 'alt': k[1], 'bad': k[2], 'log_pval_ref': s.log_pval_ref,
         'log_pval_alt': s.log_pval_alt, 'es_ref': s.es_ref, 'es_alt': s.es_alt}
        for k, s in results if s is not None
    ]
    logger.info(f"Scored {len(rows)} of {len(keys)} unique count tuples")
    return pd.DataFrame(rows, columns=SCORE_COLUMNS)


def _t_log_sf(t, df):
    """ln P(T > t) for Student t, falling back to mpmath deep in the tail"""
    value = float(stats.t.logsf(t, df))
    if math.isfinite(value) and value > -700.0:
        return value
    with mpmath.workprec(Config.PRECISION_BITS):
        x = mpmath.mpf(df) / (df + mpmath.mpf(t) ** 2)
        tail = mpmath.betainc(mpmath.mpf(df) / 2, mpmath.mpf(1) / 2, 0, x, regularized=True) / 2
        return float(mpmath.log(tail))


def combine_log_pvalues(log_pvals):
    """Mudholkar-George logit combination on log p-values; returns the log of the combined p"""
    log_pvals = np.asarray(log_pvals, dtype=float)
    if log_pvals.size == 0:
        raise DomainError("cannot combine an empty list of p-values")
    if np.any(~(log_pvals < 0)):
        raise DomainError("p-values must lie in (0, 1)")
    n = log_pvals.size
    logits = log_pvals - np.log(-np.expm1(log_pvals))
    scale = math.sqrt(3.0 * (5 * n + 4) / (math.pi ** 2 * n * (5 * n + 2)))
    statistic = -math.fsum(logits) * scale
    return _t_log_sf(statistic, 5 * n + 4)


def combine_pvalues(pvals):
    pvals = np.asarray(pvals, dtype=float)
    if np.any((pvals <= 0) | (pvals >= 1)):
        raise DomainError("p-values must lie in (0, 1)")
    return math.exp(combine_log_pvalues(np.log(pvals)))


def combine_effect_sizes_log(es, log_pvals):
    """Weighted mean of effect sizes with weights -ln p"""
    es = np.asarray(es, dtype=float)
    weights = -np.asarray(log_pvals, dtype=float)
    if es.size == 0 or es.size != weights.size:
        raise DomainError("effect sizes and p-values must be non-empty and of equal length")
    total = weights.sum()
    if total <= 0:
        raise DegenerateWeights("all p-values equal 1")
    return float(np.dot(weights, es) / total)


def combine_effect_sizes(es, pvals):
    pvals = np.asarray(pvals, dtype=float)
    if np.any((pvals <= 0) | (pvals > 1)):
        raise DomainError("p-values must lie in (0, 1]")
    return combine_effect_sizes_log(es, np.log(pvals))


def score_group(snv_id, observations, group):
    """Combine raw scores of one SNV within a group into the final call.

    Args:
        snv_id: SNV identifier
        observations: RawScore objects (or a DataFrame with the same columns)
        group: group name

    Returns:
        ScoreRecord; ties between the two sides go to ref
    """
    if isinstance(observations, pd.DataFrame):
        frame = observations
    else:
        frame = pd.DataFrame([o.__dict__ for o in observations])
    if frame.empty:
        raise DomainError(f"SNV {snv_id} has no observations in group {group}")
    combined, effects, degenerate = {}, {}, False
    for side in ('ref', 'alt'):
        raw_logs = frame[f'log_pval_{side}'].to_numpy(dtype=float)
        combined[side] = combine_log_pvalues(np.minimum(raw_logs, LOG_P_CEILING))
        try:
            effects[side] = combine_effect_sizes_log(frame[f'es_{side}'].to_numpy(dtype=float), raw_logs)
        except DegenerateWeights:
            effects[side], degenerate = 0.0, True
    side = Orientation.REF if combined['ref'] <= combined['alt'] else Orientation.ALT
    return ScoreRecord(
        snv_id=snv_id, group=group, n_obs=len(frame),
        log_comb_pval_ref=combined['ref'], log_comb_pval_alt=combined['alt'],
        comb_es_ref=effects['ref'], comb_es_alt=effects['alt'],
        log_final_pval=combined[side.value], final_es=effects[side.value],
        final_side=side, degenerate_weights=degenerate,
    )


def bh_adjust(log_pvals):
    """Benjamini-Hochberg adjusted p-values (linear scale)"""
    log_pvals = np.asarray(log_pvals, dtype=float)
    if log_pvals.size == 0:
        return log_pvals
    return stats.false_discovery_control(np.exp(log_pvals), method='bh')


COMBINED_COLUMNS = ['group', 'snv_id', 'n_obs', 'log_pval_ref', 'log_pval_alt', 'es_ref', 'es_alt',
                    'log_final_pval', 'final_es', 'final_side', 'degenerate_weights',
                    'fdr_ref', 'fdr_alt', 'fdr_final']


def combine_group(records, raw_scores, group):
    """Combine per-observation scores of every SNV in one group.

    Args:
        records: observation rows with snv_id, ref, alt, bad
        raw_scores: score_unique output keyed by (ref, alt, bad)
        group: group name written into every row

    Returns:
        DataFrame with COMBINED_COLUMNS, BH-adjusted within the group
    """
    merged = records.merge(raw_scores, on=['ref', 'alt', 'bad'], how='left')
    missing = merged['log_pval_ref'].isna()
    if missing.any():
        logger.warning(f"{int(missing.sum())} observations in group {group} have no raw score")
    merged = merged[~missing]
    rows = []
    for snv_id, obs in merged.groupby('snv_id', sort=True):
        rec = score_group(snv_id, obs, group)
        rows.append((group, snv_id, rec.n_obs, rec.log_comb_pval_ref, rec.log_comb_pval_alt,
                     rec.comb_es_ref, rec.comb_es_alt, rec.log_final_pval, rec.final_es,
                     rec.final_side.value, rec.degenerate_weights))
    frame = pd.DataFrame(rows, columns=COMBINED_COLUMNS[:-3])
    frame['fdr_ref'] = bh_adjust(frame['log_pval_ref'])
    frame['fdr_alt'] = bh_adjust(frame['log_pval_alt'])
    frame['fdr_final'] = bh_adjust(frame['log_final_pval'])
    return frame.astype({'n_obs': 'int64', 'degenerate_weights': 'bool', 'fdr_ref': 'float64',
                         'fdr_alt': 'float64', 'fdr_final': 'float64'})
