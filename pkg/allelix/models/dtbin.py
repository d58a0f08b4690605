"""Doubly truncated binomial diagnostic for the linear-bias assumption.

Never used for scoring: it only reports how the size parameter r of a
binomial truncated to [a, b] moves along the fixed allele.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.optimize import minimize_scalar
from scipy.special import gammaln

from allelix.errors import DegenerateWindow, DomainError
from allelix.models.window import Orientation
from allelix.utils.specfun import reg_inc_beta

logger = logging.getLogger(__name__)

MIN_UNIQUE = 4


@dataclass(frozen=True)
class DTBinParams:
    r: float
    a: int
    b: int

    def __post_init__(self):
        if not self.a < self.b:
            raise DomainError(f"DTBin needs a < b, got a={self.a}, b={self.b}")
        if not self.r >= self.b:
            raise DomainError(f"DTBin needs r >= b, got r={self.r}, b={self.b}")


def _binom_cdf(k, r, p):
    """P(X <= k) for a binomial with real size r > k"""
    if k < 0:
        return 0.0
    return reg_inc_beta(1.0 - p, r - k, k + 1.0)


def dtbin_loglik(r, counts, weights, a, b, p=0.5):
    counts = np.asarray(counts, dtype=float)
    weights = np.asarray(weights, dtype=float)
    log_bin = (gammaln(r + 1.0) - gammaln(counts + 1.0) - gammaln(r - counts + 1.0)
               + counts * math.log(p) + (r - counts) * math.log1p(-p))
    mass = _binom_cdf(b, r, p) - _binom_cdf(a - 1, r, p)
    if not mass > 0:
        return -np.inf
    return float(np.dot(weights, log_bin) - weights.sum() * math.log(mass))


def dtbin_fit(counts, weights=None, p=0.5):
    """Maximum-likelihood r of a binomial truncated to the observed [min, max].

    Args:
        counts: allele counts in the window
        weights: optional multiplicities
        p: per-read success probability

    Returns:
        DTBinParams
    """
    counts = np.asarray(counts, dtype=np.int64)
    weights = np.ones(counts.shape) if weights is None else np.asarray(weights, dtype=float)
    if np.unique(counts).size < MIN_UNIQUE:
        raise DegenerateWindow(f"DTBin needs at least {MIN_UNIQUE} distinct counts")
    a, b = int(counts.min()), int(counts.max())
    upper = 10.0 * b / p + 10.0
    res = minimize_scalar(
        lambda r: -dtbin_loglik(r, counts, weights, a, b, p),
        bounds=(b + 1e-6, upper), method='bounded', options={'xatol': 1e-6}
    )
    return DTBinParams(float(res.x), a, b)


def dtbin_scan(table, orientation, p=0.5):
    """Run dtbin_fit along every fixed count of a single-BAD table.

    Each window grows one count per side until it covers at least four
    distinct variable counts.

    Returns:
        DataFrame with fixed_value, r, a, b, n
    """
    orientation = Orientation(orientation)
    frame = table.frame
    fixed = frame[orientation.fixed_column].to_numpy()
    variable = frame[orientation.variable_column].to_numpy()
    weight = frame['n'].to_numpy(dtype=float)
    lo_all, hi_all = int(fixed.min()), int(fixed.max())
    rows = []
    for value in np.unique(fixed):
        lo = hi = int(value)
        while True:
            mask = (fixed >= lo) & (fixed <= hi)
            if np.unique(variable[mask]).size >= MIN_UNIQUE or (lo <= lo_all and hi >= hi_all):
                break
            lo, hi = max(lo - 1, lo_all), min(hi + 1, hi_all)
        try:
            est = dtbin_fit(variable[mask], weight[mask], p)
        except DegenerateWindow as exc:
            logger.debug(f"DTBin skipped at {value}: {exc}")
            continue
        rows.append({'fixed_value': int(value), 'r': est.r, 'a': est.a, 'b': est.b,
                     'n': int(weight[mask].sum())})
    return pd.DataFrame(rows, columns=['fixed_value', 'r', 'a', 'b', 'n'])
