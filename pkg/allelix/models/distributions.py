"""Left-truncated count distributions: NB, BetaNB and MCNB.

PMFs are available both from closed-form log-gamma expressions and from
one- or two-term recurrences. CDFs of NB and BetaNB go through continued
fractions so their cost does not grow with x.

BetaNB is parametrized so that mu is the mean of the Beta-distributed
per-read success probability: the x-side shape is mu*kappa and the r-side
shape is (1 - mu)*kappa. Under this convention BetaNB(r, mu, kappa) tends
to NB(r, p=mu) as kappa grows.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import mpmath
import numpy as np
from scipy.special import betaln, gammaln

from config import Config
from allelix.errors import DomainError, NonConvergence, NumericFailure
from allelix.utils.specfun import hyp3f2_unit, reg_inc_beta

logger = logging.getLogger(__name__)

# ln(1e15): past this (p + 1/p - 1)^r swamps the -1 in the MCNB base case
_MCNB_GUARD = math.log(1e15)
_RESCALE = 1e150


class ModelKind(str, Enum):
    NB = 'NB'
    BETANB = 'BetaNB'
    MCNB = 'MCNB'

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        for kind in cls:
            if kind.value.lower() == str(value).lower():
                return kind
        raise DomainError(f"unknown model kind {value!r}; expected one of NB, BetaNB, MCNB")


def _check_rp(r, p):
    if not (r > 0 and math.isfinite(r)):
        raise DomainError(f"r must be positive and finite, got {r}")
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")


@dataclass(frozen=True)
class NBParams:
    r: float
    p: float

    def __post_init__(self):
        _check_rp(self.r, self.p)


@dataclass(frozen=True)
class BetaNBParams:
    r: float
    mu: float
    kappa: float

    def __post_init__(self):
        _check_rp(self.r, self.mu)
        if not (self.kappa > 0 and math.isfinite(self.kappa)):
            raise DomainError(f"kappa must be positive and finite, got {self.kappa}")

    @property
    def alpha(self):
        return self.mu * self.kappa

    @property
    def beta(self):
        return (1.0 - self.mu) * self.kappa


@dataclass(frozen=True)
class MCNBParams:
    r: float
    p: float

    def __post_init__(self):
        _check_rp(self.r, self.p)


@dataclass(frozen=True)
class Truncation:
    l: int = 0

    def __post_init__(self):
        if self.l < 0:
            raise DomainError(f"truncation threshold must be >= 0, got {self.l}")


Params = Union[NBParams, BetaNBParams, MCNBParams]
_PARAM_TYPES = {ModelKind.NB: NBParams, ModelKind.BETANB: BetaNBParams, ModelKind.MCNB: MCNBParams}


@dataclass(frozen=True)
class DistributionSpec:
    kind: ModelKind
    params: Params
    trunc: Truncation = Truncation()

    def __post_init__(self):
        if not isinstance(self.params, _PARAM_TYPES[self.kind]):
            raise DomainError(f"{type(self.params).__name__} does not match model kind {self.kind.value}")

    @classmethod
    def make(cls, kind, r, p, kappa=None, l=0):
        """Build a spec from flat values; p doubles as mu for BetaNB"""
        kind = ModelKind.parse(kind)
        if kind is ModelKind.BETANB:
            if kappa is None:
                raise DomainError("BetaNB needs kappa")
            params = BetaNBParams(r, p, kappa)
        else:
            params = _PARAM_TYPES[kind](r, p)
        return cls(kind, params, Truncation(l))


class NB:
    @staticmethod
    def logpmf(x, params):
        """ln f(x) = ln G(x+r) - ln G(r) - ln G(x+1) + r ln(1-p) + x ln p"""
        x = np.asarray(x, dtype=float)
        r, p = params.r, params.p
        return gammaln(x + r) - gammaln(r) - gammaln(x + 1.0) + r * math.log1p(-p) + x * math.log(p)

    @staticmethod
    def log_pmf_table(x_max, params):
        """Panjer recursion f(x) = p (r + x - 1)/x f(x-1), accumulated in log space"""
        if x_max < 0:
            raise DomainError(f"x_max must be >= 0, got {x_max}")
        r, p = params.r, params.p
        steps = np.arange(1, x_max + 1, dtype=float)
        log_ratio = math.log(p) + np.log(r + steps - 1.0) - np.log(steps)
        return np.concatenate(([r * math.log1p(-p)], r * math.log1p(-p) + np.cumsum(log_ratio)))

    @staticmethod
    def pmf_table(x_max, params):
        return np.exp(NB.log_pmf_table(x_max, params))

    @staticmethod
    def cdf(x, params):
        """P(X <= x) = I_{1-p}(r, x+1), evaluated on the branch where the fraction converges"""
        if x < 0:
            return 0.0
        r, p = params.r, params.p
        if r <= x * (1.0 - p) / p:
            value = 1.0 - reg_inc_beta(p, x + 1.0, r, mirror=False)
        else:
            value = reg_inc_beta(1.0 - p, r, x + 1.0, mirror=False)
        return min(1.0, max(0.0, value))


class BetaNB:
    @staticmethod
    def logpmf(x, params):
        x = np.asarray(x, dtype=float)
        r, a, b = params.r, params.alpha, params.beta
        return (gammaln(x + r) - gammaln(r) - gammaln(x + 1.0)
                + betaln(a + x, b + r) - betaln(a, b))

    @staticmethod
    def log_base(params):
        """ln f(0) = ln G(kappa) + ln G(beta + r) - ln G(beta) - ln G(kappa + r)"""
        r, k, b = params.r, params.kappa, params.beta
        return gammaln(k) + gammaln(b + r) - gammaln(b) - gammaln(k + r)

    @staticmethod
    def log_pmf_table(x_max, params):
        """Hesselager recursion f(x) = (x+r-1)(x+alpha-1)/(x(x+kappa+r-1)) f(x-1)"""
        if x_max < 0:
            raise DomainError(f"x_max must be >= 0, got {x_max}")
        r, k, a = params.r, params.kappa, params.alpha
        steps = np.arange(1, x_max + 1, dtype=float)
        log_ratio = (np.log(steps + r - 1.0) + np.log(steps + a - 1.0)
                     - np.log(steps) - np.log(steps + k + r - 1.0))
        base = BetaNB.log_base(params)
        return np.concatenate(([base], base + np.cumsum(log_ratio)))

    @staticmethod
    def pmf_table(x_max, params):
        return np.exp(BetaNB.log_pmf_table(x_max, params))

    @staticmethod
    def _survival(x, r, alpha, beta):
        """P(X > x) for real x > -1 as C * 3F2(1, r+x+1, alpha+x+1; x+2, r+kappa+x+1; 1)"""
        kappa = alpha + beta
        log_c = (betaln(beta + r, alpha + x + 1.0) - math.log(x + 1.0)
                 - betaln(r, x + 1.0) - betaln(alpha, beta))
        hyp = hyp3f2_unit(r + x + 1.0, alpha + x + 1.0, x + 2.0, r + kappa + x + 1.0)
        return math.exp(log_c) * hyp

    @staticmethod
    def cdf(x, params):
        """P(X <= x) from the 3F2 closed form or its mirrored counterpart.

        The mirror uses G(x | r, mu, kappa) = 1 - G(r - 1 | x + 1, 1 - mu, kappa),
        so the second branch is the survival of the mirrored distribution.
        """
        if x < 0:
            return 0.0
        r, a, b = params.r, params.alpha, params.beta
        direct = r <= x * (1.0 - params.mu) / params.mu
        branches = (True, False) if direct else (False, True)
        for use_direct in branches:
            try:
                if use_direct:
                    value = 1.0 - BetaNB._survival(x, r, a, b)
                else:
                    value = BetaNB._survival(r - 1.0, x + 1.0, b, a)
                if math.isfinite(value):
                    return min(1.0, max(0.0, value))
            except (NonConvergence, NumericFailure, DomainError) as exc:
                logger.debug(f"BetaNB cdf branch direct={use_direct} failed at x={x}: {exc}")
        logger.debug(f"BetaNB cdf falling back to summation at x={x}, {params}")
        return min(1.0, math.fsum(BetaNB.pmf_table(int(x), params)))


def _mcnb_log_base(r, p):
    """ln f(0), ln f(1) for MCNB, vectorised over r"""
    r = np.asarray(r, dtype=float)
    lp = math.log(p)
    lq = math.log(p + 1.0 / p - 1.0)
    rlq = r * lq
    with np.errstate(divide='ignore'):
        log_bracket = np.where(rlq > _MCNB_GUARD, rlq, np.log(np.expm1(np.minimum(rlq, _MCNB_GUARD))))
    log_norm = np.log(-np.expm1(r * lp))
    lf0 = r * lp + log_bracket - log_norm
    lf1 = np.log(r) + 2.0 * math.log1p(-p) + r * lp + (r - 1.0) * lq - log_norm
    return lf0, lf1


def mcnb_log_tables(x_max, r, p):
    """Log-PMF rows of MCNB for every r in ``r``, shape (len(r), x_max + 1).

    Runs the two-term recurrence in linear space with a per-row log offset
    that is rebased whenever values drift far from 1.
    """
    if x_max < 0:
        raise DomainError(f"x_max must be >= 0, got {x_max}")
    r = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.empty((r.size, x_max + 1))
    lf0, lf1 = _mcnb_log_base(r, p)
    out[:, 0] = lf0
    if x_max == 0:
        return out
    out[:, 1] = lf1
    offset = np.maximum(lf0, lf1)
    g0 = np.exp(lf0 - offset)
    g1 = np.exp(lf1 - offset)
    p2 = p * p
    for x in range(2, x_max + 1):
        denom = x * (p2 - p + 1.0)
        alpha = (p2 * (r + x - 1.0) - 2.0 * p * r + r + x - 1.0) / denom
        beta = p * (2.0 - x) / denom
        g2 = alpha * p * g1 + beta * p2 * g0
        if np.any(g2 < 0):
            worst = np.min(g2 * np.exp(offset))
            if worst < -1e-12:
                raise NumericFailure(f"MCNB recurrence went negative ({worst}) at x={x}, p={p}")
            g2 = np.maximum(g2, 0.0)
        with np.errstate(divide='ignore'):
            out[:, x] = np.log(g2) + offset
        rebase = (g2 > _RESCALE) | ((g2 < 1.0 / _RESCALE) & (g2 > 0))
        if np.any(rebase):
            scale = np.where(rebase, g2, 1.0)
            g1 = g1 / scale
            g2 = g2 / scale
            offset = offset + np.log(scale)
        g0, g1 = g1, g2
    return out


class MCNB:
    @staticmethod
    def log_pmf_table(x_max, params):
        return mcnb_log_tables(x_max, [params.r], params.p)[0]

    @staticmethod
    def pmf_table(x_max, params):
        return np.exp(MCNB.log_pmf_table(x_max, params))

    @staticmethod
    def logpmf(x, params):
        x = np.asarray(x, dtype=int)
        table = MCNB.log_pmf_table(int(np.max(x)) if x.size else 0, params)
        return table[x]

    @staticmethod
    def cdf(x, params):
        if x < 0:
            return 0.0
        return min(1.0, math.fsum(MCNB.pmf_table(int(x), params)))


_FAMILIES = {ModelKind.NB: NB, ModelKind.BETANB: BetaNB, ModelKind.MCNB: MCNB}


def family(kind):
    return _FAMILIES[ModelKind.parse(kind)]


def truncate_pmf(pmf_table, cdf_at, l):
    """Zero entries below l and renormalize the rest by 1 - G(l - 1)"""
    norm = 1.0 - cdf_at
    if not norm > 0:
        raise DomainError(f"truncation at l={l} leaves no mass (1 - G(l-1) = {norm})")
    table = np.array(pmf_table, dtype=float)
    table[:l] = 0.0
    table[l:] /= norm
    return table


def log_truncated_pmf_table(spec, x_max):
    """Log-PMF of the truncated distribution on 0..x_max (-inf below l)"""
    fam = _FAMILIES[spec.kind]
    l = spec.trunc.l
    table = fam.log_pmf_table(x_max, spec.params)
    table = table - log_survival_below(spec)
    table[:min(l, x_max + 1)] = -np.inf
    return table


def log_survival_below(spec):
    """ln(1 - G(l - 1)), zero when there is no truncation"""
    l = spec.trunc.l
    if l == 0:
        return 0.0
    below = _FAMILIES[spec.kind].cdf(l - 1, spec.params)
    if not below < 1.0:
        raise DomainError(f"truncation at l={l} leaves no mass for {spec.params}")
    return math.log1p(-below)


def moments(spec):
    """Untruncated (mean, variance)"""
    prm = spec.params
    if spec.kind is ModelKind.NB:
        r, p = prm.r, prm.p
        return r * p / (1.0 - p), r * p / (1.0 - p) ** 2
    if spec.kind is ModelKind.MCNB:
        r, p = prm.r, prm.p
        pr = p ** r
        mean = r * p / (1.0 - pr)
        var = p * r * (p * p + (p * p * (r - 1.0) - p * r - 1.0) * pr + 1.0) / ((1.0 - p) * (1.0 - pr) ** 2)
        return mean, var
    r, a, b = prm.r, prm.alpha, prm.beta
    if not b > 2.0:
        raise DomainError(f"BetaNB variance is infinite unless (1 - mu) kappa > 2, got {b}")
    mean = r * a / (b - 1.0)
    var = r * a * (r + b - 1.0) * (a + b - 1.0) / ((b - 2.0) * (b - 1.0) ** 2)
    return mean, var


def truncated_mean(spec):
    """E[X | X >= l] from the closed-form mean minus the removed head"""
    l = spec.trunc.l
    prm = spec.params
    if spec.kind is ModelKind.BETANB:
        if not prm.beta > 1.0:
            raise DomainError(f"BetaNB mean is infinite unless (1 - mu) kappa > 1, got {prm.beta}")
        mean = prm.r * prm.alpha / (prm.beta - 1.0)
    elif spec.kind is ModelKind.MCNB:
        mean = prm.r * prm.p / (1.0 - prm.p ** prm.r)
    else:
        mean = prm.r * prm.p / (1.0 - prm.p)
    if l == 0:
        return mean
    head = _FAMILIES[spec.kind].pmf_table(l - 1, prm)
    removed = math.fsum(np.arange(l) * head)
    return (mean - removed) / (1.0 - math.fsum(head))


def _mp_pmf_terms(spec, upto):
    """Untruncated PMF values 0..upto - 1 as mpmath numbers at the current precision"""
    prm = spec.params
    terms = []
    if spec.kind is ModelKind.NB:
        r, p = mpmath.mpf(prm.r), mpmath.mpf(prm.p)
        f = (1 - p) ** r
        for k in range(upto):
            if k:
                f = f * p * (r + k - 1) / k
            terms.append(f)
    elif spec.kind is ModelKind.BETANB:
        r, a, b = mpmath.mpf(prm.r), mpmath.mpf(prm.mu) * prm.kappa, (1 - mpmath.mpf(prm.mu)) * prm.kappa
        kappa = a + b
        f = mpmath.exp(mpmath.loggamma(kappa) + mpmath.loggamma(b + r)
                       - mpmath.loggamma(b) - mpmath.loggamma(kappa + r))
        for k in range(upto):
            if k:
                f = f * (k + r - 1) * (k + a - 1) / (k * (k + kappa + r - 1))
            terms.append(f)
    else:
        r, p = mpmath.mpf(prm.r), mpmath.mpf(prm.p)
        q = p + 1 / p - 1
        pr = p ** r
        f0 = pr * (q ** r - 1) / (1 - pr)
        f1 = r * (p - 1) ** 2 * pr * q ** (r - 1) / (1 - pr)
        for k in range(upto):
            if k == 0:
                terms.append(f0)
            elif k == 1:
                terms.append(f1)
            else:
                denom = (p - 1) * p * k + k
                alpha = (p * p * (r + k - 1) - 2 * p * r + r + k - 1) / denom
                beta = p * (2 - k) / denom
                terms.append(alpha * p * terms[-1] + beta * p * p * terms[-2])
    return terms


def right_tail_logp(x, spec):
    """ln P(Z >= x) under the truncated distribution.

    A compensated double-precision sum is used while the tail is large;
    below Config.EXTENDED_THRESHOLD the PMF is re-summed with mpmath at a
    precision wide enough to resolve 1 - head down to the tail's magnitude.
    """
    l = spec.trunc.l
    if x < l:
        raise DomainError(f"x={x} lies below the truncation threshold {l}")
    if x == l:
        return 0.0
    log_table = log_truncated_pmf_table(spec, x)
    head = math.fsum(np.exp(log_table[l:x]))
    tail = 1.0 - head
    if tail > Config.EXTENDED_THRESHOLD:
        return math.log(tail)

    # the point mass at x bounds the tail from below and sets the precision
    log_fx = float(log_table[x])
    magnitude = -log_fx / math.log(2.0) if math.isfinite(log_fx) else 4096.0
    bits = max(Config.PRECISION_BITS, int(magnitude) + 64 + int(x).bit_length())
    with mpmath.workprec(bits):
        terms = _mp_pmf_terms(spec, x)
        below = mpmath.fsum(terms[:l])
        inside = mpmath.fsum(terms[l:x])
        tail_mp = (1 - below - inside) / (1 - below)
        if tail_mp <= 0:
            logger.warning(f"extended tail underflowed at x={x}; reporting the point mass bound")
            return log_fx
        return float(mpmath.log(tail_mp))
