"""Scoring models built on the base distributions.

Linear reference bias r(x) = b*x + a, BAD-driven mixture components and
the r-reparametrization that keeps BetaNB and MCNB means in line with NB.
"""
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.special import betaln, gammaln

from allelix.errors import DomainError
from allelix.models.distributions import (
    DistributionSpec, ModelKind, family, log_survival_below, mcnb_log_tables, truncated_mean
)


@dataclass(frozen=True)
class LinearBias:
    b: float
    a: float

    def __post_init__(self):
        if not self.b > 0:
            raise DomainError(f"bias slope b must be positive, got {self.b}")

    def r(self, x):
        return self.b * np.asarray(x, dtype=float) + self.a


@dataclass(frozen=True)
class BadValue:
    bad: float

    def __post_init__(self):
        if not self.bad >= 1.0:
            raise DomainError(f"BAD must be >= 1, got {self.bad}")

    @property
    def p(self):
        return bad_to_p(self)


def bad_to_p(bad):
    value = bad.bad if isinstance(bad, BadValue) else float(bad)
    if not value >= 1.0:
        raise DomainError(f"BAD must be >= 1, got {value}")
    return value / (value + 1.0)


@dataclass(frozen=True)
class MixtureParams:
    """w * f(x | p) + (1 - w) * f(x | 1 - p)"""
    w: float
    base: Tuple[DistributionSpec, DistributionSpec]

    def __post_init__(self):
        if not 0.0 <= self.w <= 1.0:
            raise DomainError(f"mixture weight must lie in [0, 1], got {self.w}")
        if self.base[0].trunc != self.base[1].trunc:
            raise DomainError("mixture components must share a truncation threshold")


def reparametrize_r(r, kind, p, kappa=None):
    """Rescale raw r so BetaNB and MCNB means match NB; NB is untouched.

    Works elementwise on arrays; entries with no valid rescaling become NaN.
    """
    kind = ModelKind.parse(kind)
    r = np.asarray(r, dtype=float)
    if kind is ModelKind.NB:
        return r
    if kind is ModelKind.MCNB:
        return r * (1.0 - p ** r) / (1.0 - p)
    tail = (1.0 - p) * kappa
    scaled = r * (tail - 1.0) / tail
    return np.where(scaled > 0, scaled, np.nan)


def effective_r(x, bias, kind, p, kappa=None):
    """r fed to the distribution for a fixed count x under a mixture component with probability p"""
    raw = float(bias.r(x))
    if not raw > 0:
        raise DomainError(f"b*x + a = {raw} is not positive at x={x}")
    value = float(reparametrize_r(raw, kind, p, kappa))
    if not value > 0:
        raise DomainError(f"reparametrized r is not positive (p={p}, kappa={kappa})")
    return value


def component_spec(kind, r, p, kappa, l):
    return DistributionSpec.make(kind, r, p, kappa=kappa, l=l)


def mixture_logpmf(x, mix):
    """ln(w f1(x) + (1 - w) f2(x)) for truncated components"""
    logs = []
    for spec in mix.base:
        if x < spec.trunc.l:
            logs.append(-np.inf)
        else:
            logs.append(float(family(spec.kind).logpmf(x, spec.params)) - log_survival_below(spec))
    if mix.w == 1.0:
        return logs[0]
    if mix.w == 0.0:
        return logs[1]
    return float(np.logaddexp(math.log(mix.w) + logs[0], math.log1p(-mix.w) + logs[1]))


def build_mixture(fixed, bias, kind, p, w, kappa=None, l=0):
    """Mixture for one observation whose conditioning count is ``fixed``"""
    specs = tuple(
        component_spec(kind, effective_r(fixed, bias, kind, q, kappa), q, kappa, l)
        for q in (p, 1.0 - p)
    )
    return MixtureParams(w, specs)


def _component_logpmf(kind, variable, r, p, kappa, l):
    """Truncated log-PMF of ``variable`` given per-observation r (arrays of equal length)"""
    if kind is ModelKind.NB:
        logpmf = (gammaln(variable + r) - gammaln(r) - gammaln(variable + 1.0)
                  + r * math.log1p(-p) + variable * math.log(p))
    elif kind is ModelKind.BETANB:
        a, b = p * kappa, (1.0 - p) * kappa
        logpmf = (gammaln(variable + r) - gammaln(r) - gammaln(variable + 1.0)
                  + betaln(a + variable, b + r) - betaln(a, b))
    else:
        uniq, inverse = np.unique(r, return_inverse=True)
        tables = mcnb_log_tables(int(variable.max()), uniq, p)
        logpmf = tables[inverse, variable.astype(int)]
    if l == 0:
        return logpmf
    uniq, inverse = np.unique(r, return_inverse=True)
    norms = np.array([
        log_survival_below(component_spec(kind, float(ru), p, kappa, l)) for ru in uniq
    ])
    out = logpmf - norms[inverse]
    return np.where(variable >= l, out, -np.inf)


def mixture_logpmf_array(variable, fixed, bias, kind, p, w, kappa=None, l=0):
    """Vectorised mixture log-PMF over observations (variable given fixed).

    Raises DomainError when any reparametrized r is invalid.
    """
    kind = ModelKind.parse(kind)
    variable = np.asarray(variable, dtype=float)
    raw = bias.r(fixed)
    if np.any(raw <= 0):
        raise DomainError("b*x + a is not positive inside the window")
    parts = []
    for q in ((p,) if p == 0.5 else (p, 1.0 - p)):
        r = reparametrize_r(raw, kind, q, kappa)
        if np.any(~np.isfinite(r)):
            raise DomainError(f"reparametrized r invalid for p={q}, kappa={kappa}")
        parts.append(_component_logpmf(kind, variable, r, q, kappa, l))
    if len(parts) == 1 or w == 1.0:
        return parts[0]
    if w == 0.0:
        return parts[1]
    return np.logaddexp(math.log(w) + parts[0], math.log1p(-w) + parts[1])


def mixture_mean(fixed, bias, kind, p, w, kappa=None, l=0):
    """Truncated mixture expectation E[x] for a fixed conditioning count"""
    mix = build_mixture(fixed, bias, kind, p, w, kappa, l)
    means = [truncated_mean(spec) for spec in mix.base]
    return mix.w * means[0] + (1.0 - mix.w) * means[1]
