"""Continued-fraction special functions.

Regularized incomplete beta (Tretter-Walster fraction) and 3F2 at unit
argument, both evaluated with the modified Lentz method. Everything here
runs in double precision.
"""
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

from scipy.special import betaln

from config import Config
from allelix.errors import DomainError, NonConvergence, NumericFailure

TINY = 1e-300
LEADING_SENTINEL = 1e-30


@dataclass(frozen=True)
class ContinuedFraction:
    """s + r(1)/(q(1) + r(2)/(q(2) + ...))"""
    s: float
    term_at: Callable[[int], Tuple[float, float]]
    eps: float = Config.CF_EPS
    max_iter: int = Config.CF_MAX_ITER

    def __post_init__(self):
        if not self.eps > 0:
            raise DomainError(f"eps must be positive, got {self.eps}")
        if self.max_iter < 1:
            raise DomainError(f"max_iter must be >= 1, got {self.max_iter}")


def _guard(value):
    if abs(value) < TINY:
        return TINY if value >= 0 else -TINY
    return value


def lentz_eval(cf):
    """Evaluate a continued fraction with the modified Lentz method.

    Args:
        cf: ContinuedFraction to evaluate

    Returns:
        The value of the fraction (the caller applies any outer multiplier)
    """
    sentinel = cf.s == 0
    f = LEADING_SENTINEL if sentinel else float(cf.s)
    c = f
    d = 0.0
    for j in range(1, cf.max_iter + 1):
        r, q = cf.term_at(j)
        if r == 0:
            break
        d = _guard(q + r * d)
        c = _guard(q + r / c)
        d = 1.0 / d
        delta = c * d
        f *= delta
        if not (math.isfinite(f) and math.isfinite(delta)):
            raise NumericFailure(f"continued fraction produced {f} at term {j}")
        if abs(delta - 1.0) < cf.eps:
            break
    else:
        raise NonConvergence(f"continued fraction did not converge in {cf.max_iter} terms")
    return f - LEADING_SENTINEL if sentinel else f


def _tretter_fraction(z, a, b):
    t = b * z / (a * (1.0 - z))
    at = a * t
    lead = 2.0 * (at + 2.0 * b)

    def term_at(n):
        if n == 1:
            r = at * (b - 1.0) / (b * (a + 1.0))
        else:
            r = (at * at * (n - 1.0) * (a + b + n - 2.0) * (a + n - 1.0) * (b - n)
                 / (b * b * (a + 2 * n - 3.0) * (a + 2 * n - 2.0) ** 2 * (a + 2 * n - 1.0)))
        q = ((lead * n * n + lead * (a - 1.0) * n + a * b * (a - 2.0 - at))
             / (b * (a + 2 * n - 2.0) * (a + 2 * n)))
        return r, q

    return ContinuedFraction(s=1.0, term_at=term_at)


def _reg_inc_beta_direct(z, a, b):
    log_c = a * math.log(z) + (b - 1.0) * math.log1p(-z) - math.log(a) - betaln(a, b)
    c = math.exp(log_c)
    if c == 0.0:
        return 0.0
    return c * lentz_eval(_tretter_fraction(z, a, b))


def reg_inc_beta(z, a, b, mirror: Optional[bool] = None):
    """Regularized incomplete beta I_z(a, b).

    Args:
        z: argument in (0, 1)
        a, b: positive shape parameters
        mirror: evaluate as 1 - I_{1-z}(b, a). None picks the branch on
            which the fraction converges fastest.

    Returns:
        I_z(a, b) clamped to [0, 1]
    """
    if not (0.0 < z < 1.0) or not (a > 0.0 and b > 0.0):
        raise DomainError(f"reg_inc_beta needs z in (0,1) and a, b > 0; got z={z}, a={a}, b={b}")
    if mirror is None:
        mirror = z > (a + 1.0) / (a + b + 2.0)
    if mirror:
        value = 1.0 - _reg_inc_beta_direct(1.0 - z, b, a)
    else:
        value = _reg_inc_beta_direct(z, a, b)
    return min(1.0, max(0.0, value))


def _hyp3f2_fraction(a1, a2, b1, b2, max_iter):
    def r_q(n):
        i, k = n % 3, n // 3
        if i == 0:
            if k == 0:
                return 1.0, 1.0
            r = -((k + b1 - a2 - 1.0) * (k + b2 - a2 - 1.0)) / ((2 * k - 1.0) * (2 * k + a2 - 1.0))
            q = (((3 * k + b1 - 1.0) * (3 * k + b2 - 1.0) - 2 * k * (2 * k + a2))
                 / (2 * k * (2 * k + a1 - 1.0)))
            return r, q
        if i == 1:
            r = -1.0 if k == 0 else -((k + b1 - 1.0) * (k + b2 - 1.0)) / (2 * k * (2 * k + a1 - 1.0))
            q = (((3 * k + b1) * (3 * k + b2) - (2 * k + 1.0) * (2 * k + a1))
                 / ((2 * k + a1) * (2 * k + a2)))
            return r, q
        r = -((k + b1 - a1) * (k + b2 - a1)) / ((2 * k + a1) * (2 * k + a2))
        q = (((3 * k + b1 + 1.0) * (3 * k + b2 + 1.0) - (2 * k + a1 + 1.0) * (2 * k + a2 + 1.0))
             / ((2 * k + 1.0) * (2 * k + a2 + 1.0)))
        return r, q

    return ContinuedFraction(s=0.0, term_at=lambda j: r_q(j - 1), max_iter=max_iter)


def hyp3f2_unit(a1, a2, b1, b2, max_iter=None):
    """3F2(1, a1, a2; b1, b2; 1) via its interleaved continued fraction.

    Each series step spans three fraction levels, so the default
    iteration cap is three times the Lentz default.
    """
    if not (b1 > 0 and b2 > 0 and a1 >= 0 and a2 >= 0):
        raise DomainError(f"hyp3f2_unit needs positive parameters; got {(a1, a2, b1, b2)}")
    if not b1 + b2 > a1 + a2 + 1.0:
        raise DomainError(f"3F2 series diverges for a=({a1}, {a2}), b=({b1}, {b2})")
    if a1 == 0 or a2 == 0:
        return 1.0
    cap = max_iter if max_iter is not None else 3 * Config.CF_MAX_ITER
    return lentz_eval(_hyp3f2_fraction(a1, a2, b1, b2, cap))
